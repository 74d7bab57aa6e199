"""Connectionist temporal classification: loss, gradient and best-path decoding.

A lattice is a ``T x N`` matrix of per-frame label probabilities whose last
column is the blank label. All recursions run in log space over the
blank-augmented target ``[blank, y1, blank, y2, ..., yL, blank]``.
"""

from __future__ import annotations

from typing import Sequence

import numba
import numpy as np

__all__ = [
    "InfeasibleTargetError",
    "min_frames",
    "check_lattice",
    "ctc_nll",
    "ctc_grad",
    "ctc_nll_and_grad_from_log",
    "best_path_decode",
    "collapse",
]

NEG_INF = -np.inf


class InfeasibleTargetError(ValueError):
    """The target cannot be aligned to the given number of frames."""


def min_frames(target: Sequence[int]) -> int:
    """Fewest frames able to emit ``target``: one per label plus a blank per adjacent repeat."""
    n = len(target)
    repeats = sum(1 for a, b in zip(target[:-1], target[1:]) if a == b)
    return n + repeats


def check_lattice(lattice: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    lattice = np.asarray(lattice, dtype=np.float64)
    if lattice.ndim != 2:
        raise ValueError(f"lattice must be 2-D (T x N), got shape {lattice.shape}")
    T, N = lattice.shape
    if T < 1 or N < 2:
        raise ValueError(f"lattice needs T >= 1 and N >= 2, got {lattice.shape}")
    if np.any(lattice < 0.0) or np.any(lattice > 1.0):
        raise ValueError("lattice entries must lie in [0, 1]")
    if np.any(np.abs(lattice.sum(axis=1) - 1.0) > atol):
        raise ValueError("lattice rows must sum to 1")
    return lattice


def _as_target(target: Sequence[int], n_labels: int) -> np.ndarray:
    arr = np.asarray(target, dtype=np.int64).reshape(-1)
    blank = n_labels - 1
    if arr.size and (arr.min() < 0 or arr.max() >= blank):
        raise ValueError(f"target labels must lie in [0, {blank - 1}] (blank={blank} excluded)")
    return arr


def _check_feasible(T: int, target: np.ndarray) -> None:
    need = min_frames(target.tolist())
    if T < need:
        raise InfeasibleTargetError(
            f"target of length {target.size} needs at least {need} frames, lattice has {T}"
        )


@numba.njit(cache=True)
def _lse(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@numba.njit(cache=True)
def _extend(target, blank):
    S = 2 * target.shape[0] + 1
    ext = np.full(S, blank, dtype=np.int64)
    for i in range(target.shape[0]):
        ext[2 * i + 1] = target[i]
    return ext


@numba.njit(cache=True)
def _alpha(logp, ext, blank):
    T = logp.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = logp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = logp[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _lse(acc, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = _lse(acc, alpha[t - 1, s - 2])
            if acc != NEG_INF:
                alpha[t, s] = acc + logp[t, ext[s]]
    return alpha


@numba.njit(cache=True)
def _beta(logp, ext, blank):
    T = logp.shape[0]
    S = ext.shape[0]
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = logp[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = logp[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            acc = beta[t + 1, s]
            if s + 1 < S:
                acc = _lse(acc, beta[t + 1, s + 1])
            if s + 2 < S and ext[s] != blank and ext[s] != ext[s + 2]:
                acc = _lse(acc, beta[t + 1, s + 2])
            if acc != NEG_INF:
                beta[t, s] = acc + logp[t, ext[s]]
    return beta


@numba.njit(cache=True)
def _log_likelihood(alpha):
    T, S = alpha.shape
    ll = alpha[T - 1, S - 1]
    if S > 1:
        ll = _lse(ll, alpha[T - 1, S - 2])
    return ll


@numba.njit(cache=True)
def _nll_kernel(logp, target):
    blank = logp.shape[1] - 1
    ext = _extend(target, blank)
    return -_log_likelihood(_alpha(logp, ext, blank))


@numba.njit(cache=True)
def _nll_grad_kernel(logp, target):
    T, N = logp.shape
    blank = N - 1
    ext = _extend(target, blank)
    alpha = _alpha(logp, ext, blank)
    ll = _log_likelihood(alpha)
    grad = np.exp(logp)
    if ll == NEG_INF:
        return np.inf, grad
    beta = _beta(logp, ext, blank)
    S = ext.shape[0]
    for t in range(T):
        for s in range(S):
            a = alpha[t, s]
            b = beta[t, s]
            if a == NEG_INF or b == NEG_INF:
                continue
            # alpha and beta both include the emission at t
            grad[t, ext[s]] -= np.exp(a + b - logp[t, ext[s]] - ll)
    return -ll, grad


def _safe_log(lattice: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(lattice)


def ctc_nll(lattice: np.ndarray, target: Sequence[int]) -> float:
    """Negative log-likelihood of ``target`` summed over every alignment.

    Returns ``inf`` when every alignment has zero probability. Raises
    :class:`InfeasibleTargetError` when the target is too long for the lattice.
    """
    lattice = check_lattice(lattice)
    tgt = _as_target(target, lattice.shape[1])
    _check_feasible(lattice.shape[0], tgt)
    return float(_nll_kernel(_safe_log(lattice), tgt))


def ctc_grad(lattice: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Gradient of :func:`ctc_nll` w.r.t. the pre-softmax activations of each frame.

    Equals the lattice minus the per-frame label occupancy posterior, so each
    row sums to zero.
    """
    lattice = check_lattice(lattice)
    tgt = _as_target(target, lattice.shape[1])
    _check_feasible(lattice.shape[0], tgt)
    _, grad = _nll_grad_kernel(_safe_log(lattice), tgt)
    return grad


def ctc_nll_and_grad_from_log(log_probs: np.ndarray, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """Loss and activation gradient from log-softmax outputs; used on the training path."""
    log_probs = np.ascontiguousarray(log_probs, dtype=np.float64)
    tgt = _as_target(target, log_probs.shape[1])
    _check_feasible(log_probs.shape[0], tgt)
    nll, grad = _nll_grad_kernel(log_probs, tgt)
    return float(nll), grad


def collapse(path: Sequence[int], blank: int) -> list[int]:
    """Merge repeated labels, then drop blanks."""
    out: list[int] = []
    prev = None
    for k in path:
        k = int(k)
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return out


def best_path_decode(lattice: np.ndarray) -> list[int]:
    """Greedy decoding: per-frame argmax (lowest id wins ties), collapsed."""
    lattice = np.asarray(lattice)
    if lattice.ndim != 2 or lattice.shape[1] < 2:
        raise ValueError(f"lattice must be T x N with N >= 2, got {lattice.shape}")
    return collapse(np.argmax(lattice, axis=1), lattice.shape[1] - 1)
