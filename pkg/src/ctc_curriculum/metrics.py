"""Length-normalized evaluation costs: per-character NLL and character error rate.

Both are ratios of sums over an evaluation set, so any partition of the set
can be reduced by summing numerators and denominators separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .ctc import best_path_decode, ctc_nll_and_grad_from_log

__all__ = ["EvalReport", "edit_distance", "edit_distance_matrix", "norm_nll", "cer", "evaluate"]


@dataclass(frozen=True)
class EvalReport:
    norm_nll: float
    cer: float
    total_target_chars: int
    total_nll: float
    total_edits: int


@numba.njit(cache=True)
def _levenshtein(a, na, b, nb, row):
    for j in range(nb + 1):
        row[j] = j
    for i in range(1, na + 1):
        diag = row[0]
        row[0] = i
        for j in range(1, nb + 1):
            up = row[j]
            best = diag + (a[i - 1] != b[j - 1])
            if up + 1 < best:
                best = up + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            diag = up
    return row[nb]


@numba.njit(cache=True)
def _pairwise(A, la, B, lb):
    out = np.empty((A.shape[0], B.shape[0]), dtype=np.int64)
    row = np.empty(B.shape[1] + 1, dtype=np.int64)
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            out[i, j] = _levenshtein(A[i], la[i], B[j], lb[j], row)
    return out


def _as_labels(seq: Sequence[int]) -> np.ndarray:
    if isinstance(seq, str):
        return np.frombuffer(seq.encode("utf-32-le"), dtype=np.uint32).astype(np.int64)
    return np.asarray(seq, dtype=np.int64).reshape(-1)


def edit_distance(a: Sequence[int], b: Sequence[int]) -> int:
    """Levenshtein distance with unit insertion, deletion and substitution costs.

    Accepts label sequences or plain strings.
    """
    a = _as_labels(a)
    b = _as_labels(b)
    return int(_levenshtein(a, a.size, b, b.size, np.empty(b.size + 1, dtype=np.int64)))


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    arrays = [_as_labels(s) for s in seqs]
    lengths = np.array([x.size for x in arrays], dtype=np.int64)
    out = np.zeros((len(arrays), max(1, int(lengths.max(initial=0)))), dtype=np.int64)
    for i, x in enumerate(arrays):
        out[i, : x.size] = x
    return out, lengths


def edit_distance_matrix(rows: Sequence[Sequence[int]], cols: Sequence[Sequence[int]]) -> np.ndarray:
    """All pairwise distances, ``out[i, j] = edit_distance(rows[i], cols[j])``."""
    A, la = _pad(rows)
    B, lb = _pad(cols)
    return _pairwise(A, la, B, lb)


def norm_nll(per_sample: Iterable[tuple[float, int]]) -> float:
    """``sum(nll) / sum(target_len)``; not a mean of per-sample ratios.

    Exact numeric types (``int``, ``Fraction``) are preserved in the sum.
    """
    total_nll = 0
    total_len = 0
    for nll, length in per_sample:
        total_nll += nll
        total_len += length
    if total_len <= 0:
        raise ValueError("norm_nll needs at least one nonempty target")
    return total_nll / total_len


def cer(pairs: Iterable[tuple[Sequence[int], Sequence[int]]]) -> float:
    total_edits = 0
    total_len = 0
    for target, prediction in pairs:
        total_edits += edit_distance(target, prediction)
        total_len += len(target)
    if total_len <= 0:
        raise ValueError("cer needs at least one nonempty target")
    return total_edits / total_len


def evaluate(state, corpus) -> EvalReport:
    """Score a model snapshot on every sample of ``corpus``."""
    from .model import log_posteriors

    total_nll = 0.0
    total_edits = 0
    total_len = 0
    for sample in corpus:
        logp = log_posteriors(state, sample.frames)
        nll, _ = ctc_nll_and_grad_from_log(logp, sample.target)
        total_nll += nll
        total_edits += edit_distance(sample.target, best_path_decode(logp))
        total_len += len(sample.target)
    if total_len <= 0:
        raise ValueError("evaluation set has no target characters")
    return EvalReport(
        norm_nll=total_nll / total_len,
        cer=total_edits / total_len,
        total_target_chars=total_len,
        total_nll=total_nll,
        total_edits=total_edits,
    )
