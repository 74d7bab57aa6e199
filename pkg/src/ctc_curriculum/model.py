"""Bidirectional LSTM encoder with a softmax output layer, trained by per-sample SGD.

All parameters live in one flat float64 vector; named views into it are
exposed through :meth:`ModelState.views`. Gate order inside every ``4H``
block is input, forget, output, candidate.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numba
import numpy as np

from .ctc import ctc_nll_and_grad_from_log

__all__ = [
    "ModelConfig",
    "ModelState",
    "NonFiniteGradientError",
    "init_model",
    "forward",
    "log_posteriors",
    "loss_and_grad",
    "sgd_step",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


class NonFiniteGradientError(FloatingPointError):
    """Raised when a loss or gradient is NaN/inf; training must not continue."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 16
    hidden_dim: int = 32
    alphabet_size: int = 20
    init_scale: float = 0.1
    learning_rate: float = 0.001
    forget_bias: float = 1.0

    def __post_init__(self) -> None:
        for name in ("input_dim", "hidden_dim", "alphabet_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")

    @property
    def n_outputs(self) -> int:
        """Output width including the blank label."""
        return self.alphabet_size + 1

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        H, D, N = self.hidden_dim, self.input_dim, self.n_outputs
        shapes: list[tuple[str, tuple[int, ...]]] = []
        for d in ("fw", "bw"):
            shapes += [(f"{d}_wx", (4 * H, D)), (f"{d}_wh", (4 * H, H)), (f"{d}_b", (4 * H,))]
        shapes += [("out_w", (N, 2 * H)), ("out_b", (N,))]
        return shapes

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())


class ModelState:
    """Trainable parameters plus the seed that produced them."""

    def __init__(self, config: ModelConfig, params: np.ndarray, seed: int | None = None):
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (config.n_params,):
            raise ValueError(f"expected {config.n_params} parameters, got shape {params.shape}")
        self.config = config
        self.params = params
        self.seed = seed

    def views(self) -> dict[str, np.ndarray]:
        out = {}
        offset = 0
        for name, shape in self.config.layout():
            size = int(np.prod(shape))
            out[name] = self.params[offset : offset + size].reshape(shape)
            offset += size
        return out

    def copy(self) -> "ModelState":
        """Snapshot detached from later in-place updates."""
        return ModelState(self.config, self.params.copy(), self.seed)


def init_model(config: ModelConfig, seed: int) -> ModelState:
    """Uniform init in ``[-init_scale, init_scale]``; forget-gate biases set to ``forget_bias``."""
    rng = np.random.default_rng(seed)
    params = rng.uniform(-config.init_scale, config.init_scale, size=config.n_params)
    state = ModelState(config, params, seed)
    H = config.hidden_dim
    views = state.views()
    for d in ("fw", "bw"):
        views[f"{d}_b"][H : 2 * H] = config.forget_bias
    return state


@numba.njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@numba.njit(cache=True)
def _lstm_scan(xproj, wh, reverse):
    """Run one direction. ``xproj`` already holds ``Wx x_t + b``.

    Returns activated gates (T x 4H), cell states and hidden states (T x H),
    indexed by time, not by processing order.
    """
    T = xproj.shape[0]
    H = wh.shape[1]
    gates = np.empty((T, 4 * H))
    cells = np.empty((T, H))
    hidden = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for step in range(T):
        t = T - 1 - step if reverse else step
        for k in range(4 * H):
            acc = xproj[t, k]
            for j in range(H):
                acc += wh[k, j] * h_prev[j]
            if k < 3 * H:
                gates[t, k] = _sigmoid(acc)
            else:
                gates[t, k] = np.tanh(acc)
        for j in range(H):
            c = gates[t, H + j] * c_prev[j] + gates[t, j] * gates[t, 3 * H + j]
            cells[t, j] = c
            hidden[t, j] = gates[t, 2 * H + j] * np.tanh(c)
            c_prev[j] = c
            h_prev[j] = hidden[t, j]
    return gates, cells, hidden


@numba.njit(cache=True)
def _lstm_backprop(dh_out, wh, gates, cells, reverse):
    """Backprop through one direction; returns d(pre-activation) per time step (T x 4H)."""
    T = dh_out.shape[0]
    H = wh.shape[1]
    dpre = np.zeros((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for step in range(T - 1, -1, -1):
        t = T - 1 - step if reverse else step
        tp = t + 1 if reverse else t - 1
        for j in range(H):
            i_g = gates[t, j]
            f_g = gates[t, H + j]
            o_g = gates[t, 2 * H + j]
            g_g = gates[t, 3 * H + j]
            tc = np.tanh(cells[t, j])
            dh = dh_out[t, j] + dh_next[j]
            dc = dh * o_g * (1.0 - tc * tc) + dc_next[j]
            c_prev = cells[tp, j] if step > 0 else 0.0
            dpre[t, j] = dc * g_g * i_g * (1.0 - i_g)
            dpre[t, H + j] = dc * c_prev * f_g * (1.0 - f_g)
            dpre[t, 2 * H + j] = dh * tc * o_g * (1.0 - o_g)
            dpre[t, 3 * H + j] = dc * i_g * (1.0 - g_g * g_g)
            dc_next[j] = dc * f_g
        for j in range(H):
            acc = 0.0
            for k in range(4 * H):
                acc += wh[k, j] * dpre[t, k]
            dh_next[j] = acc
    return dpre


def _check_frames(state: ModelState, frames: np.ndarray) -> np.ndarray:
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != state.config.input_dim:
        raise ValueError(
            f"frames must have shape (T, {state.config.input_dim}), got {frames.shape}"
        )
    if frames.shape[0] < 1:
        raise ValueError("frames must contain at least one time step")
    return frames


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _encode(state: ModelState, frames: np.ndarray):
    v = state.views()
    cache = {}
    hs = []
    for d, reverse in (("fw", False), ("bw", True)):
        xproj = frames @ v[f"{d}_wx"].T + v[f"{d}_b"]
        gates, cells, hidden = _lstm_scan(xproj, v[f"{d}_wh"], reverse)
        cache[d] = (gates, cells, hidden)
        hs.append(hidden)
    hcat = np.concatenate(hs, axis=1)
    logits = hcat @ v["out_w"].T + v["out_b"]
    return _log_softmax(logits), hcat, cache


def log_posteriors(state: ModelState, frames: np.ndarray) -> np.ndarray:
    """Per-frame log label posteriors (T x N)."""
    frames = _check_frames(state, frames)
    return _encode(state, frames)[0]


def forward(state: ModelState, frames: np.ndarray) -> np.ndarray:
    """Row-stochastic posterior lattice (T x N); the last column is blank."""
    return np.exp(log_posteriors(state, frames))


def loss_and_grad(state: ModelState, frames: np.ndarray, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """CTC negative log-likelihood and its gradient w.r.t. the flat parameter vector."""
    frames = _check_frames(state, frames)
    logp, hcat, cache = _encode(state, frames)
    nll, dlogits = ctc_nll_and_grad_from_log(logp, target)

    v = state.views()
    grad = np.zeros_like(state.params)
    g = ModelState(state.config, grad).views()
    H = state.config.hidden_dim
    g["out_w"][...] = dlogits.T @ hcat
    g["out_b"][...] = dlogits.sum(axis=0)
    dh = dlogits @ v["out_w"]
    for col, (d, reverse) in enumerate((("fw", False), ("bw", True))):
        gates, cells, hidden = cache[d]
        dpre = _lstm_backprop(
            np.ascontiguousarray(dh[:, col * H : (col + 1) * H]), v[f"{d}_wh"], gates, cells, reverse
        )
        h_prev = np.zeros_like(hidden)
        if reverse:
            h_prev[:-1] = hidden[1:]
        else:
            h_prev[1:] = hidden[:-1]
        g[f"{d}_wx"][...] = dpre.T @ frames
        g[f"{d}_wh"][...] = dpre.T @ h_prev
        g[f"{d}_b"][...] = dpre.sum(axis=0)
    return nll, grad


def sgd_step(
    state: ModelState, frames: np.ndarray, target: Sequence[int], lr: float | None = None
) -> tuple[ModelState, float]:
    """One vanilla SGD update, in place. Returns the state and the pre-update loss."""
    lr = state.config.learning_rate if lr is None else lr
    if lr < 0:
        raise ValueError("learning rate must be >= 0")
    nll, grad = loss_and_grad(state, frames, target)
    if not np.isfinite(nll) or not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(
            f"non-finite loss/gradient (nll={nll!r}, |target|={len(target)}, T={len(frames)})"
        )
    if lr:
        state.params -= lr * grad
    return state, nll


def save_checkpoint(path: str | Path, state: ModelState, rng_state: dict[str, Any] | None = None) -> None:
    """Write config, flat parameters and an optional ``numpy`` bit-generator state."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(state.config),
        "seed": state.seed,
        "rng_state": rng_state,
    }
    with open(path, "wb") as fh:
        np.savez(fh, params=state.params, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8))


def load_checkpoint(path: str | Path) -> tuple[ModelState, dict[str, Any] | None]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(data["meta"].tobytes().decode())
        params = data["params"].copy()
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    state = ModelState(ModelConfig(**meta["config"]), params, meta["seed"])
    return state, meta["rng_state"]
