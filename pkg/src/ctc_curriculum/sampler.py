"""Length-based curriculum sampling.

A sample with target length ``L`` has shortness ``1 / max(m, L)``. The
curriculum draws sample ``t`` with probability proportional to
``shortness[t] ** lam``, where ``lam`` decays linearly to zero as training
progresses. Draws are made by rejection against the largest shortness, so the
exponent may change between draws without rebuilding any table.

The flat baseline instead walks a fresh random permutation each epoch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CurriculumSchedule",
    "SamplingWeights",
    "shortness",
    "lambda_at",
    "draw_probabilities",
    "draw_curriculum",
    "draw_curriculum_many",
    "CurriculumSampler",
    "BaselineSampler",
    "draw_baseline",
]


def shortness(target_len: int, m_min: int) -> float:
    if m_min < 1:
        raise ValueError(f"m_min must be >= 1, got {m_min}")
    if target_len < 0:
        raise ValueError(f"target_len must be >= 0, got {target_len}")
    return 1.0 / max(m_min, target_len)


@dataclass(frozen=True)
class CurriculumSchedule:
    lambda_start: float = 3.0
    decay_span_targets: int = 1
    m_min: int = 5

    def __post_init__(self) -> None:
        if self.lambda_start < 0:
            raise ValueError("lambda_start must be >= 0")
        if self.decay_span_targets < 1:
            raise ValueError("decay_span_targets must be a positive integer")
        if self.m_min < 1:
            raise ValueError("m_min must be >= 1")

    @classmethod
    def from_epochs(
        cls, total_target_chars: int, decay_epochs: float = 5.0, lambda_start: float = 3.0, m_min: int = 5
    ) -> "CurriculumSchedule":
        """Decay over ``decay_epochs`` passes' worth of browsed target characters."""
        span = int(round(decay_epochs * total_target_chars))
        return cls(lambda_start=lambda_start, decay_span_targets=max(span, 1), m_min=m_min)

    def lambda_at(self, browsed_targets: int) -> float:
        return lambda_at(self, browsed_targets)


def lambda_at(schedule: CurriculumSchedule, browsed_targets: int) -> float:
    remaining = schedule.decay_span_targets - browsed_targets
    if remaining <= 0:
        return 0.0
    return schedule.lambda_start * remaining / schedule.decay_span_targets


@dataclass(frozen=True)
class SamplingWeights:
    shortness: np.ndarray
    max_shortness: float = field(init=False)
    # acceptance ratio shortness / max_shortness, cached for the rejection step
    ratio: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        s = np.asarray(self.shortness, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("SamplingWeights needs a nonempty 1-D shortness array")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("shortness values must be finite and > 0")
        s.setflags(write=False)
        object.__setattr__(self, "shortness", s)
        object.__setattr__(self, "max_shortness", float(s.max()))
        ratio = s / s.max()
        ratio.setflags(write=False)
        object.__setattr__(self, "ratio", ratio)

    @classmethod
    def from_lengths(cls, target_lengths: Sequence[int], m_min: int = 5) -> "SamplingWeights":
        lengths = np.asarray(target_lengths, dtype=np.int64)
        if m_min < 1:
            raise ValueError(f"m_min must be >= 1, got {m_min}")
        if np.any(lengths < 0):
            raise ValueError("target lengths must be >= 0")
        return cls(1.0 / np.maximum(m_min, lengths))

    def __len__(self) -> int:
        return self.shortness.size

    @property
    def min_shortness(self) -> float:
        return float(self.shortness.min())

    def acceptance_bound(self, lam: float) -> float:
        """Lower bound on the per-proposal acceptance probability."""
        return (self.min_shortness / self.max_shortness) ** lam


def draw_probabilities(weights: SamplingWeights, lam: float) -> np.ndarray:
    """Exact draw law ``shortness ** lam / sum(shortness ** lam)``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    # ratio is shortness scaled by a constant, which normalization cancels
    w = weights.ratio**lam
    return w / w.sum()


def draw_curriculum(weights: SamplingWeights, lam: float, rng: np.random.Generator) -> int:
    """One index drawn with replacement from :func:`draw_probabilities`."""
    return _draw(weights, lam, rng)[0]


def _draw(weights: SamplingWeights, lam: float, rng: np.random.Generator) -> tuple[int, int]:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n = len(weights)
    proposals = 0
    while True:
        t = int(rng.integers(n))
        proposals += 1
        if lam == 0.0 or rng.random() < weights.ratio[t] ** lam:
            return t, proposals


def draw_curriculum_many(
    weights: SamplingWeights, lam: float, rng: np.random.Generator, size: int
) -> np.ndarray:
    """``size`` independent draws at a fixed ``lam``, rejection done in vectorised blocks."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n = len(weights)
    if lam == 0.0:
        return rng.integers(n, size=size)
    out = np.empty(size, dtype=np.int64)
    filled = 0
    accept_rate = max(float(np.mean(weights.ratio**lam)), 1e-6)
    while filled < size:
        block = int(min(4 * (size - filled) / accept_rate, 1 << 24)) + 16
        cand = rng.integers(n, size=block)
        keep = cand[rng.random(block) < weights.ratio[cand] ** lam]
        take = min(keep.size, size - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
    return out


class CurriculumSampler:
    """Draws with replacement; the exponent is re-read from the schedule before every draw."""

    def __init__(self, target_lengths: Sequence[int], schedule: CurriculumSchedule, rng: np.random.Generator):
        self.weights = SamplingWeights.from_lengths(target_lengths, schedule.m_min)
        self.schedule = schedule
        self.rng = rng
        self.proposals = 0
        self.draws = 0

    def draw(self, browsed_targets: int) -> tuple[int, float]:
        lam = self.schedule.lambda_at(browsed_targets)
        t, tries = _draw(self.weights, lam, self.rng)
        self.proposals += tries
        self.draws += 1
        return t, lam


class BaselineSampler:
    """Flat sampling without replacement: a fresh permutation per epoch."""

    def __init__(self, n_samples: int, rng: np.random.Generator):
        if n_samples < 1:
            raise ValueError("corpus must be nonempty")
        self.n_samples = n_samples
        self.rng = rng
        self.epoch = 0
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    def draw(self, browsed_targets: int = 0) -> tuple[int, float]:
        if self._cursor >= self._order.size:
            self._order = self.rng.permutation(self.n_samples)
            self._cursor = 0
            self.epoch += 1
        t = int(self._order[self._cursor])
        self._cursor += 1
        return t, 0.0


def draw_baseline(sampler: BaselineSampler) -> int:
    return sampler.draw()[0]
