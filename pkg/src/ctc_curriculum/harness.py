"""Training runs for the three sampling strategies and their convergence logs.

Progress is measured in browsed target characters: the running sum of target
lengths over every sample used for an update. Validation is run each time
that counter crosses a multiple of ``eval_every_targets``.

Strategies differ only in how training samples are drawn:

``baseline``
    uniform without replacement, reshuffled every epoch;
``curriculum``
    with replacement, weighted by shortness raised to a linearly decaying
    exponent;
``by_hand``
    isolated words first, switching to full lines once validation NLL on
    lines stops improving.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .ctc import InfeasibleTargetError
from .dataset import Corpus
from .metrics import evaluate
from .model import ModelConfig, NonFiniteGradientError, init_model, save_checkpoint, sgd_step
from .sampler import BaselineSampler, CurriculumSampler, CurriculumSchedule

__all__ = [
    "STRATEGIES",
    "CSV_HEADER",
    "ExperimentConfig",
    "ConvergencePoint",
    "TrainingAborted",
    "PlateauDetector",
    "run_experiment",
    "run_by_hand",
    "best_markers",
    "StrategySummary",
    "Comparison",
    "compare_strategies",
    "write_csv",
    "format_csv",
    "read_csv",
]

log = logging.getLogger(__name__)

STRATEGIES = ("baseline", "curriculum", "by_hand")
CSV_HEADER = ("browsed_targets", "updates", "lambda", "phase", "train_norm_nll", "valid_norm_nll", "valid_cer")


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss or gradient."""


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = "baseline"
    model: ModelConfig = field(default_factory=ModelConfig)
    lambda_start: float = 3.0
    decay_epochs: float = 5.0
    m_min: int = 5
    total_epochs: float = 10.0
    eval_every_targets: int = 50_000
    seed: int = 0
    min_delta: float = 0.001
    patience: int = 2
    ewma_half_life: float = 10_000.0
    train_path: str | None = None
    valid_path: str | None = None
    words_path: str | None = None
    out_path: str | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.total_epochs <= 0:
            raise ValueError("total_epochs must be > 0")
        if self.eval_every_targets < 1:
            raise ValueError("eval_every_targets must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")

    def schedule(self, total_target_chars: int) -> CurriculumSchedule:
        return CurriculumSchedule.from_epochs(
            total_target_chars, self.decay_epochs, lambda_start=self.lambda_start, m_min=self.m_min
        )


@dataclass(frozen=True)
class ConvergencePoint:
    browsed_targets: int
    updates: int
    lam: float
    phase: str
    train_norm_nll: float
    valid_norm_nll: float
    valid_cer: float

    def as_row(self) -> list[str]:
        return [
            str(self.browsed_targets),
            str(self.updates),
            repr(float(self.lam)),
            self.phase,
            repr(float(self.train_norm_nll)),
            repr(float(self.valid_norm_nll)),
            repr(float(self.valid_cer)),
        ]


class PlateauDetector:
    """Signals once ``patience`` consecutive values fail to beat the best by more than ``min_delta``."""

    def __init__(self, min_delta: float = 0.001, patience: int = 2):
        self.min_delta = min_delta
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def update(self, value: float) -> bool:
        if value < self.best - self.min_delta:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


class _Pool:
    def __init__(self, corpus: Corpus, phase: str):
        self.corpus = corpus
        self.phase = phase
        self.lengths = corpus.target_lengths


DrawLog = list  # entries: (phase, index, target_len)


class _Trainer:
    def __init__(self, config: ExperimentConfig, budget: int, valid: Corpus, draws: DrawLog | None):
        if len(valid) == 0:
            raise ValueError("validation corpus is empty")
        self.config = config
        self.budget = budget
        self.valid = valid
        self.draws = draws
        self.state = init_model(config.model, config.seed)
        self.browsed = 0
        self.updates = 0
        self.skipped = 0
        self.train_ewma = math.nan
        self.points: list[ConvergencePoint] = []
        self.next_eval = config.eval_every_targets

    def evaluate(self, lam: float, phase: str) -> ConvergencePoint:
        report = evaluate(self.state, self.valid)
        point = ConvergencePoint(
            self.browsed, self.updates, lam, phase, self.train_ewma, report.norm_nll, report.cer
        )
        self.points.append(point)
        log.info(
            "browsed=%d updates=%d lambda=%.3f phase=%s valid_nll=%.4f valid_cer=%.4f",
            self.browsed, self.updates, lam, phase, report.norm_nll, report.cer,
        )
        return point

    def step(self, pool: _Pool, index: int) -> bool:
        sample = pool.corpus[index]
        try:
            _, nll = sgd_step(self.state, sample.frames, sample.target)
        except InfeasibleTargetError as exc:
            self.skipped += 1
            log.warning("skipping sample %s: %s", sample.id, exc)
            if self.skipped > 10 * len(pool.corpus):
                raise TrainingAborted("no feasible training samples") from exc
            return False
        except NonFiniteGradientError as exc:
            self._abort(exc)
        n = len(sample.target)
        self.browsed += n
        self.updates += 1
        if self.draws is not None:
            self.draws.append((pool.phase, index, n))
        if n:
            per_char = nll / n
            if math.isnan(self.train_ewma):
                self.train_ewma = per_char
            else:
                decay = 0.5 ** (n / self.config.ewma_half_life)
                self.train_ewma = decay * self.train_ewma + (1.0 - decay) * per_char
        return True

    def due(self) -> bool:
        if self.browsed >= self.next_eval:
            every = self.config.eval_every_targets
            self.next_eval = (self.browsed // every + 1) * every
            return True
        return False

    @property
    def done(self) -> bool:
        return self.browsed >= self.budget

    def _abort(self, exc: Exception) -> None:
        if self.config.out_path:
            path = f"{self.config.out_path}.abort.npz"
            save_checkpoint(path, self.state)
            log.error("non-finite training loss; diagnostic checkpoint written to %s", path)
        raise TrainingAborted(
            f"{exc} after {self.updates} updates / {self.browsed} browsed targets"
        ) from exc


def _budget(config: ExperimentConfig, train: Corpus) -> int:
    total = train.total_target_chars
    if total <= 0:
        raise ValueError("training corpus has no target characters")
    return int(math.ceil(config.total_epochs * total))


def run_experiment(
    config: ExperimentConfig,
    train: Corpus,
    valid: Corpus,
    words: Corpus | None = None,
    draws: DrawLog | None = None,
) -> list[ConvergencePoint]:
    """Train one strategy for ``total_epochs`` passes' worth of browsed targets.

    Returns one point per evaluation, starting with the untrained model at
    zero browsed targets. If ``draws`` is a list, every training draw is
    appended to it as ``(phase, index, target_len)``.
    """
    if config.strategy == "by_hand":
        if words is None:
            raise ValueError("by_hand strategy requires a word corpus")
        return run_by_hand(config, train, valid, words, draws)

    trainer = _Trainer(config, _budget(config, train), valid, draws)
    pool = _Pool(train, "n/a")
    rng = np.random.default_rng([config.seed, 1])
    if config.strategy == "curriculum":
        sampler = CurriculumSampler(pool.lengths, config.schedule(train.total_target_chars), rng)
        current_lambda = sampler.schedule.lambda_at
    else:
        sampler = BaselineSampler(len(train), rng)
        current_lambda = lambda browsed: 0.0

    trainer.evaluate(current_lambda(0), pool.phase)
    while not trainer.done:
        index, _ = sampler.draw(trainer.browsed)
        if trainer.step(pool, index) and trainer.due():
            trainer.evaluate(current_lambda(trainer.browsed), pool.phase)
    if trainer.points[-1].browsed_targets != trainer.browsed:
        trainer.evaluate(current_lambda(trainer.browsed), pool.phase)
    return trainer.points


def run_by_hand(
    config: ExperimentConfig,
    train: Corpus,
    valid: Corpus,
    words: Corpus,
    draws: DrawLog | None = None,
) -> list[ConvergencePoint]:
    """Words first, then lines once line-level validation NLL plateaus.

    Both phases sample without replacement. The budget is counted in browsed
    targets across both phases, sized from the line corpus.
    """
    if len(words) == 0:
        raise ValueError("word corpus is empty")
    trainer = _Trainer(config, _budget(config, train), valid, draws)
    rng = np.random.default_rng([config.seed, 1])
    detector = PlateauDetector(config.min_delta, config.patience)
    pool = _Pool(words, "words")
    sampler = BaselineSampler(len(words), rng)

    def checkpoint() -> None:
        nonlocal pool, sampler
        point = trainer.evaluate(0.0, pool.phase)
        if pool.phase == "words" and detector.update(point.valid_norm_nll):
            log.info("switching from words to lines at %d browsed targets", trainer.browsed)
            pool = _Pool(train, "lines")
            sampler = BaselineSampler(len(train), rng)

    checkpoint()
    while not trainer.done:
        index, _ = sampler.draw(trainer.browsed)
        if trainer.step(pool, index) and trainer.due():
            checkpoint()
    if trainer.points[-1].browsed_targets != trainer.browsed:
        trainer.evaluate(0.0, pool.phase)
    return trainer.points


def best_markers(points: Sequence[ConvergencePoint]) -> dict[str, dict[str, float]]:
    """Best validation values and the browsed-target count where each first occurred."""
    if not points:
        raise ValueError("no convergence points")
    out = {}
    for metric in ("valid_norm_nll", "valid_cer"):
        best = min(points, key=lambda p: getattr(p, metric))
        out[metric] = {"value": getattr(best, metric), "browsed_targets": best.browsed_targets}
    return out


@dataclass(frozen=True)
class StrategySummary:
    best_valid_cer: float
    best_valid_cer_at: int
    best_valid_norm_nll: float
    best_valid_norm_nll_at: int
    targets_to_threshold: int | None
    budget: int

    @property
    def reached(self) -> bool:
        return self.targets_to_threshold is not None


@dataclass(frozen=True)
class Comparison:
    metric: str
    threshold: float
    reference: str
    strategies: dict[str, StrategySummary]
    speedup: dict[str, float | None]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "threshold": self.threshold,
            "reference": self.reference,
            "strategies": {k: asdict(v) for k, v in self.strategies.items()},
            "speedup": dict(self.speedup),
        }

    def render(self) -> str:
        lines = [f"{self.metric} <= {self.threshold:g} (speedup relative to {self.reference})"]
        for name, s in self.strategies.items():
            reached = (
                f"{s.targets_to_threshold}" if s.reached else f"not reached within {s.budget}"
            )
            ratio = self.speedup.get(name)
            ratio_txt = "n/a" if ratio is None else f"{ratio:.3f}"
            lines.append(
                f"  {name:<12} best_cer={s.best_valid_cer:.4f}@{s.best_valid_cer_at} "
                f"best_nll={s.best_valid_norm_nll:.4f}@{s.best_valid_norm_nll_at} "
                f"to_threshold={reached} speedup={ratio_txt}"
            )
        return "\n".join(lines)


def _first_reaching(points: Sequence[ConvergencePoint], metric: str, threshold: float) -> int | None:
    for p in points:
        if getattr(p, metric) <= threshold:
            return p.browsed_targets
    return None


def compare_strategies(
    reports: Mapping[str, Sequence[ConvergencePoint]],
    eval_every_targets: int,
    threshold: float,
    metric: str = "valid_norm_nll",
    reference: str = "baseline",
) -> Comparison:
    """Summaries per strategy plus browsed-target ratios against ``reference``.

    Reports must share the evaluation grid: the same number of points, each
    falling in the same ``eval_every_targets`` cell.
    """
    if metric not in ("valid_norm_nll", "valid_cer"):
        raise ValueError(f"unknown metric {metric!r}")
    if not reports:
        raise ValueError("nothing to compare")
    grids = {name: [p.browsed_targets // eval_every_targets for p in pts] for name, pts in reports.items()}
    first_name, first_grid = next(iter(grids.items()))
    for name, grid in grids.items():
        if grid != first_grid:
            raise ValueError(f"evaluation grid of {name!r} does not match {first_name!r}")

    summaries = {}
    for name, pts in reports.items():
        markers = best_markers(pts)
        summaries[name] = StrategySummary(
            best_valid_cer=markers["valid_cer"]["value"],
            best_valid_cer_at=markers["valid_cer"]["browsed_targets"],
            best_valid_norm_nll=markers["valid_norm_nll"]["value"],
            best_valid_norm_nll_at=markers["valid_norm_nll"]["browsed_targets"],
            targets_to_threshold=_first_reaching(pts, metric, threshold),
            budget=pts[-1].browsed_targets,
        )
    speedup: dict[str, float | None] = {}
    ref = summaries.get(reference)
    for name, s in summaries.items():
        if ref is None or not ref.reached or not s.reached:
            speedup[name] = None
        elif ref.targets_to_threshold == 0:
            speedup[name] = 1.0 if s.targets_to_threshold == 0 else None
        else:
            speedup[name] = s.targets_to_threshold / ref.targets_to_threshold
    return Comparison(metric, threshold, reference, summaries, speedup)


def format_csv(points: Iterable[ConvergencePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow(p.as_row())
    return buf.getvalue()


def write_csv(points: Iterable[ConvergencePoint], path: str | Path) -> None:
    Path(path).write_text(format_csv(points), encoding="utf-8")


def read_csv(path: str | Path) -> list[ConvergencePoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header {header!r}")
        points = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            points.append(
                ConvergencePoint(
                    browsed_targets=int(row[0]),
                    updates=int(row[1]),
                    lam=float(row[2]),
                    phase=row[3],
                    train_norm_nll=float(row[4]),
                    valid_norm_nll=float(row[5]),
                    valid_cer=float(row[6]),
                )
            )
    return points


def write_summary(points: Sequence[ConvergencePoint], config: ExperimentConfig, path: str | Path) -> None:
    payload = {"config": asdict(config), "best": best_markers(points), "n_points": len(points)}
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
