"""Synthetic line corpora standing in for handwritten text-line databases.

Each character is a run of noisy copies of a fixed per-label template vector.
Words are runs of letters separated by a dedicated space label, and every line
records where its words sit in both label and frame coordinates so a
word-level corpus can be cut from the same lines.

Corpus files are JSON lines: a header record followed by one record per sample,
with frames stored as base64-encoded little-endian float64 bytes so that a
save/load round trip is bit exact.
"""

from __future__ import annotations

import base64
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .ctc import min_frames

__all__ = [
    "WordSpan",
    "Sample",
    "Corpus",
    "CorpusSpec",
    "Splits",
    "CorpusFormatError",
    "space_label",
    "make_templates",
    "sample_line_length",
    "generate_corpus",
    "split_into_words",
    "save_corpus",
    "load_corpus",
    "FORMAT_NAME",
    "FORMAT_VERSION",
]

log = logging.getLogger(__name__)

FORMAT_NAME = "ctc-curriculum-corpus"
FORMAT_VERSION = 1


class CorpusFormatError(ValueError):
    pass


class WordSpan(NamedTuple):
    """Half-open label and frame ranges of one word inside its line."""

    start_label: int
    end_label: int
    start_frame: int
    end_frame: int


@dataclass(frozen=True, eq=False)
class Sample:
    frames: np.ndarray
    target: tuple[int, ...]
    word_boundaries: tuple[WordSpan, ...] = ()
    id: str = ""

    def __len__(self) -> int:
        return len(self.target)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.target == other.target
            and self.word_boundaries == other.word_boundaries
            and self.frames.shape == other.frames.shape
            and self.frames.dtype == other.frames.dtype
            and self.frames.tobytes() == other.frames.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Corpus:
    samples: tuple[Sample, ...]
    alphabet_size: int | None
    input_dim: int | None
    name: str = ""

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    @property
    def target_lengths(self) -> np.ndarray:
        return np.array([len(s.target) for s in self.samples], dtype=np.int64)

    @property
    def total_target_chars(self) -> int:
        return int(self.target_lengths.sum())


@dataclass(frozen=True)
class CorpusSpec:
    """Generator settings.

    Line lengths (in labels, spaces included) follow a mixture: with
    probability ``short_line_prob`` a short line of ``short_range`` labels,
    otherwise uniform over ``long_range``.

    Templates are ``template_scale`` times a standard normal draw, so the
    default per-frame signal is comparable to ``noise_sigma`` and a model has
    to use context rather than single frames.
    """

    alphabet_size: int = 20
    input_dim: int = 16
    n_train: int = 10_000
    n_valid: int = 1_000
    short_line_prob: float = 0.15
    short_range: tuple[int, int] = (1, 5)
    long_range: tuple[int, int] = (10, 60)
    word_range: tuple[int, int] = (1, 8)
    frames_per_char: tuple[int, int] = (3, 8)
    noise_sigma: float = 0.3
    template_scale: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2 (at least one letter plus space)")
        if self.input_dim < 1 or self.n_train < 1 or self.n_valid < 0:
            raise ValueError("input_dim and n_train must be positive, n_valid nonnegative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.short_line_prob <= 1.0:
            raise ValueError("short_line_prob must be a probability")
        for name in ("short_range", "long_range", "word_range", "frames_per_char"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 1 <= low <= high")

    @property
    def mean_line_length(self) -> float:
        return self.short_line_prob * sum(self.short_range) / 2 + (1 - self.short_line_prob) * sum(
            self.long_range
        ) / 2


class Splits(NamedTuple):
    train: Corpus
    valid: Corpus


def space_label(alphabet_size: int) -> int:
    """The word separator is the last non-blank label."""
    return alphabet_size - 1


def make_templates(spec: CorpusSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 0])
    return spec.template_scale * rng.standard_normal((spec.alphabet_size, spec.input_dim))


def sample_line_length(rng: np.random.Generator, spec: CorpusSpec) -> int:
    lo, hi = spec.short_range if rng.random() < spec.short_line_prob else spec.long_range
    return int(rng.integers(lo, hi + 1))


def _layout_words(rng: np.random.Generator, length: int, spec: CorpusSpec) -> list[int]:
    """Word lengths whose sum plus single separators equals ``length``.

    Lines never start or end with a separator. A cut that would leave exactly
    one label for a trailing word is absorbed into the current word.
    """
    lo, hi = spec.word_range
    words = []
    remaining = length
    while remaining > 0:
        w = min(int(rng.integers(lo, hi + 1)), remaining)
        if remaining - w == 1:
            w = remaining if remaining <= hi else w - 1
        words.append(w)
        remaining -= w
        if remaining:
            remaining -= 1
    return words


def _render_line(
    rng: np.random.Generator, length: int, templates: np.ndarray, spec: CorpusSpec, sample_id: str
) -> Sample:
    space = space_label(spec.alphabet_size)
    n_letters = spec.alphabet_size - 1
    target: list[int] = []
    spans: list[tuple[int, int]] = []
    for w in _layout_words(rng, length, spec):
        if target:
            target.append(space)
        start = len(target)
        target.extend(int(k) for k in rng.integers(0, n_letters, size=w))
        spans.append((start, len(target)))

    lo, hi = spec.frames_per_char
    widths = rng.integers(lo, hi + 1, size=len(target))
    starts = np.concatenate([[0], np.cumsum(widths)]).astype(np.int64)
    T = int(starts[-1])
    frames = templates[np.repeat(np.asarray(target, dtype=np.int64), widths)] if target else np.zeros(
        (0, spec.input_dim)
    )
    if spec.noise_sigma > 0:
        frames = frames + spec.noise_sigma * rng.standard_normal(frames.shape)
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    boundaries = tuple(WordSpan(a, b, int(starts[a]), int(starts[b])) for a, b in spans)
    assert T >= min_frames(target)
    return Sample(frames=frames, target=tuple(target), word_boundaries=boundaries, id=sample_id)


def _generate_split(rng, n, templates, spec, prefix) -> Corpus:
    samples = []
    for i in range(n):
        samples.append(_render_line(rng, sample_line_length(rng, spec), templates, spec, f"{prefix}-{i:06d}"))
    return Corpus(tuple(samples), spec.alphabet_size, spec.input_dim, name=prefix)


def generate_corpus(spec: CorpusSpec) -> Splits:
    """Deterministic train/valid line corpora for ``spec`` (templates are shared)."""
    templates = make_templates(spec)
    train = _generate_split(np.random.default_rng([spec.seed, 1]), spec.n_train, templates, spec, "train")
    valid = _generate_split(np.random.default_rng([spec.seed, 2]), spec.n_valid, templates, spec, "valid")
    return Splits(train, valid)


def split_into_words(corpus: Corpus) -> Corpus:
    """One sample per annotated word, cut from the lines of ``corpus``."""
    words = []
    for sample in corpus:
        if sample.target and not sample.word_boundaries:
            raise ValueError(f"sample {sample.id!r} has no word boundaries")
        for k, span in enumerate(sample.word_boundaries):
            words.append(
                Sample(
                    frames=np.ascontiguousarray(sample.frames[span.start_frame : span.end_frame]),
                    target=sample.target[span.start_label : span.end_label],
                    word_boundaries=(WordSpan(0, span.end_label - span.start_label, 0, span.end_frame - span.start_frame),),
                    id=f"{sample.id}/w{k}",
                )
            )
    return Corpus(tuple(words), corpus.alphabet_size, corpus.input_dim, name=f"{corpus.name}-words")


def _encode_frames(frames: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(frames, dtype="<f8").tobytes()).decode("ascii")


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "alphabet_size": corpus.alphabet_size,
            "input_dim": corpus.input_dim,
            "name": corpus.name,
            "n_samples": len(corpus),
        }
        fh.write(json.dumps(header) + "\n")
        for s in corpus:
            rec = {
                "id": s.id,
                "target": list(s.target),
                "shape": list(s.frames.shape),
                "dtype": "<f8",
                "frames": _encode_frames(s.frames),
                "word_boundaries": [list(b) for b in s.word_boundaries],
            }
            fh.write(json.dumps(rec) + "\n")


def _decode_record(rec: dict, lineno: int, input_dim: int | None) -> Sample:
    try:
        shape = tuple(int(n) for n in rec["shape"])
        if rec.get("dtype", "<f8") != "<f8":
            raise CorpusFormatError(f"line {lineno}: unsupported dtype {rec['dtype']!r}")
        raw = base64.b64decode(rec["frames"], validate=True)
        frames = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        target = tuple(int(k) for k in rec["target"])
        bounds = tuple(WordSpan(*(int(v) for v in b)) for b in rec["word_boundaries"])
        sample_id = str(rec["id"])
    except CorpusFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"line {lineno}: malformed record ({exc})") from exc
    if len(shape) != 2 or (input_dim is not None and shape[1] != input_dim):
        raise CorpusFormatError(f"line {lineno}: frames shape {shape} does not match input_dim={input_dim}")
    return Sample(frames=frames, target=target, word_boundaries=bounds, id=sample_id)


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not any(line.strip() for line in lines):
        log.warning("corpus file %s is empty; returning an empty corpus", path)
        return Corpus((), None, None, name=path.stem)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line 1: header is not valid JSON ({exc})") from exc
    if header.get("format") != FORMAT_NAME or header.get("version") != FORMAT_VERSION:
        raise CorpusFormatError(f"line 1: unrecognised header {header!r}")
    input_dim = header.get("input_dim")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"line {lineno}: record is not valid JSON ({exc})") from exc
        samples.append(_decode_record(rec, lineno, input_dim))
    expected = header.get("n_samples")
    if expected is not None and expected != len(samples):
        raise CorpusFormatError(
            f"line {len(lines) + 1}: expected {expected} records after the header, found {len(samples)} "
            f"(file truncated after record {samples[-1].id if samples else 'header'!r})"
        )
    return Corpus(tuple(samples), header.get("alphabet_size"), input_dim, name=header.get("name", path.stem))
