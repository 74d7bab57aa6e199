import json
import logging

import numpy as np
import pytest

from ctc_curriculum.ctc import min_frames
from ctc_curriculum.dataset import (
    Corpus,
    CorpusFormatError,
    CorpusSpec,
    generate_corpus,
    load_corpus,
    save_corpus,
    space_label,
    split_into_words,
)

SMALL = CorpusSpec(n_train=200, n_valid=20, seed=5)


@pytest.fixture(scope="module")
def small():
    return generate_corpus(SMALL)


def test_same_seed_gives_identical_corpora(small):
    again = generate_corpus(SMALL)
    assert again.train.samples == small.train.samples
    assert again.valid.samples == small.valid.samples
    other = generate_corpus(CorpusSpec(n_train=200, n_valid=20, seed=6))
    assert other.train.samples != small.train.samples


def test_noise_free_segments_are_constant():
    splits = generate_corpus(CorpusSpec(n_train=20, n_valid=1, noise_sigma=0.0, seed=1))
    for s in splits.train:
        # frames change only at character boundaries
        changes = np.flatnonzero(np.any(np.diff(s.frames, axis=0) != 0, axis=1)) + 1
        runs = np.split(s.frames, changes)
        assert len(runs) <= len(s.target)
        for run in runs:
            assert np.all(run == run[0])


def test_every_sample_is_ctc_feasible(small):
    for s in small.train.samples + small.valid.samples:
        assert s.frames.shape[0] >= min_frames(list(s.target))
        assert s.frames.shape[1] == SMALL.input_dim


def test_line_lengths_follow_the_mixture_law():
    spec = CorpusSpec(n_train=10_000, n_valid=1, seed=0)
    # 0.15 * mean(1..5) + 0.85 * mean(10..60) = 0.15 * 3 + 0.85 * 35
    assert spec.mean_line_length == pytest.approx(30.2)
    lengths = generate_corpus(spec).train.target_lengths
    # sd of the mixture is about 15.5, so 10k lines pin the mean to +-0.5 at 3 sigma
    assert 25 <= lengths.mean() <= 35
    assert abs(lengths.mean() - 30.2) < 0.5
    assert lengths.min() >= 1 and lengths.max() <= 60
    assert 0.13 < np.mean(lengths <= 5) < 0.17


def test_word_layout(small):
    space = space_label(SMALL.alphabet_size)
    for s in small.train:
        assert s.target[0] != space and s.target[-1] != space
        spans = s.word_boundaries
        assert spans[0].start_label == 0 and spans[-1].end_label == len(s.target)
        for a, b in zip(spans, spans[1:]):
            # exactly one separator between consecutive words
            assert b.start_label == a.end_label + 1
            assert s.target[a.end_label] == space
            assert a.end_frame <= b.start_frame
        for w in spans:
            assert 1 <= w.end_label - w.start_label
            assert space not in s.target[w.start_label : w.end_label]
            assert 0 <= w.start_frame < w.end_frame <= s.frames.shape[0]


def test_word_lengths_mostly_in_range(small):
    lengths = [w.end_label - w.start_label for s in small.train for w in s.word_boundaries]
    assert min(lengths) >= 1 and max(lengths) <= 8


def test_split_into_words_partitions_lines(small):
    words = split_into_words(small.train)
    space = space_label(SMALL.alphabet_size)
    by_line: dict[str, list] = {}
    for w in words:
        by_line.setdefault(w.id.split("/")[0], []).append(w)
    assert set(by_line) == {s.id for s in small.train}
    for line in small.train:
        parts = by_line[line.id]
        assert len(parts) == len(line.word_boundaries)
        joined = []
        for p in parts:
            joined.extend(p.target)
        assert tuple(joined) == tuple(k for k in line.target if k != space)
        for p, span in zip(parts, line.word_boundaries):
            np.testing.assert_array_equal(p.frames, line.frames[span.start_frame : span.end_frame])
            assert p.frames.shape[0] >= min_frames(list(p.target))


def test_word_chars_equal_line_chars_minus_separators(small):
    words = split_into_words(small.train)
    space = space_label(SMALL.alphabet_size)
    separators = sum(s.target.count(space) for s in small.train)
    assert words.total_target_chars == small.train.total_target_chars - separators


def test_five_word_line_gives_five_samples(small):
    line = next(s for s in small.train if len(s.word_boundaries) == 5)
    words = split_into_words(Corpus((line,), SMALL.alphabet_size, SMALL.input_dim))
    assert len(words) == 5


def test_split_rejects_missing_boundaries(small):
    s = small.train[0]
    bare = Corpus((type(s)(frames=s.frames, target=s.target, word_boundaries=(), id="x"),), 20, 16)
    with pytest.raises(ValueError):
        split_into_words(bare)


def test_save_load_round_trip(tmp_path, small):
    path = tmp_path / "train.jsonl"
    save_corpus(small.train, path)
    loaded = load_corpus(path)
    assert loaded.samples == small.train.samples
    assert loaded.alphabet_size == small.train.alphabet_size
    assert loaded.input_dim == small.train.input_dim
    for a, b in zip(loaded, small.train):
        assert a.frames.tobytes() == b.frames.tobytes()


def test_file_layout_is_header_then_records(tmp_path, small):
    path = tmp_path / "valid.jsonl"
    save_corpus(small.valid, path)
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["format"] == "ctc-curriculum-corpus" and header["version"] == 1
    assert header["alphabet_size"] == 20 and header["input_dim"] == 16
    rec = json.loads(lines[1])
    assert set(rec) == {"id", "target", "shape", "dtype", "frames", "word_boundaries"}
    assert len(lines) == 1 + len(small.valid)


def test_truncated_file_names_offending_record(tmp_path, small):
    path = tmp_path / "valid.jsonl"
    save_corpus(small.valid, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(CorpusFormatError, match=r"line \d+"):
        load_corpus(path)


def test_missing_records_detected(tmp_path, small):
    path = tmp_path / "valid.jsonl"
    save_corpus(small.valid, path)
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:5]))
    with pytest.raises(CorpusFormatError, match="expected 20 records"):
        load_corpus(path)


def test_malformed_record_reports_line_number(tmp_path, small):
    path = tmp_path / "valid.jsonl"
    save_corpus(small.valid, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[3])
    del rec["target"]
    lines[3] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusFormatError, match="line 4"):
        load_corpus(path)


def test_empty_file_gives_empty_corpus(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        corpus = load_corpus(path)
    assert len(corpus) == 0
    assert "empty" in caplog.text


def test_statistics_reproducible_from_spec():
    a = generate_corpus(CorpusSpec(n_train=300, n_valid=1, seed=11)).train
    b = generate_corpus(CorpusSpec(n_train=300, n_valid=1, seed=11)).train
    labels_a = np.bincount(np.concatenate([s.target for s in a]), minlength=20)
    labels_b = np.bincount(np.concatenate([s.target for s in b]), minlength=20)
    np.testing.assert_array_equal(labels_a, labels_b)
    np.testing.assert_array_equal(a.target_lengths, b.target_lengths)
