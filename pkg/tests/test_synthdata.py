import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eventseg.errors import ConfigError, EmptyDataset, FormatError
from eventseg.events import run_lengths
from eventseg.synthdata import (BLINK, FIXATION, TARGET_DISTRIBUTION, SACCADE, GenConfig, WindowRecord,
                                biased_sampler, class_time_distribution, cut_windows, generate_stream,
                                make_split, read_dataset, sample_segments, sampling_probabilities,
                                write_dataset)


def test_defaults():
    cfg = GenConfig()
    assert cfg.class_distribution == TARGET_DISTRIBUTION
    assert cfg.saccade_mean == 6.0 and cfg.blink_mean == pytest.approx(11.2)


@pytest.mark.parametrize("dist", [(0.5, 0.5, 0.1), (1.2, -0.1, -0.1), (0.0, 0.5, 0.5)])
def test_invalid_distribution(dist):
    with pytest.raises(ConfigError):
        GenConfig(class_distribution=dist)


def test_single_class_noiseless_is_pure_template():
    cfg = GenConfig(class_distribution=(1, 0, 0), noise_sigma=0, drift_sigma=0)
    sig, lab = generate_stream(cfg, 300)
    assert (lab == FIXATION).all()
    assert np.allclose(sig, sig[:, :1])


def test_determinism():
    a = generate_stream(GenConfig(seed=3), 5000)
    b = generate_stream(GenConfig(seed=3), 5000)
    c = generate_stream(GenConfig(seed=4), 5000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])


def test_stream_too_short():
    with pytest.raises(ConfigError):
        generate_stream(GenConfig(), 50)


def test_class_distribution_matches_target():
    _, lab = generate_stream(GenConfig(seed=11), 300_000)
    assert np.abs(class_time_distribution([lab]) - TARGET_DISTRIBUTION).max() < 0.02


def test_grammar_and_minimum_durations():
    cfg = GenConfig(seed=5)
    segs = sample_segments(cfg, 200_000, np.random.default_rng(5))
    for (a, _), (b, _) in zip(segs, segs[1:]):
        assert a == FIXATION or b == FIXATION
    for k, d in segs:
        assert d >= cfg.min_len[k] if k != FIXATION else d >= 2
    _, lab = generate_stream(cfg, 200_000)
    runs = run_lengths(lab)
    for (a, _, _), (b, _, _) in zip(runs, runs[1:]):
        assert not (a == SACCADE and b == BLINK) and not (a == BLINK and b == SACCADE)


def test_duration_means_near_targets():
    cfg = GenConfig(seed=9)
    segs = sample_segments(cfg, 2_000_000, np.random.default_rng(9))
    by = {k: [d for c, d in segs if c == k] for k in range(3)}
    assert len(by[SACCADE]) >= 10_000
    assert np.mean(by[SACCADE]) == pytest.approx(cfg.saccade_mean, rel=0.1)
    assert np.mean(by[BLINK]) == pytest.approx(cfg.blink_mean, rel=0.1)
    # fixation lengths mix regular and micro fixations
    assert np.mean(by[FIXATION]) == pytest.approx(cfg.expected_mean_duration(FIXATION), rel=0.1)


def test_cut_windows():
    sig = np.arange(2000, dtype=np.float64).reshape(2, 1000)
    lab = np.zeros(1000, dtype=np.uint8)
    assert len(cut_windows(sig, lab, 500, 500)) == 2
    assert len(cut_windows(sig[:, :999], lab[:999], 500, 500)) == 1
    ov = cut_windows(sig, lab, 500, 250)
    assert len(ov) == 3
    assert np.array_equal(ov[0].signal[:, 250:], ov[1].signal[:, :250])
    assert [w.window_index for w in ov] == [0, 1, 2]


def test_make_split_shapes():
    recs = make_split(GenConfig(seed=1), 10, source_id=4)
    assert len(recs) == 10
    assert recs[0].signal.shape == (8, 100) and recs[0].labels.shape == (100,)
    assert all(r.source_id == 4 for r in recs)


def _records(rng, n, C=3, T=7):
    return [WindowRecord(rng.normal(size=(C, T)), rng.integers(0, 3, T).astype(np.uint8), int(rng.integers(0, 9)), i)
            for i in range(n)]


def test_roundtrip(tmp_path, rng):
    recs = _records(rng, 5)
    write_dataset(tmp_path / "d.dtr", recs)
    assert read_dataset(tmp_path / "d.dtr") == recs


def test_empty_file_roundtrip(tmp_path):
    write_dataset(tmp_path / "e.dtr", [], channels=8, window=100)
    assert read_dataset(tmp_path / "e.dtr") == []


def test_truncated_and_corrupt(tmp_path, rng):
    p = tmp_path / "d.dtr"
    write_dataset(p, _records(rng, 3))
    data = p.read_bytes()
    for bad in (data[:-1], data[:10], b"XXXX" + data[4:], data[:4] + b"\x02" + data[5:]):
        p.write_bytes(bad)
        with pytest.raises(FormatError):
            read_dataset(p)
    flipped = bytearray(data)
    flipped[40] ^= 1
    p.write_bytes(bytes(flipped))
    with pytest.raises(FormatError):
        read_dataset(p)


def test_config_file_roundtrip(tmp_path):
    cfg = GenConfig(seed=7, noise_sigma=0.2)
    cfg.save(tmp_path / "g.json")
    assert GenConfig.load(tmp_path / "g.json") == cfg


def _labelled(kinds):
    return [WindowRecord(np.zeros((1, 3)), np.array(k, dtype=np.uint8)) for k in kinds]


def test_sampler_uniform_and_boost():
    recs = _labelled([[0, 0, 0], [0, 2, 0], [1, 1, 0], [0, 2, 2]])
    assert np.allclose(sampling_probabilities(recs, (1, 1, 1)), 0.25)
    p = sampling_probabilities(_labelled([[0, 0, 0], [0, 2, 0]]), (1, 1, 10))
    assert p == pytest.approx([1 / 11, 10 / 11])
    assert np.allclose(sampling_probabilities(recs[:1] + recs[2:3], (1, 1, 10)), 0.5)


def test_sampler_empirical_frequency():
    recs = _labelled([[0, 0, 0], [0, 2, 0]] * 5)
    gen = biased_sampler(recs, (1, 1, 10), seed=0)
    draws = np.array([next(gen) for _ in range(100_000)])
    frac = np.isin(draws, np.arange(1, 10, 2)).mean()
    sd = math.sqrt((10 / 11) * (1 / 11) / 100_000)
    assert abs(frac - 10 / 11) < 3 * sd


def test_sampler_errors():
    with pytest.raises(EmptyDataset):
        next(biased_sampler([], (1, 1, 1), 0))
    with pytest.raises(ValueError):
        sampling_probabilities(_labelled([[0, 0, 0]]), (0.5, 1, 1))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_roundtrip_property(seed):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    recs = _records(rng, int(rng.integers(0, 6)), int(rng.integers(1, 4)), int(rng.integers(1, 9)))
    with tempfile.TemporaryDirectory() as d:
        write_dataset(Path(d) / "x.dtr", recs, channels=2, window=3)
        assert read_dataset(Path(d) / "x.dtr") == recs
