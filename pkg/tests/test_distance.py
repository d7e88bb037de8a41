"""Complexity-invariant subsequence distance against naive enumeration."""
import math

import numpy as np
import pytest

import oracles
from conftest import make_series
from pvashape.core import LabeledSeries
from pvashape.distance import (ShapeletLengthError, batch_min_cid, cid,
                               complexity_estimate, psd, window_cid_profile)


def test_complexity_constant_is_zero():
    assert complexity_estimate(np.array([5.0, 5.0, 5.0])) == 0.0


def test_complexity_alternating():
    assert complexity_estimate(np.array([0.0, 1.0, 0.0, 1.0])) == pytest.approx(
        math.sqrt(3), abs=1e-12)


def test_complexity_single_step():
    assert complexity_estimate(np.array([1.0, 3.0])) == 2.0


def test_cid_identical_is_zero():
    q = np.array([0.3, -1.2, 4.0])
    assert cid(q, q.copy()) == 0.0


def test_cid_equal_complexity():
    # ED = 2, both CE = sqrt(2), factor 1
    assert cid(np.array([0.0, 1.0, 2.0]), np.array([0.0, 1.0, 0.0])) == pytest.approx(
        2.0, abs=1e-12)


def test_cid_penalizes_complexity_mismatch():
    # ED = 1, CE 2 vs 1, factor 2
    assert cid(np.array([0.0, 2.0]), np.array([0.0, 1.0])) == pytest.approx(
        2.0, abs=1e-12)


def test_cid_length_mismatch_raises():
    with pytest.raises(ValueError):
        cid(np.array([0.0, 1.0]), np.array([0.0, 1.0, 2.0]))


def test_psd_exact_match():
    x = make_series([0, 1, 2, 1])
    m = psd(x, 0, np.array([1.0, 2.0]))
    assert m.psd == 0.0
    assert m.offset == 1
    assert np.array_equal(m.window, [1.0, 2.0])


def test_psd_spec_of_three_windows():
    x = make_series([0, 1, 3])
    m = psd(x, 0, np.array([0.0, 2.0]))
    assert m.psd == pytest.approx(math.sqrt(2), abs=1e-7)
    assert m.offset == 1


def test_psd_tie_takes_smallest_offset():
    x = make_series([1, 2, 1, 2, 1])
    m = psd(x, 0, np.array([1.0, 2.0]))
    assert m.psd == 0.0
    assert m.offset == 0


def test_psd_ignores_padded_tail():
    # exact match hidden in the padding must not be found
    x = LabeledSeries(id="p", values=np.array([[5, 1, 9, 0, 0, 0, 0, 0.0]]),
                      label="NP", original_length=3, channel_names=("c",))
    m = psd(x, 0, np.array([9.0, 0.0]))
    assert m.offset == 0
    assert m.psd > 1.0


def test_psd_query_longer_than_instance_raises():
    x = make_series([0, 1, 2], original_length=3, pad_to=10)
    with pytest.raises(ShapeletLengthError):
        psd(x, 0, np.zeros(4))


def test_psd_matches_oracle_random():
    gen = np.random.default_rng(0)
    for trial in range(60):
        t = int(gen.integers(4, 33))
        n = int(gen.integers(3, t + 1))
        l = int(gen.integers(2, min(8, n) + 1))
        vals = gen.normal(size=t)
        vals[n:] = 0.0
        x = LabeledSeries(id=f"r{trial}", values=vals[None, :], label="NP",
                          original_length=n, channel_names=("c",))
        q = gen.normal(size=l)
        for zn in (False, True):
            want_d, want_j = oracles.psd(vals, n, q, use_znorm=zn)
            got = psd(x, 0, q, znorm=zn)
            assert got.psd == pytest.approx(want_d, abs=1e-9)
            assert got.offset == want_j


def test_window_profile_matches_oracle():
    gen = np.random.default_rng(3)
    series = gen.normal(size=20)
    q = gen.normal(size=5)
    prof = window_cid_profile(series, q)
    for j in range(len(series) - 5 + 1):
        assert prof[j] == pytest.approx(oracles.cid(q, series[j : j + 5]), abs=1e-9)


def _random_batch(gen, m=12, t=40):
    lengths = gen.integers(6, t + 1, size=m)
    values = gen.normal(size=(m, t))
    for i, n in enumerate(lengths):
        values[i, n:] = 0.0
    return values, lengths.astype(np.int64)


def test_batch_matches_scalar_plain():
    gen = np.random.default_rng(7)
    values, lengths = _random_batch(gen)
    queries = [gen.normal(size=int(gen.integers(2, 7))) for _ in range(9)]
    for l in {len(q) for q in queries}:
        qs = np.stack([q for q in queries if len(q) == l])
        d, off = batch_min_cid(values, lengths, qs)
        for i in range(len(values)):
            x = LabeledSeries(id=str(i), values=values[i][None, :], label="NP",
                              original_length=int(lengths[i]), channel_names=("c",))
            for j in range(len(qs)):
                m = psd(x, 0, qs[j])
                assert d[i, j] == pytest.approx(m.psd, rel=1e-9, abs=1e-9)
                assert off[i, j] == m.offset


def test_batch_matches_scalar_znorm_distances():
    # the batched path factors the squared distance through one matmul, so
    # near-tie offsets may differ under z-normalization; distances must agree
    gen = np.random.default_rng(8)
    values, lengths = _random_batch(gen)
    qs = gen.normal(size=(6, 5))
    d, off = batch_min_cid(values, lengths, qs, znorm=True)
    for i in range(len(values)):
        x = LabeledSeries(id=str(i), values=values[i][None, :], label="NP",
                          original_length=int(lengths[i]), channel_names=("c",))
        for j in range(len(qs)):
            m = psd(x, 0, qs[j], znorm=True)
            assert d[i, j] == pytest.approx(m.psd, rel=1e-6, abs=1e-6)
            # the offset it picked must realize the same minimum
            w = values[i, off[i, j] : off[i, j] + 5]
            assert oracles.cid(oracles.znorm(qs[j]), oracles.znorm(w)) == pytest.approx(
                m.psd, rel=1e-6, abs=1e-6)


def test_batch_marks_too_short_instances():
    values = np.zeros((3, 10))
    values[:, :4] = [[1, 2, 3, 4], [0, 1, 0, 1], [2, 2, 2, 2]]
    lengths = np.array([4, 3, 4])
    d, off = batch_min_cid(values, lengths, np.array([[1.0, 2.0, 3.0, 4.0]]))
    assert d[0, 0] == 0.0 and off[0, 0] == 0
    assert np.isinf(d[1, 0]) and off[1, 0] == -1
    assert np.isfinite(d[2, 0])
