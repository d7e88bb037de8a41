"""Recording ingestion, segmentation, splitting, synthetic generation."""
import numpy as np
import pytest

import oracles
from pvashape.core import Dataset, SeededRng, ValidationError
from pvashape.pipeline import (RawRecording, SynthConfig, class_quotas,
                               default_proportions, detect_onsets,
                               generate_synthetic, load_recording,
                               rolling_median, segment, split, subset_channels)


def _pulse_train(period, width=20, cycles=8, amp=10.0, lead=30):
    # width stays under half the 51-sample baseline window so the rolling
    # median sees quiet signal; the lead-in keeps edge replication clean
    x = np.zeros(lead + period * cycles + 40)
    for c in range(cycles):
        x[lead + c * period : lead + c * period + width] = amp
    return x


def test_rolling_median_matches_oracle():
    gen = np.random.default_rng(0)
    x = gen.normal(size=200)
    for w in (5, 6, 51):
        assert np.allclose(rolling_median(x, w), oracles.rolling_median(x, w),
                           atol=1e-12)


def test_detect_onsets_pulse_train():
    x = _pulse_train(100)
    onsets = detect_onsets(x)
    assert onsets == [30 + 100 * c for c in range(8)]


def test_detect_onsets_flat_is_empty():
    assert detect_onsets(np.zeros(500)) == []


def test_segment_pulse_train():
    pmask = _pulse_train(100)
    rec = RawRecording(id="r1", channels={"Pmask": pmask,
                                          "Flow": np.arange(len(pmask), dtype=float)})
    segs = segment(rec, t=150)
    assert len(segs) == 7
    for i, s in enumerate(segs):
        assert s.id == f"r1-seg{i:04d}"
        assert s.original_length == 100
        assert s.values.shape == (2, 150)
        assert np.all(s.values[:, 100:] == 0.0)
        assert s.label == "UNLABELED"


def test_segment_truncates_long_intervals():
    rec = RawRecording(id="r2", channels={"Pmask": _pulse_train(200, cycles=5)})
    segs = segment(rec, t=150)
    assert segs and all(s.original_length == 150 for s in segs)


def test_segment_flat_recording_empty():
    rec = RawRecording(id="r3", channels={"Pmask": np.zeros(400)})
    assert segment(rec, t=150) == []


def test_segment_requires_pmask():
    rec = RawRecording(id="r4", channels={"Flow": np.zeros(400)})
    with pytest.raises(ValidationError):
        segment(rec, t=150)


def test_recording_rejects_unequal_channels():
    with pytest.raises(ValidationError):
        RawRecording(id="bad", channels={"Pmask": np.zeros(5), "Flow": np.zeros(6)})


def test_load_recording_csv(tmp_path):
    p = tmp_path / "rec.csv"
    p.write_text("Pmask,Flow\n1.0,2.0\n\n3.5,4.5\n")
    rec = load_recording(p, recording_id="rr")
    assert rec.id == "rr"
    assert np.array_equal(rec.channels["Pmask"], [1.0, 3.5])
    assert np.array_equal(rec.channels["Flow"], [2.0, 4.5])


def test_load_recording_bad_row(tmp_path):
    p = tmp_path / "rec.csv"
    p.write_text("Pmask,Flow\n1.0,2.0\n3.0\n")
    with pytest.raises(ValidationError) as err:
        load_recording(p)
    assert "3" in str(err.value)  # line number in the message


def _synth(n=100, seed=0, **kw):
    props = kw.pop("proportions", {"NP": 0.4, "AC": 0.2, "DT": 0.2, "IE": 0.2})
    return generate_synthetic(SynthConfig(n_instances=n, class_proportions=props,
                                          seed=seed, **kw))


def test_split_eighty_twenty():
    ds = _synth(100)
    tr, va = split(ds, 0.8, SeededRng(1))
    assert len(tr) == 80 and len(va) == 20
    assert tr.class_counts == {"NP": 32, "AC": 16, "DT": 16, "IE": 16}
    assert va.class_counts == {"NP": 8, "AC": 4, "DT": 4, "IE": 4}
    assert {x.id for x in tr} | {x.id for x in va} == {x.id for x in ds}
    assert not ({x.id for x in tr} & {x.id for x in va})


def test_split_same_seed_identical():
    ds = _synth(60)
    a_tr, a_va = split(ds, 0.8, SeededRng(5))
    b_tr, b_va = split(ds, 0.8, SeededRng(5))
    assert [x.id for x in a_tr] == [x.id for x in b_tr]
    assert [x.id for x in a_va] == [x.id for x in b_va]


def test_split_two_per_class_half():
    rows = []
    for x in _synth(8, proportions={"NP": 0.5, "AC": 0.5}):
        rows.append(x)
    ds = Dataset(tuple(rows))
    tr, va = split(ds, 0.5, SeededRng(0))
    assert tr.class_counts == {"NP": 2, "AC": 2}
    assert va.class_counts == {"NP": 2, "AC": 2}


def test_split_rejects_singleton_class():
    ds = _synth(5, proportions={"NP": 0.8, "AC": 0.2})
    assert ds.class_counts["AC"] == 1
    with pytest.raises(ValidationError):
        split(ds, 0.8, SeededRng(0))


def test_split_rejects_bad_fraction():
    with pytest.raises(ValidationError):
        split(_synth(20), 1.0, SeededRng(0))


def test_quotas_largest_remainder():
    props = default_proportions()
    q = class_quotas(1000, props)
    assert sum(q.values()) == 1000
    for lab, p in props.items():
        assert abs(q[lab] - 1000 * p) <= 1.0
    assert class_quotas(2000, props) == {"NP": 1836, "AC": 42, "DT": 69, "IE": 53}


def test_synth_deterministic():
    a = _synth(30, seed=9)
    b = _synth(30, seed=9)
    assert [x.id for x in a] == [x.id for x in b]
    for xa, xb in zip(a, b):
        assert np.array_equal(xa.values, xb.values)
        assert xa.label == xb.label


def test_synth_single_class():
    ds = generate_synthetic(SynthConfig(n_instances=12,
                                        class_proportions={"NP": 1.0}, seed=0))
    assert ds.class_counts == {"NP": 12}


def test_synth_shape_and_ids():
    ds = _synth(20, t=60)
    assert len(ds) == 20
    assert ds[0].id == "syn-00000"
    for x in ds:
        assert x.values.shape == (4, 60)
        assert x.original_length == 60
        assert x.channel_names == ("Pmask", "Flow", "Thor", "Abdo")


def test_synth_validation():
    with pytest.raises(ValidationError):
        SynthConfig(n_instances=0)
    with pytest.raises(ValidationError):
        SynthConfig(n_instances=5, t=20)
    with pytest.raises(ValidationError):
        SynthConfig(n_instances=5, class_proportions={"NP": 0.5, "AC": 0.4})
    with pytest.raises(ValidationError):
        SynthConfig(n_instances=5, class_proportions={"XX": 1.0})


def test_subset_channels():
    ds = _synth(8)
    two = subset_channels(ds, (0, 1))
    assert two.n_channels == 2
    assert two[0].channel_names == ("Pmask", "Flow")
    assert np.array_equal(two[3].values, ds[3].values[:2])
    full = subset_channels(ds, (0, 1, 2, 3))
    assert np.array_equal(full[0].values, ds[0].values)
    with pytest.raises((ValidationError, IndexError)):
        subset_channels(ds, (0, 7))
