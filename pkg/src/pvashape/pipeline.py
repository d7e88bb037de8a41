"""Data ingestion, breath segmentation, splitting, and synthetic waveforms.

The synthetic generator stands in for clinical recordings: each class is
built from its defining motif (number and spacing of ventilator pulses on
the airway-pressure channel, presence or absence of a matching muscular
effort on the chest/abdomen channels) plus jitter and additive noise, so
the classes are discriminative by construction while remaining honest to
the event definitions. Ineffective efforts differ from normal breaths only
on the effort channels, so dropping those channels genuinely hurts that
class.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import (Dataset, LabeledSeries, MIN_SEGMENT_LENGTH, STREAM_SYNTH,
                   SeededRng, ValidationError, order_labels)

log = logging.getLogger(__name__)

DEFAULT_CHANNELS = ("Pmask", "Flow", "Thor", "Abdo")
UNLABELED = "UNLABELED"

# Class frequencies of the reference corpus, used as default proportions.
REFERENCE_COUNTS = {"NP": 280110, "AC": 6385, "DT": 10595, "IE": 8040}


@dataclass(frozen=True)
class RawRecording:
    """A continuous multichannel recording, one vector per named channel."""

    id: str
    channels: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.channels:
            raise ValidationError(f"{self.id}: recording has no channels")
        lengths = {name: len(v) for name, v in self.channels.items()}
        if len(set(lengths.values())) > 1:
            raise ValidationError(f"{self.id}: unequal channel lengths {lengths}")
        object.__setattr__(self, "channels", {
            name: np.asarray(v, dtype=np.float64) for name, v in self.channels.items()
        })

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))


def load_recording(path, recording_id: str | None = None) -> RawRecording:
    """CSV with a header row of channel names, one sample per row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        names = [h.strip() for h in header]
        columns: list[list[float]] = [[] for _ in names]
        for ln, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(names):
                raise ValidationError(f"{path}:{ln}: expected {len(names)} values, got {len(row)}")
            try:
                for col, cell in zip(columns, row):
                    col.append(float(cell))
            except ValueError:
                raise ValidationError(f"{path}:{ln}: non-numeric sample") from None
    rid = recording_id if recording_id is not None else str(path)
    return RawRecording(id=rid, channels=dict(zip(names, columns)))


# ---------------------------------------------------------------------------
# Breath segmentation
# ---------------------------------------------------------------------------

def rolling_median(x: np.ndarray, window: int) -> np.ndarray:
    """Centered rolling median with edge replication."""
    if window < 1:
        raise ValidationError(f"window must be >= 1, got {window}")
    if window % 2 == 0:
        window += 1
    half = window // 2
    padded = np.concatenate([np.repeat(x[0], half), x, np.repeat(x[-1], half)])
    return np.median(sliding_window_view(padded, window), axis=1)


def detect_onsets(pmask: np.ndarray, h_on: float = 0.5, h_off: float = 0.2,
                  baseline_window: int = 51) -> list[int]:
    """Upward hysteresis crossings of the rolling-median baseline.

    An onset fires when the signal rises above baseline + h_on while the
    detector is released; it re-arms once the signal falls below
    baseline + h_off.
    """
    if h_off >= h_on:
        raise ValidationError(f"h_off ({h_off}) must be below h_on ({h_on})")
    baseline = rolling_median(pmask, baseline_window)
    hi = baseline + h_on
    lo = baseline + h_off
    onsets: list[int] = []
    in_breath = False
    for t in range(len(pmask)):
        if not in_breath and pmask[t] >= hi[t]:
            onsets.append(t)
            in_breath = True
        elif in_breath and pmask[t] < lo[t]:
            in_breath = False
    return onsets


def segment(recording: RawRecording, t: int = 150, h_on: float = 0.5,
            h_off: float = 0.2, baseline_window: int = 51) -> list[LabeledSeries]:
    """One unlabeled instance per inter-onset interval of the Pmask channel.

    Intervals longer than ``t`` are truncated, shorter ones zero-padded;
    the true length is kept in original_length. Intervals shorter than the
    minimum segment length are dropped.
    """
    if "Pmask" not in recording.channels:
        raise ValidationError(f"{recording.id}: Pmask channel required for segmentation")
    onsets = detect_onsets(recording.channels["Pmask"], h_on=h_on, h_off=h_off,
                           baseline_window=baseline_window)
    if not onsets:
        log.warning("%s: no breath onsets found", recording.id)
        return []
    names = list(recording.channels)
    stacked = np.stack([recording.channels[n] for n in names])
    out: list[LabeledSeries] = []
    for i in range(len(onsets) - 1):
        start, end = onsets[i], onsets[i + 1]
        length = min(end - start, t)
        if length < MIN_SEGMENT_LENGTH:
            continue
        values = np.zeros((len(names), t))
        values[:, :length] = stacked[:, start : start + length]
        out.append(LabeledSeries(id=f"{recording.id}-seg{i:04d}", values=values,
                                 label=UNLABELED, original_length=length,
                                 channel_names=tuple(names)))
    return out


# ---------------------------------------------------------------------------
# Train/validation split
# ---------------------------------------------------------------------------

def split(dataset: Dataset, train_fraction: float,
          rng: SeededRng) -> tuple[Dataset, Dataset]:
    """Stratified random split keeping every class on both sides."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    labels = np.asarray([x.label for x in dataset])
    gen = rng.generator()
    train_idx: list[int] = []
    val_idx: list[int] = []
    for lab in order_labels(labels):
        idx = np.flatnonzero(labels == lab)
        if len(idx) < 2:
            raise ValidationError(
                f"class {lab} has {len(idx)} instance(s); need at least 2 to stratify"
            )
        n_tr = int(math.floor(train_fraction * len(idx) + 0.5))
        n_tr = min(max(n_tr, 1), len(idx) - 1)
        perm = idx[gen.permutation(len(idx))]
        train_idx.extend(perm[:n_tr].tolist())
        val_idx.extend(perm[n_tr:].tolist())
    train_idx.sort()
    val_idx.sort()
    return (Dataset(tuple(dataset.instances[i] for i in train_idx)),
            Dataset(tuple(dataset.instances[i] for i in val_idx)))


def subset_channels(dataset: Dataset, indices) -> Dataset:
    """Restrict every instance to the given channel indices, in order."""
    indices = tuple(int(i) for i in indices)
    if not indices:
        raise ValidationError("channel subset must be non-empty")
    v = dataset.n_channels
    for i in indices:
        if not 0 <= i < v:
            raise ValidationError(f"channel index {i} out of range for {v} channels")
    out = []
    for x in dataset:
        out.append(LabeledSeries(
            id=x.id, values=x.values[list(indices), :], label=x.label,
            original_length=x.original_length,
            channel_names=tuple(x.channel_names[i] for i in indices),
        ))
    return Dataset(tuple(out))


# ---------------------------------------------------------------------------
# Synthetic waveform generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    n_instances: int
    class_proportions: dict = None
    noise: float = 0.1
    seed: int = 0
    t: int = 150

    def __post_init__(self):
        if self.n_instances <= 0:
            raise ValidationError(f"n_instances must be positive, got {self.n_instances}")
        if self.noise < 0:
            raise ValidationError(f"noise must be >= 0, got {self.noise}")
        if self.t < 30:
            raise ValidationError(f"t must be >= 30, got {self.t}")
        props = self.class_proportions or default_proportions()
        unknown = set(props) - set(REFERENCE_COUNTS)
        if unknown:
            raise ValidationError(f"unknown classes in proportions: {sorted(unknown)}")
        total = sum(props.values())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"class proportions sum to {total}, expected 1")
        object.__setattr__(self, "class_proportions", dict(props))


def default_proportions() -> dict:
    total = sum(REFERENCE_COUNTS.values())
    return {lab: c / total for lab, c in REFERENCE_COUNTS.items()}


def class_quotas(n: int, proportions: dict) -> dict:
    """Integer class counts by largest remainder; ties favor label order."""
    labels = order_labels(proportions)
    exact = {lab: n * proportions[lab] for lab in labels}
    counts = {lab: int(math.floor(exact[lab])) for lab in labels}
    short = n - sum(counts.values())
    remainders = sorted(labels, key=lambda lab: (-(exact[lab] - counts[lab]),
                                                 labels.index(lab)))
    for lab in remainders[:short]:
        counts[lab] += 1
    return counts


def _half_sine(width: int) -> np.ndarray:
    return np.sin(np.pi * (np.arange(width) + 0.5) / width)


def _add_pulse(pmask: np.ndarray, flow: np.ndarray, start: int, width: int,
               amp_p: float, amp_f: float, length: int) -> None:
    """One ventilator insufflation: pressure half-sine plus biphasic flow."""
    end = min(start + width, length)
    if end <= start:
        return
    shape = _half_sine(width)[: end - start]
    pmask[start:end] += amp_p * shape
    flow[start:end] += amp_f * shape
    exp_len = min(max(width // 2, 3), length - end)
    if exp_len > 0:
        decay = np.exp(-np.arange(exp_len) / max(width / 3.0, 1.0))
        flow[end : end + exp_len] -= 0.6 * amp_f * decay


def _add_effort(thor: np.ndarray, abdo: np.ndarray, start: int, width: int,
                amp: float, length: int) -> None:
    """In-phase chest/abdomen excursion; abdomen lags slightly."""
    end = min(start + width, length)
    if end > start:
        thor[start:end] += amp * _half_sine(width)[: end - start]
    lag = 2
    end_a = min(start + lag + width, length)
    if end_a > start + lag:
        abdo[start + lag : end_a] += 0.9 * amp * _half_sine(width)[: end_a - start - lag]


def _make_instance(label: str, gen: np.random.Generator,
                   cfg: SynthConfig) -> tuple[np.ndarray, int]:
    # Instances span the full window; the breath motif occupies a jittered
    # leading fraction and the rest is expiratory pause at baseline. Keeping
    # original_length = t means every discovered shapelet fits every
    # instance, so augmentation can never run out of usable shapelets.
    t = cfg.t
    length = t
    active = int(gen.uniform(0.72, 0.97) * t)
    amp_p = 12.0 + gen.normal(0.0, 1.0)
    amp_f = 8.0 + gen.normal(0.0, 0.8)
    amp_e = 1.5 + gen.normal(0.0, 0.15)
    t0 = int(gen.integers(3, 9))
    base_p = 5.0

    values = np.zeros((4, t))
    pmask, flow, thor, abdo = values
    if label == "NP":
        width = int(0.30 * active)
        _add_pulse(pmask, flow, t0, width, amp_p, amp_f, length)
        _add_effort(thor, abdo, t0, int(0.45 * active), amp_e, length)
    elif label == "DT":
        # Two supported breaths separated by an abnormally short gap,
        # both riding one sustained effort.
        width = int(0.22 * active)
        gap = int(0.05 * active)
        _add_pulse(pmask, flow, t0, width, amp_p, amp_f, length)
        _add_pulse(pmask, flow, t0 + width + gap, width, amp_p, amp_f, length)
        _add_effort(thor, abdo, t0, int(0.55 * active), amp_e, length)
    elif label == "AC":
        # A run of machine-triggered breaths with no matching effort.
        n_pulses = int(gen.integers(3, 5))
        width = int(0.15 * active)
        gap = int(0.04 * active)
        for p in range(n_pulses):
            _add_pulse(pmask, flow, t0 + p * (width + gap), width, amp_p, amp_f, length)
    elif label == "IE":
        # A normal supported breath plus an orphan effort during expiration
        # that the ventilator never answers: visible only on Thor/Abdo.
        width = int(0.30 * active)
        _add_pulse(pmask, flow, t0, width, amp_p, amp_f, length)
        _add_effort(thor, abdo, t0, int(0.45 * active), amp_e, length)
        orphan_amp = 1.5 + gen.normal(0.0, 0.15)
        orphan_start = t0 + int(0.55 * active)
        _add_effort(thor, abdo, orphan_start, int(0.25 * active), orphan_amp, length)
    else:
        raise ValidationError(f"no morphology defined for class {label}")

    pmask[:length] += base_p
    if cfg.noise > 0:
        values[:, :length] += gen.normal(0.0, cfg.noise, size=(4, length))
    return values, length


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """Pure function of the config: per-instance seeded streams, labels by
    construction, class counts by deterministic quota."""
    quotas = class_quotas(cfg.n_instances, cfg.class_proportions)
    labels_seq: list[str] = []
    for lab in order_labels(quotas):
        labels_seq.extend([lab] * quotas[lab])
    base = SeededRng(cfg.seed).derive(STREAM_SYNTH)
    instances = []
    for i, lab in enumerate(labels_seq):
        gen = base.derive(i).generator()
        values, length = _make_instance(lab, gen, cfg)
        instances.append(LabeledSeries(id=f"syn-{i:05d}", values=values, label=lab,
                                       original_length=length,
                                       channel_names=DEFAULT_CHANNELS))
    return Dataset(tuple(instances))
