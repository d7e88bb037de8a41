"""Domain types, configuration and deterministic randomness.

Everything downstream (discovery, augmentation, features, the model)
operates on the immutable types defined here. A multivariate instance is a
V x T float matrix zero-padded on the right; the true segment length is
kept in ``original_length`` so padding never leaks into any computation.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

# Canonical label universe for the ventilator-asynchrony task. Arbitrary
# finite label sets are accepted everywhere; this only fixes the preferred
# ordering when these four are in play.
CANONICAL_LABELS = ("NP", "AC", "DT", "IE")

MIN_SEGMENT_LENGTH = 3


class ValidationError(ValueError):
    """Raised when input data violates a structural invariant."""


def order_labels(labels: Iterable[str]) -> tuple[str, ...]:
    """Deterministic label ordering: canonical labels first (in canonical
    order), anything else lexicographic after them."""
    present = set(labels)
    ordered = [lab for lab in CANONICAL_LABELS if lab in present]
    ordered += sorted(present - set(CANONICAL_LABELS))
    return tuple(ordered)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LabeledSeries:
    """One multivariate time series instance.

    values : float64 matrix of shape (V, T)
        Columns at index >= original_length are exactly zero.
    original_length : int
        Number of real samples before zero-padding; at least 3.
    """

    id: str
    values: np.ndarray
    label: str
    original_length: int
    channel_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        v, t = self.values.shape
        if len(self.channel_names) != v:
            raise ValidationError(
                f"{self.id}: {len(self.channel_names)} channel names for {v} channels"
            )
        if not MIN_SEGMENT_LENGTH <= self.original_length <= t:
            raise ValidationError(
                f"{self.id}: original_length {self.original_length} outside [3, {t}]"
            )
        if self.original_length < t and np.any(self.values[:, self.original_length:] != 0.0):
            raise ValidationError(f"{self.id}: non-zero values in the padded tail")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def channel(self, v: int) -> np.ndarray:
        """Unpadded samples of channel ``v``."""
        return self.values[v, : self.original_length]


@dataclass(frozen=True)
class Shapelet:
    """A discriminative subsequence found by discovery.

    ``values`` is the slice ``[start, end]`` (inclusive) of channel
    ``channel`` of the source instance. ``max_train_psd`` is the largest
    finite distance observed against the training set at discovery time,
    used as the "no match possible" sentinel by the feature transform.
    """

    values: np.ndarray
    channel: int
    source_id: str
    start: int
    end: int
    label: str
    info_gain: float = 0.0
    split_threshold: float = 0.0
    max_train_psd: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.start >= self.end:
            raise ValidationError(f"shapelet span [{self.start}, {self.end}] is degenerate")
        if len(self.values) != self.end - self.start + 1:
            raise ValidationError("shapelet values do not match its span")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ShapeletPool:
    """Class-balanced ordered collection of selected shapelets."""

    shapelets: tuple[Shapelet, ...]
    per_class_quota: int
    labels: tuple[str, ...]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "shapelets", tuple(self.shapelets))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.shapelets)

    def of_class(self, label: str) -> list[Shapelet]:
        return [s for s in self.shapelets if s.label == label]


@dataclass(frozen=True)
class Dataset:
    """Ordered list of instances plus derived class bookkeeping."""

    instances: tuple[LabeledSeries, ...]

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i: int) -> LabeledSeries:
        return self.instances[i]

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return order_labels(x.label for x in self.instances)

    @cached_property
    def class_counts(self) -> dict[str, int]:
        counts = {lab: 0 for lab in self.labels}
        for x in self.instances:
            counts[x.label] += 1
        return counts

    @property
    def length(self) -> int:
        return self.instances[0].length if self.instances else 0

    @property
    def n_channels(self) -> int:
        return self.instances[0].n_channels if self.instances else 0


@dataclass(frozen=True)
class Config:
    """Run configuration. Defaults follow the method's reference setup;
    ``g`` is split evenly across classes (integer division)."""

    k: int = 10                     # number of perceptually important points
    g: int = 40                     # pool size, split evenly over classes
    r_sa: int = 10                  # augmented copies per minority instance
    noise_sigma_scale: float = 0.1  # noise std as a fraction of channel std
    logsig_depth: int = 2
    channel_subset: tuple[int, ...] | None = None
    seed: int = 0
    clamp_mask: bool = False        # cap the noise mask factor at 1
    znorm: bool = False             # z-normalize windows in distance search
    use_augment: bool = True
    use_shapelet_features: bool = True
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    folds: int = 5
    threads: int = 1

    def __post_init__(self):
        if self.k < 3:
            raise ValidationError(f"k must be >= 3, got {self.k}")
        if self.channel_subset is not None:
            object.__setattr__(self, "channel_subset", tuple(self.channel_subset))

    def with_updates(self, **kwargs) -> "Config":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["channel_subset"] is not None:
            d["channel_subset"] = list(d["channel_subset"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if known.get("channel_subset") is not None:
            known["channel_subset"] = tuple(known["channel_subset"])
        return cls(**known)


def result_config(config: Config) -> dict:
    """Config as recorded inside result artifacts. The thread count only
    changes scheduling, never values, so it is dropped here; runs that
    differ only in threads produce identical pools and checkpoints."""
    d = config.to_dict()
    d.pop("threads")
    return d


def config_hash(config: Config) -> str:
    """Stable digest of a configuration, used to tag artifacts."""
    blob = json.dumps(result_config(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# Fixed stream indices so every pipeline stage draws from its own
# independent substream of the run seed.
STREAM_SYNTH = 0
STREAM_SPLIT = 1
STREAM_AUGMENT = 2
STREAM_TRAIN = 3
STREAM_TUNE = 4


@dataclass(frozen=True)
class SeededRng:
    """Deterministic, splittable random stream.

    Streams are identified by (seed, stream path); the generator for a
    stream always starts at draw 0, so results never depend on how work is
    interleaved across tasks. Derive child streams with ``derive``.
    """

    seed: int
    stream: tuple[int, ...] = ()

    def derive(self, task_index: int) -> "SeededRng":
        return SeededRng(self.seed, self.stream + (int(task_index),))

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.stream))


def derive_stream(rng: SeededRng, task_index: int) -> SeededRng:
    """Independent deterministic substream for task ``task_index``."""
    return rng.derive(task_index)


# ---------------------------------------------------------------------------
# NDJSON dataset serialization
# ---------------------------------------------------------------------------

def series_to_record(x: LabeledSeries) -> dict:
    return {
        "id": x.id,
        "label": x.label,
        "original_length": int(x.original_length),
        "channels": list(x.channel_names),
        "values": [[float(v) for v in row] for row in x.values],
    }


def series_from_record(rec: dict) -> LabeledSeries:
    try:
        return LabeledSeries(
            id=str(rec["id"]),
            values=np.asarray(rec["values"], dtype=np.float64),
            label=str(rec["label"]),
            original_length=int(rec["original_length"]),
            channel_names=tuple(rec["channels"]),
        )
    except KeyError as err:
        raise ValidationError(f"dataset record missing field {err}") from err


def save_dataset(path, dataset: Dataset) -> None:
    with open(path, "w") as fh:
        for x in dataset:
            fh.write(json.dumps(series_to_record(x)) + "\n")


def load_dataset(path) -> Dataset:
    instances = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {err}") from err
            instances.append(series_from_record(rec))
    return Dataset(tuple(instances))
