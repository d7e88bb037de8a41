"""Feature transforms: shapelet distances plus signed-log statistics.

The shapelet part of a feature vector is the instance's best-match
distance to every pool shapelet. The statistical part summarizes each
channel with one scalar per order: order 1 sums a signed smooth log of
consecutive increments, order n >= 2 sums it over the last step of every
increasing index tuple of size n. The smooth log sign(d) * ln(1 + |d|)
keeps the "logarithmic difference" behaviour while being defined (and
odd) for every real difference.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, LabeledSeries, ShapeletPool
from .distance import ShapeletLengthError, psd
from .parallel import thread_map

EPS_SCALE = 1e-8


@dataclass(frozen=True)
class FeatureVector:
    """Shapelet block, statistics block, and their concatenation."""

    z_sha: np.ndarray
    z_sta: np.ndarray

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.z_sha, self.z_sta])


def signed_log(d: np.ndarray) -> np.ndarray:
    """Odd, monotone, everywhere-defined log of a difference."""
    d = np.asarray(d, dtype=np.float64)
    return np.sign(d) * np.log1p(np.abs(d))


def shapelet_transform(x: LabeledSeries, pool: ShapeletPool,
                       znorm: bool = False) -> np.ndarray:
    """Distance of the instance to every pool shapelet, in pool order.

    Shapelets longer than the instance's unpadded region cannot match; the
    entry falls back to the largest distance the shapelet produced on the
    training set, recorded at discovery time.
    """
    out = np.empty(len(pool))
    for j, s in enumerate(pool.shapelets):
        if len(s) > x.original_length:
            if s.max_train_psd is None:
                raise ShapeletLengthError(
                    f"shapelet {j} does not fit instance {x.id} and the pool "
                    "carries no fallback distance (not produced by discovery)"
                )
            out[j] = s.max_train_psd
        else:
            out[j] = psd(x, s.channel, s.values, znorm=znorm).psd
    return out


def logsig_transform(x: LabeledSeries, depth: int) -> np.ndarray:
    """Per-channel signed-log statistics up to ``depth``, channel-major.

    Output length is V * depth: channel 0's orders 1..depth, then
    channel 1's, and so on. Only the unpadded region contributes.
    """
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    out = np.zeros(x.n_channels * depth)
    for v in range(x.n_channels):
        series = x.channel(v)
        terms = _channel_terms(series, depth)
        out[v * depth : (v + 1) * depth] = terms
    return out


def _channel_terms(series: np.ndarray, depth: int) -> np.ndarray:
    n = len(series)
    terms = np.zeros(depth)
    terms[0] = float(np.sum(signed_log(np.diff(series))))
    if depth >= 2:
        # The order-n summand depends only on the last two indices; the
        # leading n-2 indices contribute a binomial count of the ways to
        # sit below the second-to-last one.
        diffs = signed_log(series[None, :] - series[:, None])
        row_sums = np.triu(diffs, k=1).sum(axis=1)        # over b > a, per a
        a = np.arange(n)
        for order in range(2, depth + 1):
            coef = np.array([math.comb(int(ai), order - 2) for ai in a], dtype=np.float64)
            terms[order - 1] = float(np.dot(coef, row_sums))
    return terms


def instance_features(x: LabeledSeries, pool: ShapeletPool | None, depth: int,
                      include_shapelets: bool = True,
                      znorm: bool = False) -> FeatureVector:
    z_sha = (shapelet_transform(x, pool, znorm=znorm)
             if include_shapelets and pool is not None else np.zeros(0))
    z_sta = logsig_transform(x, depth)
    return FeatureVector(z_sha=z_sha, z_sta=z_sta)


def transform_dataset(dataset: Dataset, pool: ShapeletPool | None, depth: int,
                      include_shapelets: bool = True, znorm: bool = False,
                      threads: int = 1) -> tuple[np.ndarray, list[str], list[str]]:
    """Feature matrix for a dataset, row order matching instance order."""

    def one(x: LabeledSeries) -> np.ndarray:
        return instance_features(x, pool, depth, include_shapelets, znorm).z

    rows = thread_map(one, list(dataset), threads)
    z = np.stack(rows) if rows else np.zeros((0, 0))
    return z, [x.id for x in dataset], [x.label for x in dataset]


@dataclass(frozen=True)
class FeatureScaler:
    """Per-coordinate standardization fitted on training features."""

    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64))


def fit_scaler(features: np.ndarray) -> FeatureScaler:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("need at least two feature vectors to fit a scaler")
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), EPS_SCALE)
    return FeatureScaler(mean=mean, std=std)


def apply_scaler(features: np.ndarray, scaler: FeatureScaler) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - scaler.mean) / scaler.std


# ---------------------------------------------------------------------------
# Feature-matrix NDJSON dump
# ---------------------------------------------------------------------------

def save_features(path, z: np.ndarray, ids: list[str], labels: list[str]) -> None:
    with open(path, "w") as fh:
        for row, id_, lab in zip(z, ids, labels):
            fh.write(json.dumps({"id": id_, "label": lab,
                                 "z": [float(v) for v in row]}) + "\n")


def load_features(path) -> tuple[np.ndarray, list[str], list[str]]:
    rows, ids, labels = [], [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            rows.append(np.asarray(rec["z"], dtype=np.float64))
            ids.append(str(rec["id"]))
            labels.append(str(rec["label"]))
    z = np.stack(rows) if rows else np.zeros((0, 0))
    return z, ids, labels
