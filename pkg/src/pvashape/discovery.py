"""Offline shapelet discovery.

Candidates are the spans of three consecutive perceptually important
points, collected after every point insertion on every channel of every
instance. Each candidate is scored by the information gain of the best
one-vs-rest threshold split on its subsequence distances to the whole
training set, and the top candidates per class form the pool.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .core import (Config, Dataset, LabeledSeries, Shapelet, ShapeletPool,
                   result_config)
from .distance import QUERY_BLOCK, prepare_windows, prepared_min_cid
from .parallel import thread_map
from .pips import extract_pips_incremental

log = logging.getLogger(__name__)

MIN_CANDIDATE_LENGTH = 3
# Gains at or below this are treated as "no informative split": genuinely
# nonzero gains on small sets sit orders of magnitude above float noise.
GAIN_EPS = 1e-12


@dataclass(frozen=True)
class Candidate:
    """A scored-pending shapelet candidate (inclusive span of one channel)."""

    values: np.ndarray
    channel: int
    source_id: str
    start: int
    end: int
    label: str

    def __len__(self) -> int:
        return len(self.values)


def generate_candidates(x: LabeledSeries, k: int) -> list[Candidate]:
    """All unique three-point spans produced while extracting ``k`` points.

    After each insertion at sorted position ``idx``, the spans
    ``[P[idx - z], P[idx + 2 - z]]`` for ``z`` in 0..2 (where they exist)
    are emitted; spans shorter than 3 and duplicates are dropped.
    """
    out: list[Candidate] = []
    seen: set[tuple[int, int, int]] = set()
    for v in range(x.n_channels):
        series = x.channel(v)
        for state in extract_pips_incremental(series, k):
            p = state.pips
            idx = state.last_added[1]
            for z in (0, 1, 2):
                i0, i2 = idx - z, idx + 2 - z
                if i0 < 0 or i2 > len(p) - 1:
                    continue
                start, end = p[i0], p[i2]
                if end - start + 1 < MIN_CANDIDATE_LENGTH:
                    continue
                key = (v, start, end)
                if key in seen:
                    continue
                seen.add(key)
                out.append(Candidate(
                    values=x.values[v, start : end + 1].copy(),
                    channel=v, source_id=x.id, start=start, end=end, label=x.label,
                ))
    return out


def _entropy(p: np.ndarray) -> np.ndarray:
    """Binary entropy in bits, with 0 log 0 = 0."""
    p = np.clip(p, 0.0, 1.0)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p)) - (q * np.log2(q))
    return np.where((p <= 0.0) | (p >= 1.0), 0.0, h)


def information_gain(distances: list[tuple[float, bool]]) -> tuple[float, float]:
    """Best one-vs-rest split of labelled distances.

    Thresholds are midpoints between consecutive distinct sorted values;
    returns (gain in bits, threshold), taking the smallest threshold on
    gain ties. When no split attains positive gain (single class, tied
    distances, uninformative ordering) the result is (0, minimum distance).
    """
    if not distances:
        raise ValueError("no distances to split")
    d = np.asarray([t[0] for t in distances], dtype=np.float64)
    y = np.asarray([bool(t[1]) for t in distances])
    gains, thresholds = _gain_block(d[None, :], y[None, :])
    return float(gains[0]), float(thresholds[0])


def _gain_block(dists: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized gain search over a block of candidates.

    dists : (B, M) distance matrix, +inf marking instances the candidate
        does not fit (excluded from the split).
    targets : (B, M) one-vs-rest labels.

    Returns per-row (gain, threshold).
    """
    b, m = dists.shape
    order = np.argsort(dists, axis=1, kind="stable")
    d_sorted = np.take_along_axis(dists, order, axis=1)
    y_sorted = np.take_along_axis(targets, order, axis=1)
    valid = np.isfinite(d_sorted)                       # sorted to a prefix
    n_valid = valid.sum(axis=1)
    t_total = (y_sorted & valid).sum(axis=1)

    cum_t = np.cumsum(y_sorted & valid, axis=1).astype(np.float64)
    pos = np.arange(1, m + 1, dtype=np.float64)

    n_left = np.broadcast_to(pos[None, :-1], (b, m - 1)) if m > 1 else np.zeros((b, 0))
    t_left = cum_t[:, :-1]
    n_tot = n_valid[:, None].astype(np.float64)
    t_tot = t_total[:, None].astype(np.float64)
    n_right = n_tot - n_left
    t_right = t_tot - t_left

    with np.errstate(invalid="ignore", divide="ignore"):
        h_parent = _entropy(t_tot / np.maximum(n_tot, 1.0))
        h_left = _entropy(t_left / np.maximum(n_left, 1.0))
        h_right = _entropy(t_right / np.maximum(n_right, 1.0))
        gains = h_parent - (n_left / n_tot) * h_left - (n_right / n_tot) * h_right

    # A split after sorted position i needs both sides non-empty and a
    # strictly larger next distance (equal values cannot be separated).
    splittable = (
        (np.arange(1, m)[None, :] < n_valid[:, None])
        & (d_sorted[:, 1:] > d_sorted[:, :-1])
        & np.isfinite(d_sorted[:, 1:])
    ) if m > 1 else np.zeros((b, 0), dtype=bool)
    gains = np.where(splittable, gains, -1.0)

    if m > 1 and gains.shape[1] > 0:
        best = np.argmax(gains, axis=1)                 # first max: smallest threshold
        best_gain = np.take_along_axis(gains, best[:, None], axis=1)[:, 0]
        left_d = np.take_along_axis(d_sorted, best[:, None], axis=1)[:, 0]
        right_d = np.take_along_axis(d_sorted, best[:, None] + 1, axis=1)[:, 0]
        thresholds = 0.5 * (left_d + right_d)
    else:
        best_gain = np.full(b, -1.0)
        thresholds = np.zeros(b)

    min_d = np.where(n_valid > 0, d_sorted[:, 0], 0.0)
    degenerate = best_gain <= GAIN_EPS
    gains_out = np.where(degenerate, 0.0, best_gain)
    thresholds_out = np.where(degenerate, min_d, thresholds)
    return gains_out, thresholds_out


def discover(dataset: Dataset, config: Config) -> ShapeletPool:
    """Run candidate generation, scoring and per-class selection.

    Deterministic for a fixed (dataset, config): candidate order, scoring
    blocks and tie-breaking are all schedule-independent.
    """
    if len(dataset) == 0:
        raise ValueError("cannot discover shapelets on an empty dataset")
    classes = dataset.labels
    quota = max(config.g // len(classes), 1)

    candidates: list[Candidate] = []
    skipped = 0
    for x in dataset:
        if x.original_length < config.k:
            skipped += 1
            continue
        candidates.extend(generate_candidates(x, config.k))
    if skipped:
        log.warning("skipped %d instances shorter than k=%d during discovery",
                    skipped, config.k)
    if not candidates:
        raise ValueError("no shapelet candidates could be generated")

    gains, thresholds, max_psds = _score_candidates(dataset, candidates, config)

    pool: list[Shapelet] = []
    for lab in classes:
        idx = [i for i, c in enumerate(candidates) if c.label == lab]
        idx.sort(key=lambda i: (-gains[i], len(candidates[i]),
                                candidates[i].start, candidates[i].source_id))
        if len(idx) < quota:
            log.warning("class %s supplied %d candidates for a quota of %d",
                        lab, len(idx), quota)
        for i in idx[:quota]:
            c = candidates[i]
            pool.append(Shapelet(
                values=c.values, channel=c.channel, source_id=c.source_id,
                start=c.start, end=c.end, label=c.label,
                info_gain=float(gains[i]), split_threshold=float(thresholds[i]),
                max_train_psd=float(max_psds[i]),
            ))
    return ShapeletPool(shapelets=tuple(pool), per_class_quota=quota,
                        labels=classes, config=result_config(config))


def _score_candidates(dataset: Dataset, candidates: list[Candidate],
                      config: Config) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gain, threshold and max finite distance for every candidate."""
    lengths = np.asarray([x.original_length for x in dataset], dtype=np.int64)
    labels = np.asarray([x.label for x in dataset])
    by_channel = {}

    gains = np.zeros(len(candidates))
    thresholds = np.zeros(len(candidates))
    max_psds = np.zeros(len(candidates))

    groups: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(candidates):
        groups.setdefault((c.channel, len(c)), []).append(i)

    # One window-matrix preparation per (channel, length) group, then
    # fixed-size query blocks against it. Fixed block boundaries keep every
    # matmul shape independent of the thread count, which keeps results
    # bit-identical across schedules.
    for (channel, l), idx in sorted(groups.items()):
        if channel not in by_channel:
            by_channel[channel] = np.stack([x.values[channel] for x in dataset])
        prep = prepare_windows(by_channel[channel], lengths, l, znorm=config.znorm)
        blocks = [idx[j : j + QUERY_BLOCK] for j in range(0, len(idx), QUERY_BLOCK)]

        def run_block(block, prep=prep):
            queries = np.stack([candidates[i].values for i in block])
            dists, _ = prepared_min_cid(prep, queries)
            dmat = dists.T                               # (b, M)
            targets = np.stack([labels == candidates[i].label for i in block])
            g, th = _gain_block(dmat, targets)
            finite = np.where(np.isfinite(dmat), dmat, -np.inf)
            return block, g, th, np.max(finite, axis=1)

        for block, g, th, mx in thread_map(run_block, blocks, config.threads):
            gains[block] = g
            thresholds[block] = th
            max_psds[block] = mx
    return gains, thresholds, max_psds


# ---------------------------------------------------------------------------
# Pool serialization
# ---------------------------------------------------------------------------

def pool_to_dict(pool: ShapeletPool) -> dict:
    return {
        "config": pool.config,
        "labels": list(pool.labels),
        "per_class_quota": pool.per_class_quota,
        "shapelets": [
            {
                "values": [float(v) for v in s.values],
                "channel": s.channel,
                "source_id": s.source_id,
                "start": s.start,
                "end": s.end,
                "label": s.label,
                "info_gain": s.info_gain,
                "split_threshold": s.split_threshold,
                "max_train_psd": s.max_train_psd,
            }
            for s in pool.shapelets
        ],
    }


def pool_from_dict(d: dict) -> ShapeletPool:
    shapelets = tuple(
        Shapelet(
            values=np.asarray(rec["values"], dtype=np.float64),
            channel=int(rec["channel"]), source_id=str(rec["source_id"]),
            start=int(rec["start"]), end=int(rec["end"]), label=str(rec["label"]),
            info_gain=float(rec["info_gain"]),
            split_threshold=float(rec["split_threshold"]),
            max_train_psd=(None if rec.get("max_train_psd") is None
                           else float(rec["max_train_psd"])),
        )
        for rec in d["shapelets"]
    )
    return ShapeletPool(shapelets=shapelets, per_class_quota=int(d["per_class_quota"]),
                        labels=tuple(d["labels"]), config=dict(d.get("config", {})))


def save_pool(path, pool: ShapeletPool) -> None:
    with open(path, "w") as fh:
        json.dump(pool_to_dict(pool), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_pool(path) -> ShapeletPool:
    with open(path) as fh:
        return pool_from_dict(json.load(fh))
