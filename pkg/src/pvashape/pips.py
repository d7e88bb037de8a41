"""Perceptually important point extraction.

Starting from the two endpoints, indices are added one at a time; each
step picks the point with the largest perpendicular distance to the chord
between its two bracketing selected points (smallest index on ties). The
incremental states are exposed because candidate generation consumes the
point set after every insertion.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np


@dataclass(frozen=True)
class PipState:
    """Selected indices after one insertion.

    pips : strictly increasing tuple, always containing both endpoints
    last_added : (series index, position of that index within ``pips``)
    """

    pips: tuple[int, ...]
    last_added: tuple[int, int]


def reconstruction_distance(series: np.ndarray, a: int, b: int, t: int) -> float:
    """Perpendicular distance of point ``(t, series[t])`` to the chord
    through ``(a, series[a])`` and ``(b, series[b])``; time in index units."""
    series = np.asarray(series, dtype=np.float64)
    dx = float(b - a)
    dy = float(series[b] - series[a])
    num = abs(dy * (t - a) - dx * (series[t] - series[a]))
    return num / float(np.hypot(dx, dy))


def _segment_distances(series: np.ndarray, a: int, b: int) -> np.ndarray:
    """Distances of all interior points of one chord, vectorized."""
    ts = np.arange(a + 1, b)
    dx = float(b - a)
    dy = series[b] - series[a]
    num = np.abs(dy * (ts - a) - dx * (series[ts] - series[a]))
    return num / np.hypot(dx, dy)


def extract_pips_incremental(series: np.ndarray, k: int) -> Iterator[PipState]:
    """Yield the point set after each of the ``k - 2`` insertions.

    Requires ``k >= 3`` and ``len(series) >= k``; the caller passes the
    unpadded channel so padding never attracts points.
    """
    series = np.asarray(series, dtype=np.float64)
    n = len(series)
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    if n < k:
        raise ValueError(f"series of length {n} cannot host {k} points")

    pips = [0, n - 1]
    for _ in range(k - 2):
        best_dist = -1.0
        best_t = -1
        for a, b in zip(pips[:-1], pips[1:]):
            if b - a < 2:
                continue
            d = _segment_distances(series, a, b)
            j = int(np.argmax(d))          # first max: smallest index in segment
            if d[j] > best_dist:
                best_dist = float(d[j])
                best_t = a + 1 + j
        # Segments are scanned left to right and argmax keeps the first
        # maximum, so exact ties already resolve to the smallest index.
        idx = int(np.searchsorted(pips, best_t))
        pips.insert(idx, best_t)
        yield PipState(pips=tuple(pips), last_added=(best_t, idx))


def extract_pips(series: np.ndarray, k: int) -> tuple[int, ...]:
    """Final point set only."""
    state = None
    for state in extract_pips_incremental(series, k):
        pass
    return state.pips if state is not None else (0, len(series) - 1)
