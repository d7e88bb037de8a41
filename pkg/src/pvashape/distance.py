"""Complexity-invariant subsequence distance and best-match search.

The subsequence distance between an instance and a query of length ``l``
is the minimum complexity-invariant distance (CID) over every window of
the instance's channel that lies fully inside the unpadded region. CID is
the Euclidean distance scaled by the ratio of the two series' complexity
estimates, which penalizes matching a wiggly query against a flat window
and vice versa.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import LabeledSeries

# Guards the complexity ratio when one side is constant (zero complexity).
EPS_COMPLEXITY = 1e-8
# Floors the window std when z-normalization is enabled.
EPS_STD = 1e-8


class ShapeletLengthError(ValueError):
    """Query longer than the instance's unpadded region: no window exists."""


@dataclass(frozen=True)
class MatchResult:
    """Best window for a query: its distance, start index and values."""

    psd: float
    offset: int
    window: np.ndarray


def complexity_estimate(q: np.ndarray) -> float:
    """Root of the summed squared first differences; 0 for constant input."""
    q = np.asarray(q, dtype=np.float64)
    if q.size <= 1:
        return 0.0
    d = np.diff(q)
    return float(np.sqrt(np.dot(d, d)))


def _complexity_factor(ce_a, ce_b):
    hi = np.maximum(ce_a, ce_b)
    lo = np.maximum(np.minimum(ce_a, ce_b), EPS_COMPLEXITY)
    return hi / lo


def cid(q: np.ndarray, s: np.ndarray) -> float:
    """Complexity-invariant distance between two equal-length vectors."""
    q = np.asarray(q, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if q.shape != s.shape:
        raise ValueError(f"length mismatch: {q.shape} vs {s.shape}")
    d = q - s
    ed = float(np.sqrt(np.dot(d, d)))
    return ed * float(_complexity_factor(complexity_estimate(q), complexity_estimate(s)))


def _znorm_rows(a: np.ndarray) -> np.ndarray:
    mean = a.mean(axis=-1, keepdims=True)
    std = np.maximum(a.std(axis=-1, keepdims=True), EPS_STD)
    return (a - mean) / std


def window_cid_profile(series: np.ndarray, s: np.ndarray, znorm: bool = False) -> np.ndarray:
    """CID of the query against every window of a 1-D series.

    ``series`` must already be trimmed to the unpadded region. Returns an
    array of length ``len(series) - len(s) + 1``. This is the reference
    (non-batched) computation; every user-facing distance comes from here.
    """
    series = np.asarray(series, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    l = len(s)
    if l > len(series):
        raise ShapeletLengthError(f"query of length {l} vs series of length {len(series)}")
    windows = sliding_window_view(series, l)
    if znorm:
        windows = _znorm_rows(windows)
        s = _znorm_rows(s[None, :])[0]
    diff = windows - s
    ed = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    if l >= 2:
        dw = np.diff(windows, axis=1)
        ce_w = np.sqrt(np.einsum("ij,ij->i", dw, dw))
        ds = np.diff(s)
        ce_s = np.sqrt(np.dot(ds, ds))
    else:
        ce_w = np.zeros(len(windows))
        ce_s = 0.0
    return ed * _complexity_factor(ce_w, ce_s)


def psd(x: LabeledSeries, channel: int, s: np.ndarray, znorm: bool = False) -> MatchResult:
    """Minimum-CID match of query ``s`` on one channel of an instance.

    Windows never extend into the zero-padded tail. Ties resolve to the
    smallest start index.
    """
    if not 0 <= channel < x.n_channels:
        raise ValueError(f"channel {channel} out of range for {x.n_channels} channels")
    s = np.asarray(s, dtype=np.float64)
    if len(s) > x.original_length:
        raise ShapeletLengthError(
            f"shapelet of length {len(s)} does not fit instance {x.id} "
            f"(original_length {x.original_length})"
        )
    series = x.channel(channel)
    profile = window_cid_profile(series, s, znorm=znorm)
    j = int(np.argmin(profile))
    return MatchResult(psd=float(profile[j]), offset=j, window=series[j : j + len(s)].copy())


# ---------------------------------------------------------------------------
# Batched search used by discovery scoring
# ---------------------------------------------------------------------------
# Discovery evaluates every candidate against every training instance; the
# reference path above is far too slow for that, so same-length queries are
# scored jointly with one windows-by-queries matmul. Block sizes are fixed
# constants: results are bit-identical no matter how work is scheduled.

QUERY_BLOCK = 64
INSTANCE_CHUNK = 128


@dataclass(frozen=True)
class PreparedWindows:
    """Per-(channel, length) window statistics shared across query blocks.

    Building the contiguous window matrix dominates the cost of a single
    batched call, so discovery prepares it once per group and scores many
    query blocks against it.
    """

    m: int
    w: int
    l: int
    flat: np.ndarray          # (M*W, l+2) windows extended with [sq_w, 1] columns
    invalid: np.ndarray       # (M, W) True where the window leaves the unpadded region
    ce2: np.ndarray           # (M, W) squared window complexity (z-scored if znorm)
    inv_ce2: np.ndarray       # (M, W) 1 / max(window complexity, eps)^2
    znorm: bool


def prepare_windows(values: np.ndarray, lengths: np.ndarray, l: int,
                    znorm: bool = False) -> PreparedWindows:
    """Window statistics of one channel for all queries of length ``l``.

    The window matrix carries two extra columns, the window's squared norm
    and a constant one. Dotting a row with an extended query
    ``[-2q, 1, ||q||^2]`` then yields the squared Euclidean distance straight
    from the matmul. Under z-normalization the stored windows are the raw
    values divided by the window std: a z-scored query sums to zero, so the
    mean term drops out of the cross product and the same layout holds.
    """
    values = np.asarray(values, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    m, t = values.shape
    w = t - l + 1
    if w <= 0:
        raise ShapeletLengthError(f"query length {l} exceeds series length {t}")

    windows = sliding_window_view(values, l, axis=1)          # (M, W, l) view

    # Sliding complexity and sum of squares via prefix sums.
    d2 = np.square(np.diff(values, axis=1))
    ce2 = _sliding_sum(d2, l - 1) if l >= 2 else np.zeros((m, w))
    ce_w = np.sqrt(np.maximum(ce2, 0.0))
    sq = _sliding_sum(np.square(values), l)

    flat = np.empty((m * w, l + 2))
    ce_eff = ce_w
    if znorm:
        mean_w = _sliding_sum(values, l) / l
        var_w = np.maximum(sq / l - np.square(mean_w), 0.0)
        std_w = np.maximum(np.sqrt(var_w), EPS_STD)
        np.divide(windows.reshape(m * w, l), std_w.reshape(m * w, 1), out=flat[:, :l])
        flat[:, l] = (l * var_w / np.square(std_w)).ravel()   # ||z-scored window||^2
        ce_eff = ce_w / std_w
    else:
        flat[:, :l] = windows.reshape(m * w, l)
        flat[:, l] = sq.ravel()
    flat[:, l + 1] = 1.0

    ce2_eff = np.square(ce_eff)
    inv_ce2 = np.square(1.0 / np.maximum(ce_eff, EPS_COMPLEXITY))

    n_valid = np.maximum(lengths - l + 1, 0)                  # valid windows per instance
    invalid = np.arange(w)[None, :] >= n_valid[:, None]       # (M, W)
    return PreparedWindows(m=m, w=w, l=l, flat=flat, invalid=invalid,
                           ce2=ce2_eff, inv_ce2=inv_ce2, znorm=znorm)


def prepared_min_cid(prep: PreparedWindows,
                     queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum CID of one query block against prepared windows.

    Callers must chunk queries into fixed QUERY_BLOCK-sized blocks so the
    matmul shapes (and therefore the accumulation order) never depend on
    scheduling. Instances are likewise processed in fixed INSTANCE_CHUNK
    slices with preallocated scratch, which keeps the working set small and
    avoids churning large temporaries; comparisons happen on squared CID
    (the square root is monotone) and the root is taken once on the minima.

    The complexity ratio is applied squared via
    ``cf^2 = max(ce_w^2 / max(ce_q, eps)^2, ce_q^2 / max(ce_w, eps)^2)``,
    which equals the reference ``(max(ce) / max(min(ce), eps))^2`` for all
    non-negative inputs but needs only precomputed squares and reciprocals.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, l = queries.shape
    if l != prep.l:
        raise ValueError(f"query length {l} does not match prepared length {prep.l}")
    m, w = prep.m, prep.w

    qz = _znorm_rows(queries) if prep.znorm else queries
    sq_q = np.einsum("ij,ij->i", qz, qz)
    dq = np.diff(qz, axis=1)
    ce_q = np.sqrt(np.einsum("ij,ij->i", dq, dq)) if l >= 2 else np.zeros(n)
    ce2_q = np.square(ce_q)
    inv_ce2_q = np.square(1.0 / np.maximum(ce_q, EPS_COMPLEXITY))

    # Extended query: dotted with an extended window row this produces the
    # squared Euclidean distance directly (see prepare_windows).
    qext = np.empty((l + 2, n))
    qext[:l] = -2.0 * qz.T
    qext[l] = 1.0
    qext[l + 1] = sq_q

    dists = np.empty((m, n))
    offsets = np.empty((m, n), dtype=np.int64)
    chunk = min(INSTANCE_CHUNK, m)
    gemm = np.empty((chunk * w, n))
    scratch = np.empty((2, chunk, w, n))
    for i0 in range(0, m, chunk):
        i1 = min(i0 + chunk, m)
        c = i1 - i0
        buf = np.matmul(prep.flat[i0 * w : i1 * w], qext, out=gemm[: c * w])
        buf = buf.reshape(c, w, n)
        # Squared complexity factor, then squared CID.
        t1 = np.multiply(prep.ce2[i0:i1, :, None], inv_ce2_q, out=scratch[0, :c])
        t2 = np.multiply(prep.inv_ce2[i0:i1, :, None], ce2_q, out=scratch[1, :c])
        np.maximum(t1, t2, out=t1)
        np.multiply(buf, t1, out=buf)
        buf[prep.invalid[i0:i1]] = np.inf
        am = np.argmin(buf, axis=1)                  # first index wins ties
        offsets[i0:i1] = am
        dists[i0:i1] = np.take_along_axis(buf, am[:, None, :], axis=1)[:, 0, :]
    # ed^2 can round slightly negative for near-identical pairs; clip before
    # the root. Rows with no valid window stay +inf and report offset -1.
    np.sqrt(np.maximum(dists, 0.0, out=dists), out=dists)
    offsets[~np.isfinite(dists)] = -1
    return dists, offsets


def batch_min_cid(values: np.ndarray, lengths: np.ndarray, queries: np.ndarray,
                  znorm: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Minimum CID of each query against each instance's valid windows.

    Parameters
    ----------
    values : (M, T) matrix of one channel across M instances
    lengths : (M,) unpadded lengths
    queries : (n, l) equal-length queries

    Returns ``(dists, offsets)`` of shape (M, n); entries are +inf / -1
    where the query does not fit the instance.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    n, l = queries.shape
    prep = prepare_windows(values, lengths, l, znorm=znorm)
    dists = np.full((prep.m, n), np.inf)
    offsets = np.full((prep.m, n), -1, dtype=np.int64)
    for lo in range(0, n, QUERY_BLOCK):
        hi = min(lo + QUERY_BLOCK, n)
        dists[:, lo:hi], offsets[:, lo:hi] = prepared_min_cid(prep, queries[lo:hi])
    return dists, offsets


def _sliding_sum(a: np.ndarray, width: int) -> np.ndarray:
    """Sum of every length-``width`` window along the last axis."""
    if width <= 0:
        return np.zeros((a.shape[0], a.shape[1] + 1))
    c = np.concatenate([np.zeros((a.shape[0], 1)), np.cumsum(a, axis=1)], axis=1)
    return c[:, width:] - c[:, :-width]
