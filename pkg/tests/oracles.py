"""Independent reference implementations used to check the package.

Everything here is written as plain scalar loops from the definitions,
sharing no code with pvashape, so agreement means something.
"""
import math

import numpy as np


def complexity(q):
    return math.sqrt(sum((b - a) ** 2 for a, b in zip(q, q[1:])))


def cid(q, s):
    if len(q) != len(s):
        raise ValueError("length mismatch")
    ed = math.sqrt(sum((a - b) ** 2 for a, b in zip(q, s)))
    ca, cb = complexity(q), complexity(s)
    return ed * (max(ca, cb) / max(min(ca, cb), 1e-8))


def znorm(w):
    w = [float(v) for v in w]
    mu = sum(w) / len(w)
    sd = math.sqrt(sum((v - mu) ** 2 for v in w) / len(w))
    sd = max(sd, 1e-8)
    return [(v - mu) / sd for v in w]


def psd(series, original_length, query, use_znorm=False):
    """Full-window enumeration; returns (distance, offset), first minimum."""
    series = [float(v) for v in series]
    q = znorm(query) if use_znorm else [float(v) for v in query]
    l = len(q)
    best_d, best_j = math.inf, -1
    for j in range(original_length - l + 1):
        w = series[j : j + l]
        if use_znorm:
            w = znorm(w)
        d = cid(q, w)
        if d < best_d:
            best_d, best_j = d, j
    return best_d, best_j


def chord_distance(series, a, b, t):
    dx = b - a
    dy = float(series[b]) - float(series[a])
    num = abs(dy * (t - a) - dx * (float(series[t]) - float(series[a])))
    return num / math.hypot(dx, dy)


def pip_steps(series, k):
    """Recompute every bracketed distance per insertion; strict > scan keeps
    the smallest index on ties. Returns [(added_index, pips_after), ...]."""
    n = len(series)
    pips = [0, n - 1]
    steps = []
    for _ in range(k - 2):
        best_t, best_d = None, -1.0
        for t in range(n):
            if t in pips:
                continue
            a = max(p for p in pips if p < t)
            b = min(p for p in pips if p > t)
            d = chord_distance(series, a, b, t)
            if d > best_d:
                best_d, best_t = d, t
        pips.append(best_t)
        pips.sort()
        steps.append((best_t, tuple(pips)))
    return steps


def entropy_bits(counts):
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def info_gain(pairs):
    """Exhaustive search over every midpoint between distinct sorted
    distances; ties keep the smallest threshold. Degenerate -> (0, min)."""
    pairs = sorted(pairs, key=lambda p: p[0])
    dists = [d for d, _ in pairs]
    n = len(pairs)
    k_total = sum(1 for _, t in pairs if t)
    parent = entropy_bits([k_total, n - k_total])
    best_gain, best_thr = 0.0, None
    for i in range(n - 1):
        if dists[i + 1] <= dists[i]:
            continue
        thr = (dists[i] + dists[i + 1]) / 2.0
        n_l = i + 1
        k_l = sum(1 for d, t in pairs[:n_l] if t)
        h_l = entropy_bits([k_l, n_l - k_l])
        h_r = entropy_bits([k_total - k_l, (n - n_l) - (k_total - k_l)])
        gain = parent - (n_l / n) * h_l - ((n - n_l) / n) * h_r
        if best_thr is None or gain > best_gain:
            best_gain, best_thr = gain, thr
    if best_thr is None or best_gain <= 1e-12:
        return 0.0, min(dists)
    return best_gain, best_thr


def phi(d):
    return math.copysign(math.log1p(abs(d)), d)


def logsig_terms(series, depth):
    """Order-1 sum of signed logs of increments; higher orders weight each
    pairwise signed-log difference by comb(first index, order - 2)."""
    xs = [float(v) for v in series]
    out = [sum(phi(b - a) for a, b in zip(xs, xs[1:]))]
    for order in range(2, depth + 1):
        total = 0.0
        for i in range(len(xs)):
            for j in range(i + 1, len(xs)):
                total += math.comb(i, order - 2) * phi(xs[j] - xs[i])
        out.append(total)
    return out


def rolling_median(x, window):
    if window % 2 == 0:
        window += 1
    half = window // 2
    n = len(x)
    out = []
    for i in range(n):
        lo, hi = i - half, i + half + 1
        vals = [x[min(max(j, 0), n - 1)] for j in range(lo, hi)]
        out.append(float(np.median(vals)))
    return np.array(out)
