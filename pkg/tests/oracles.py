"""Independent reference implementations used as test oracles.

These deliberately use plain Python loops and library-free arithmetic so they
share no code path with the implementations they check.
"""

from __future__ import annotations

import numpy as np


def brute_force_neighbor_index(s_en, features, input_ranges, n_select):
    """Pair-loop neighbor selection with the (deviation, index) tie-break."""
    x = np.asarray(features, dtype=float)
    s = np.asarray(s_en, dtype=float)
    r = np.asarray(input_ranges, dtype=float)
    n = x.shape[0]
    ids = []
    devs = []
    thresholds = []
    for i in range(n):
        pairs = []
        for j in range(n):
            if j == i:
                continue
            dev = max(
                s[i, k] * abs(x[i, k] - x[j, k]) / r[k] for k in range(x.shape[1])
            )
            pairs.append((dev, j))
        pairs.sort(key=lambda p: (p[0], p[1]))
        chosen = pairs[:n_select]
        ids.append([j for _, j in chosen])
        devs.append([d for d, _ in chosen])
        thresholds.append(chosen[-1][0])
    return (
        np.array(ids, dtype=np.int64),
        np.array(thresholds, dtype=float),
        np.array(devs, dtype=float),
    )


def central_difference_gradient(f, x, h=1e-5):
    """Componentwise central finite differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[k] += h
        lo[k] -= h
        grad[k] = (f(hi) - f(lo)) / (2.0 * h)
    return grad


def narrowest_constant_interval(targets, coverage):
    """Width of the narrowest constant interval covering the given fraction.

    Slides a window over the sorted targets; the usual oracle for "how well
    would a flat interval do at the same empirical coverage".
    """
    t = np.sort(np.asarray(targets, dtype=float))
    n = t.size
    m = int(np.ceil(coverage * n))
    m = min(max(m, 1), n)
    return float(min(t[i + m - 1] - t[i] for i in range(n - m + 1)))
