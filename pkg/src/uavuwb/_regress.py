import numpy as np


def within_group_slope(x, y, groups) -> tuple[float, float]:
    """Pooled least-squares slope after removing a per-group mean (fixed effects).

    Returns ``(slope, sxx)``; ``sxx`` is the within-group sum of squares of x
    and is 0 when no group has x-variation (slope is then nan).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    if x.size == 0:
        return float("nan"), 0.0
    _, inv = np.unique(groups, return_inverse=True)
    counts = np.bincount(inv)
    xd = x - (np.bincount(inv, weights=x) / counts)[inv]
    yd = y - (np.bincount(inv, weights=y) / counts)[inv]
    sxx = float(np.dot(xd, xd))
    if sxx <= 0:
        return float("nan"), 0.0
    return float(np.dot(xd, yd) / sxx), sxx
