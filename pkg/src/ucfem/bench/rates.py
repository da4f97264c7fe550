"""Log-log rate fitting."""
from __future__ import annotations

import numpy as np


def fit_rate(records):
    """Least-squares slope of ``log(error)`` against ``log(N)``.

    ``records`` is a sequence of ``(N, error)`` pairs; repeated ``N`` values
    (replicates) are averaged in log space first.  Returns
    ``(slope, stderr)``; the standard error vanishes for exactly
    collinear points.

    Raises
    ------
    ValueError
        On non-positive errors or fewer than three distinct ``N``.
    """
    arr = np.asarray(list(records), dtype=float).reshape(-1, 2)
    if np.any(~np.isfinite(arr)) or np.any(arr[:, 1] <= 0) or np.any(arr[:, 0] <= 0):
        raise ValueError("rate fit needs positive, finite N and error values")
    Ns = np.unique(arr[:, 0])
    if Ns.size < 3:
        raise ValueError(f"rate fit needs at least 3 distinct N, got {Ns.size}")
    x = np.log(Ns)
    y = np.array([np.mean(np.log(arr[arr[:, 0] == n, 1])) for n in Ns])
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(np.sqrt(max(cov[1, 1], 0.0)))


def loglog_slope(xs, ys):
    """Plain least-squares slope of ``log y`` on ``log x`` (two or more points)."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two points")
    return float(np.polyfit(x, y, 1)[0])
