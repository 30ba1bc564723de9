"""Windowed global minimization for smooth one-dimensional objectives.

The step problems all reduce to minimizing a coercive objective whose
derivative is negative at the left window edge and positive at the right one.
Local minimizers are bracketed by derivative sign changes on a grid whose
spacing is tied to the derivative's Lipschitz constant, then refined by
bisection; the caller compares the returned values and applies its own tie
policy.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DivergedError


def windowed_argmin(f, fp, lo: float, hi: float, spacing: float, refine_tol: float = 1e-12):
    """All local minimizers of f in [lo, hi], refined to refine_tol in position.

    f and fp must accept numpy arrays.  Requires fp(lo) < 0 < fp(hi), which
    certifies that every global minimizer is interior; a violation means the
    declared slope bound was wrong, so no finite window can be trusted.

    Returns (points, values) sorted by increasing value.
    """
    if not hi > lo:
        raise ValueError("empty search window")
    if not spacing > 0:
        raise ValueError("grid spacing must be positive")
    n = max(int(math.ceil((hi - lo) / spacing)) + 1, 9)
    ys = np.linspace(lo, hi, n)
    d = np.asarray(fp(ys), dtype=float)
    if not (d[0] < 0.0 < d[-1]):
        raise DivergedError(
            "window edges do not certify an interior minimizer; "
            "slope bound too small or objective unbounded below",
            lo=lo,
            hi=hi,
            dlo=float(d[0]),
            dhi=float(d[-1]),
        )
    idx = np.flatnonzero((d[:-1] < 0.0) & (d[1:] >= 0.0))
    a = ys[idx].astype(float)
    b = ys[idx + 1].astype(float)
    width = (hi - lo) / (n - 1)
    while width > refine_tol:
        m = 0.5 * (a + b)
        neg = np.asarray(fp(m), dtype=float) < 0.0
        a = np.where(neg, m, a)
        b = np.where(neg, b, m)
        width *= 0.5
    xs = 0.5 * (a + b)
    if xs.size > 1:
        # adjacent brackets can converge onto the same stationary point when
        # the derivative grazes zero; collapse them before comparing values
        xs = np.sort(xs)
        keep = np.empty(xs.size, dtype=bool)
        keep[0] = True
        keep[1:] = np.diff(xs) > 100 * refine_tol
        xs = xs[keep]
    vals = np.asarray(f(xs), dtype=float)
    order = np.argsort(vals, kind="stable")
    return xs[order], vals[order]
