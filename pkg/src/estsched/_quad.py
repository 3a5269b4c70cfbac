"""Composite Gauss-Legendre rules on breakpoint-seeded panels.

The analytic evaluator integrates piecewise-smooth functions whose kinks are
known in advance.  Placing panel edges on the kinks keeps every panel smooth,
so a modest fixed-order rule per panel is accurate to near machine precision.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gl_rule(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def merge_edges(lo, hi, breaks=()):
    """Sorted unique panel edges on [lo, hi], including interior breakpoints."""
    pts = [lo, hi]
    pts.extend(b for b in breaks if lo < b < hi and np.isfinite(b))
    edges = np.unique(np.asarray(pts, dtype=float))
    # drop slivers that only add rounding noise
    keep = np.concatenate(([True], np.diff(edges) > 1e-14 * max(abs(hi), 1.0)))
    edges = edges[keep]
    if edges[-1] != hi:
        edges[-1] = hi
    return edges


def refine_edges(edges, pieces=1, geometric=False):
    """Split each panel into `pieces` sub-panels (log-spaced if geometric and lo > 0)."""
    if pieces <= 1:
        return np.asarray(edges, dtype=float)
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        if geometric and a > 0:
            seg = np.geomspace(a, b, pieces + 1)
        else:
            seg = np.linspace(a, b, pieces + 1)
        out.append(seg[:-1])
    out.append([edges[-1]])
    return np.concatenate(out)


def panel_rule(edges, n=10):
    """Nodes and weights of the composite n-point rule over consecutive edges."""
    edges = np.asarray(edges, dtype=float)
    x, w = gl_rule(n)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) * 0.5 + half * x[None, :]
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def log_edges(lo, hi, breaks=(), per_decade=24, depth=9):
    """Panel edges for integrals over [lo, hi] where the integrand spans scales.

    With lo == 0 everything below min(10**-depth * hi, 1e-3 * first
    breakpoint) is one panel; the rest is geometric.
    """
    if hi <= lo:
        return np.array([lo, hi], dtype=float)
    if lo > 0:
        start = lo
        head = []
    else:
        start = hi * 10.0**-depth
        interior = [b for b in breaks if 0 < b < hi]
        if interior:
            start = min(start, min(interior) * 1e-3)
        head = [0.0]
    ndec = max(1, int(np.ceil(np.log10(hi / start) * per_decade)))
    geo = np.geomspace(start, hi, ndec + 1)
    edges = merge_edges(lo, hi, list(geo) + list(breaks) + head)
    return edges
