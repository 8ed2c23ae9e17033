"""Gauss-Legendre quadrature helpers shared by the operator builders."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_legendre_01(order):
    """Nodes and weights of Gauss-Legendre quadrature on [0, 1]."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def panel_rule(panels, order):
    """Composite Gauss-Legendre rule over the given panels.

    panels: array of shape (n, 2) with panel endpoints.
    Returns flat (nodes, weights) arrays of length n * order.
    """
    panels = np.asarray(panels, dtype=float)
    base_x, base_w = gauss_legendre_01(order)
    left = panels[:, 0][:, None]
    width = (panels[:, 1] - panels[:, 0])[:, None]
    nodes = left + width * base_x[None, :]
    weights = width * base_w[None, :]
    return nodes.ravel(), weights.ravel()


def graded_panels(a, b, min_width=1e-13, max_width=None):
    """Panels on [a, b] refined geometrically toward both endpoints.

    Dyadic grading keeps fixed-order Gauss-Legendre accurate next to
    integrable endpoint singularities (1/sqrt or log type).
    """
    if not b > a:
        raise ValueError("empty panel interval")
    length = b - a
    if max_width is None:
        max_width = length
    half = 0.5 * length
    cuts = [half]
    w = half
    while w > min_width:
        w *= 0.5
        cuts.append(w)
    offsets = np.array(cuts[::-1])
    left_edges = a + np.concatenate(([0.0], offsets))
    right_edges = b - np.concatenate(([0.0], offsets))[::-1]
    edges = np.concatenate((left_edges, right_edges[1:]))
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= max_width:
            panels.append((lo, hi))
        else:
            k = int(np.ceil((hi - lo) / max_width))
            sub = np.linspace(lo, hi, k + 1)
            panels.extend(zip(sub[:-1], sub[1:]))
    return np.array(panels)


def split_interval(a, b, interior_points):
    """Subintervals of [a, b] cut at the given interior points."""
    pts = [p for p in np.atleast_1d(np.asarray(interior_points, dtype=float))
           if a < p < b]
    edges = np.concatenate(([a], np.sort(pts), [b]))
    return np.column_stack((edges[:-1], edges[1:]))
