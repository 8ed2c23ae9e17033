"""Discretizations of the noisy transition operator on [0, 1].

Two representations of the density-evolution operator rho_{t+1} = P rho_t:

  * Ulam grid: column-stochastic matrix over a uniform bin partition.
    Entry (j, i) is the probability of landing in bin j starting from a
    point uniform on bin i.
  * Piecewise polynomial: the action of the operator on per-piece Legendre
    coefficients of the density (bounded degree K per piece of width ~eps).
    Requires a smooth map and gaussian noise.

Densities are column vectors throughout; the total-mass functional is a
left fixed vector of every built matrix.
"""

import io
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import DimensionMismatchError, SmoothnessWarning
from .maps import eval_map, nonsmooth_points
from .noise import kernel_cdf, kernel_density
from .quadrature import gauss_legendre_01, panel_rule, split_interval

__all__ = [
    "GridDensity",
    "PiecewisePolyDensity",
    "TransferMatrix",
    "build_ulam",
    "build_piecewise",
    "apply",
    "uniform_grid_density",
    "uniform_piecewise_density",
    "total_variation",
    "export_csv",
    "thread_count",
]

log = logging.getLogger(__name__)


def thread_count(n_jobs=None):
    """Resolve the assembly thread count; ERGOKIT_THREADS caps it (0 = auto)."""
    if n_jobs is None:
        raw = os.environ.get("ERGOKIT_THREADS", "")
        n_jobs = int(raw) if raw.strip() else 1
    if n_jobs == 0:
        n_jobs = os.cpu_count() or 1
    return max(1, int(n_jobs))


# ---------------------------------------------------------------------------
# Densities


@dataclass
class GridDensity:
    """Probability density as bin masses on a uniform partition of [0, 1].

    ``error_bound`` is the documented resolution heuristic used by measure
    queries: 0 for densities exact by construction, residual + bin width
    for solver output.
    """

    masses: np.ndarray
    error_bound: float = 0.0

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)

    @property
    def n_bins(self):
        return self.masses.size

    @property
    def edges(self):
        return np.linspace(0.0, 1.0, self.n_bins + 1)

    def validate(self, mass_tol=1e-12):
        if abs(self.masses.sum() - 1.0) > mass_tol:
            raise ValueError(f"masses sum to {self.masses.sum()!r}, not 1")
        if np.any(self.masses < 0):
            raise ValueError("negative bin mass")

    def evaluate(self, x):
        """Step-function density value(s) at x."""
        idx = np.clip((np.asarray(x, dtype=float) * self.n_bins).astype(int),
                      0, self.n_bins - 1)
        return self.masses[idx] * self.n_bins

    def cdf(self, x):
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        return np.interp(np.asarray(x, dtype=float), self.edges, cum)


@dataclass
class PiecewisePolyDensity:
    """Density as per-piece Legendre coefficients of bounded degree.

    ``coeffs[r, l]`` multiplies the degree-l Legendre polynomial rescaled to
    piece r. Total coefficient dimension is m * (K + 1).
    """

    breakpoints: np.ndarray
    coeffs: np.ndarray
    error_bound: float = 0.0

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim != 2:
            raise ValueError("coeffs must be (pieces, K+1)")
        if self.breakpoints.size != self.coeffs.shape[0] + 1:
            raise ValueError("breakpoints/coeffs size mismatch")

    @property
    def n_pieces(self):
        return self.coeffs.shape[0]

    @property
    def degree(self):
        return self.coeffs.shape[1] - 1

    @property
    def dimension(self):
        return self.coeffs.size

    def piece_widths(self):
        return np.diff(self.breakpoints)

    def integral(self):
        return float(self.piece_widths() @ self.coeffs[:, 0])

    def evaluate(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                      0, self.n_pieces - 1)
        left = self.breakpoints[idx]
        width = self.piece_widths()[idx]
        u = 2.0 * (x - left) / width - 1.0
        vander = npleg.legvander(u, self.degree)
        out = np.einsum("nk,nk->n", vander, self.coeffs[idx])
        return out if out.size > 1 else float(out[0])

    def cdf(self, x):
        """Exact integral of the stored polynomial density over [0, x]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        widths = self.piece_widths()
        piece_mass = widths * self.coeffs[:, 0]
        cum = np.concatenate(([0.0], np.cumsum(piece_mass)))
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                      0, self.n_pieces - 1)
        u = 2.0 * (x - self.breakpoints[idx]) / widths[idx] - 1.0
        out = np.empty_like(x)
        for n, (r, un) in enumerate(zip(idx, u)):
            anti = npleg.legint(self.coeffs[r])
            partial = npleg.legval(un, anti) - npleg.legval(-1.0, anti)
            out[n] = cum[r] + 0.5 * widths[r] * partial
        out = np.clip(out, 0.0, None)
        return out if out.size > 1 else float(out[0])

    def validate(self, mass_tol=1e-10, neg_tol=1e-8, samples=2000):
        if abs(self.integral() - 1.0) > mass_tol:
            raise ValueError(f"integral is {self.integral()!r}, not 1")
        grid = np.linspace(0.0, 1.0, samples)
        if float(np.min(self.evaluate(grid))) < -neg_tol:
            raise ValueError("density undershoots below tolerance")

    def clipped(self, x):
        """Density values with the tolerated negative undershoot clipped."""
        return np.clip(self.evaluate(x), 0.0, None)


def uniform_grid_density(n_bins):
    return GridDensity(np.full(n_bins, 1.0 / n_bins))


def uniform_piecewise_density(n_pieces, degree):
    coeffs = np.zeros((n_pieces, degree + 1))
    coeffs[:, 0] = 1.0
    return PiecewisePolyDensity(np.linspace(0.0, 1.0, n_pieces + 1), coeffs)


# ---------------------------------------------------------------------------
# Transfer matrices


@dataclass
class TransferMatrix:
    """Matrix of the discretized transition operator, with provenance.

    ``matrix`` acts on density vectors from the left (columns evolve mass).
    For the Ulam representation the vector is bin masses; for the piecewise
    representation it is the flattened (pieces, K+1) coefficient array.
    """

    matrix: np.ndarray
    representation: str
    metadata: dict = field(default_factory=dict)
    stochastic: bool = False
    breakpoints: np.ndarray | None = None
    degree: int | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("transfer matrix must be square")
        self.matrix.setflags(write=False)
        if self.representation not in ("ulam", "piecewise-poly"):
            raise ValueError(f"unknown representation '{self.representation}'")
        if self.representation == "piecewise-poly":
            if self.breakpoints is None or self.degree is None:
                raise ValueError("piecewise matrices need breakpoints and degree")
            self.breakpoints = np.asarray(self.breakpoints, dtype=float)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def mass_vector(self):
        """Left functional m with m @ v = total mass of the density v."""
        if self.representation == "ulam":
            return np.ones(self.dim)
        out = np.zeros((self.n_pieces, self.degree + 1))
        out[:, 0] = np.diff(self.breakpoints)
        return out.ravel()

    @property
    def n_pieces(self):
        if self.representation == "ulam":
            return self.dim
        return self.breakpoints.size - 1

    def mass(self, vec):
        if self.representation == "ulam":
            return float(np.sum(vec))
        return float(self.mass_vector() @ vec)

    def _l1_operator(self):
        """Quadrature evaluation matrix for function-space L1 norms."""
        if getattr(self, "_l1_cache", None) is None:
            order = max(2 * (self.degree + 1), 8)
            base_x, base_w = gauss_legendre_01(order)
            m = self.n_pieces
            widths = np.diff(self.breakpoints)
            vander = npleg.legvander(2.0 * base_x - 1.0, self.degree)
            op = np.zeros((m * order, self.dim))
            for r in range(m):
                op[r * order:(r + 1) * order,
                   r * (self.degree + 1):(r + 1) * (self.degree + 1)] = vander
            weights = np.repeat(widths, order) * np.tile(base_w, m)
            self._l1_cache = (op, weights)
        return self._l1_cache

    def norm_l1(self, vec):
        """L1 size of a (signed) density vector in its representation."""
        if self.representation == "ulam":
            return float(np.abs(vec).sum())
        op, weights = self._l1_operator()
        return float(weights @ np.abs(op @ vec))

    def vector_of(self, density):
        if self.representation == "ulam":
            if not isinstance(density, GridDensity) or density.n_bins != self.dim:
                raise DimensionMismatchError(
                    "expected a GridDensity matching the Ulam matrix")
            return density.masses.copy()
        if (not isinstance(density, PiecewisePolyDensity)
                or density.coeffs.shape != (self.n_pieces, self.degree + 1)):
            raise DimensionMismatchError(
                "expected a PiecewisePolyDensity matching the matrix layout")
        return density.coeffs.ravel().copy()

    def to_density(self, vec, error_bound=0.0):
        if self.representation == "ulam":
            return GridDensity(np.asarray(vec, dtype=float).copy(),
                               error_bound=error_bound)
        coeffs = np.asarray(vec, dtype=float).reshape(
            self.n_pieces, self.degree + 1).copy()
        return PiecewisePolyDensity(self.breakpoints.copy(), coeffs,
                                    error_bound=error_bound)

    def uniform_density(self):
        if self.representation == "ulam":
            return uniform_grid_density(self.dim)
        return uniform_piecewise_density(self.n_pieces, self.degree)


def as_transfer(P):
    """Wrap a plain square stochastic ndarray as an Ulam-style TransferMatrix."""
    if isinstance(P, TransferMatrix):
        return P
    return TransferMatrix(np.array(P, dtype=float), "ulam",
                          metadata={"source": "ndarray"}, stochastic=True)


# ---------------------------------------------------------------------------
# Ulam construction


def _ulam_block(spec, kernel, edges, cols, quad_order):
    """Columns of the Ulam matrix for the given bin indices."""
    n = edges.size - 1
    width = 1.0 / n
    base_x, base_w = gauss_legendre_01(quad_order)
    nodes = edges[cols][:, None] + width * base_x[None, :]
    centers = eval_map(spec, nodes.ravel()).reshape(nodes.shape)
    cdf = kernel_cdf(kernel, centers[:, :, None], edges[None, None, :])
    masses = np.diff(cdf, axis=2)
    block = np.einsum("q,bqj->jb", base_w, masses)
    return block


def build_ulam(spec, kernel, n_bins, quad_order=8, n_jobs=None):
    """Column-stochastic Ulam discretization of the noisy transfer operator.

    Entry (j, i) = (1/|bin_i|) * int_{bin_i} P(T(x) + noise in bin_j) dx,
    with the inner probability from the kernel CDF and the outer integral
    by Gauss-Legendre of ``quad_order`` per bin.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    P = np.empty((n_bins, n_bins))
    # keep each block's cdf tensor around ~32 MB
    chunk = max(1, int(4_000_000 // (quad_order * (n_bins + 1))))
    chunks = [np.arange(i, min(i + chunk, n_bins))
              for i in range(0, n_bins, chunk)]
    jobs = thread_count(n_jobs)

    def fill(cols):
        P[:, cols] = _ulam_block(spec, kernel, edges, cols, quad_order)

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fill, chunks))
    else:
        for cols in chunks:
            fill(cols)

    negatives = P < 0.0
    if np.any(negatives):
        worst = float(P[negatives].min())
        if worst < -1e-14:
            log.warning("Ulam quadrature produced entry %.3e < -1e-14", worst)
        else:
            log.debug("clipped %d tiny negative Ulam entries (min %.3e)",
                      int(negatives.sum()), worst)
        P[negatives] = 0.0
    meta = {
        "map": spec.describe(),
        "kernel": kernel.describe(),
        "epsilon": kernel.epsilon,
        "n_bins": n_bins,
        "quad_order": quad_order,
    }
    return TransferMatrix(P, "ulam", metadata=meta, stochastic=True)


# ---------------------------------------------------------------------------
# Piecewise-polynomial construction


def _detect_jumps(spec, scan=4096, wrap_kernel=False):
    """Locations where the map jumps; wrap-equivalent jumps are not flagged.

    Returns (split_points, flagged) where flagged are genuine
    discontinuities for the smooth pipeline.
    """
    grid = np.linspace(0.0, 1.0, scan + 1)
    vals = eval_map(spec, grid)
    d = np.abs(np.diff(vals))
    typical = float(np.median(d))
    jump_idx = np.flatnonzero(d > max(0.05, 20.0 * typical + 1e-3))
    splits, flagged = [], []
    for i in jump_idx:
        loc = 0.5 * (grid[i] + grid[i + 1])
        splits.append(loc)
        circle_ok = wrap_kernel and abs(d[i] - 1.0) < 0.1
        if not circle_ok:
            flagged.append(loc)
    declared = [p for p in nonsmooth_points(spec) if 0.0 < p < 1.0]
    splits = sorted(set(np.round(splits + declared, 12)))
    return splits, flagged


def build_piecewise(spec, kernel, piece_width, terms, quad_order=24,
                    n_jobs=None):
    """Action of the transfer operator on per-piece Legendre coefficients.

    ``terms`` is the polynomial degree K per piece (K+1 coefficients); the
    total dimension is D = (1/piece_width) * (K+1). Only gaussian kernels
    are supported on this path; the uniform-ball density is discontinuous
    and breaks the per-piece smoothness the representation relies on.
    """
    if kernel.family != "gaussian":
        raise NotImplementedError(
            "piecewise-poly representation requires a gaussian kernel")
    K = int(terms)
    if K < 1:
        raise ValueError("need at least degree 1 per piece")
    m = int(round(1.0 / piece_width))
    if m < 1 or abs(m * piece_width - 1.0) > 1e-9:
        raise ValueError("piece_width must evenly divide [0, 1]")

    splits, flagged = _detect_jumps(
        spec, wrap_kernel=(kernel.boundary == "wrap"))
    if flagged:
        warnings.warn(
            f"map looks discontinuous at {flagged}; the piecewise-poly "
            "pipeline assumes a smooth map", SmoothnessWarning, stacklevel=2)

    width = 1.0 / m
    edges = np.linspace(0.0, 1.0, m + 1)
    base_x, base_w = gauss_legendre_01(quad_order)
    u = 2.0 * base_x - 1.0
    vander = npleg.legvander(u, K)                       # (Q, K+1)
    # projection onto target coefficients: (2l+1) * w_s * P_l(u_s)
    proj = (2.0 * np.arange(K + 1) + 1.0)[:, None] * (base_w[None, :] * vander.T)
    y_nodes = (edges[:-1][:, None] + width * base_x[None, :]).ravel()

    D = m * (K + 1)
    M = np.empty((D, D))
    jobs = thread_count(n_jobs)

    def fill(p):
        panels = split_interval(edges[p], edges[p + 1], splits)
        x_nodes, x_weights = panel_rule(panels, quad_order)
        ux = 2.0 * (x_nodes - edges[p]) / width - 1.0
        pk = npleg.legvander(ux, K)                      # (Qx, K+1)
        A = x_weights[:, None] * pk
        centers = eval_map(spec, x_nodes)
        dens = kernel_density(kernel, centers[:, None], y_nodes[None, :])
        B = dens.T @ A                                   # (m*Q, K+1)
        B = B.reshape(m, quad_order, K + 1)
        block = np.einsum("ls,rsk->rlk", proj, B).reshape(D, K + 1)
        M[:, p * (K + 1):(p + 1) * (K + 1)] = block

    if jobs > 1 and m > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(fill, range(m)))
    else:
        for p in range(m):
            fill(p)

    meta = {
        "map": spec.describe(),
        "kernel": kernel.describe(),
        "epsilon": kernel.epsilon,
        "pieces": m,
        "terms": K,
        "quad_order": quad_order,
    }
    return TransferMatrix(M, "piecewise-poly", metadata=meta,
                          stochastic=False, breakpoints=edges, degree=K)


# ---------------------------------------------------------------------------
# Application and export


def apply(P, rho, drift_tol=1e-12):
    """One step of density evolution: the matrix-vector product P rho.

    Total mass is renormalized (and the drift logged) only when it moves by
    more than ``drift_tol``.
    """
    P = as_transfer(P)
    vec = P.vector_of(rho)
    out = P.matrix @ vec
    before = P.mass(vec)
    after = P.mass(out)
    if abs(after - before) > drift_tol:
        log.info("mass drift %.3e after operator application; renormalizing",
                 after - before)
        out *= before / after
    return P.to_density(out, error_bound=getattr(rho, "error_bound", 0.0))


def total_variation(d1, d2, order=16):
    """Total-variation distance (half the L1 distance of the densities)."""
    edge_sets = []
    for d in (d1, d2):
        if isinstance(d, GridDensity):
            edge_sets.append(d.edges)
        else:
            edge_sets.append(np.asarray(d.breakpoints))
    edges = np.unique(np.concatenate(edge_sets))
    panels = np.column_stack((edges[:-1], edges[1:]))
    nodes, weights = panel_rule(panels, order)
    v1 = np.asarray(d1.evaluate(nodes))
    v2 = np.asarray(d2.evaluate(nodes))
    return 0.5 * float(weights @ np.abs(v1 - v2))


def export_csv(P, path_or_file):
    """Write the matrix row-major as CSV with '#' metadata header lines."""
    P = as_transfer(P)
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        fh.write(f"# representation: {P.representation}\n")
        fh.write(f"# dim: {P.dim}\n")
        for key in sorted(P.metadata):
            fh.write(f"# {key}: {P.metadata[key]}\n")
        for row in P.matrix:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")
    finally:
        if own:
            fh.close()


def matrix_csv_string(P):
    buf = io.StringIO()
    export_csv(P, buf)
    return buf.getvalue()
