"""Noise kernels on [0, 1]: density, CDF, sampling, and entropy.

A kernel is the conditional law of the next state around a center c
(the deterministic image T(x)). Two families:

    uniform   -- uniform on a ball of radius epsilon around c
    gaussian  -- normal with mean c and standard deviation epsilon

Boundary handling keeps the state in [0, 1]:

    wrap        -- periodic images (circle topology)
    reflect     -- mirror images at 0 and 1
    renormalize -- restrict to [0, 1] and rescale by the retained mass

Gaussian image sums are truncated at distance 8*epsilon; the neglected
mass is below 1e-14.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "NoiseKernel",
    "kernel_density",
    "kernel_cdf",
    "kernel_sample",
    "kernel_entropy",
]

_FAMILIES = ("uniform", "gaussian")
_BOUNDARIES = ("wrap", "reflect", "renormalize")


@dataclass(frozen=True)
class NoiseKernel:
    """Immutable kernel description: family, width epsilon, boundary mode."""

    family: str
    epsilon: float
    boundary: str = "wrap"

    def __post_init__(self):
        family = {"uniform-ball": "uniform"}.get(self.family, self.family)
        object.__setattr__(self, "family", family)
        if family not in _FAMILIES:
            raise ValueError(f"unknown kernel family '{self.family}'")
        if self.boundary not in _BOUNDARIES:
            raise ValueError(f"unknown boundary mode '{self.boundary}'")
        eps = float(self.epsilon)
        if not (np.isfinite(eps) and eps > 0):
            raise ValueError("epsilon must be positive and finite")
        object.__setattr__(self, "epsilon", eps)

    @property
    def radius(self):
        """Distance beyond which the base density is (numerically) zero."""
        if self.family == "uniform":
            return self.epsilon
        return 8.0 * self.epsilon

    def describe(self):
        return f"{self.family}:{self.epsilon:g}:{self.boundary}"


def _base_cdf(kernel, center, t):
    """CDF of the unrestricted kernel centered at ``center``, at points t."""
    if kernel.family == "uniform":
        eps = kernel.epsilon
        return np.clip((t - center + eps) / (2.0 * eps), 0.0, 1.0)
    return ndtr((t - center) / kernel.epsilon)


def _base_pdf(kernel, center, t):
    if kernel.family == "uniform":
        eps = kernel.epsilon
        return np.where(np.abs(t - center) <= eps, 1.0 / (2.0 * eps), 0.0)
    eps = kernel.epsilon
    z = (t - center) / eps
    return np.exp(-0.5 * z * z) / (eps * math.sqrt(2.0 * math.pi))


def _wrap_range(kernel):
    k = int(math.ceil(kernel.radius)) + 1
    return range(-k, k + 1)


def _reflect_range(kernel):
    k = int(math.ceil((kernel.radius + 2.0) / 2.0)) + 1
    return range(-k, k + 1)


def kernel_density(kernel, center, x):
    """Boundary-adjusted density of the kernel at x, for center in [0, 1].

    Broadcasts over ``center`` and ``x``.
    """
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast_shapes(center.shape, x.shape))
    if kernel.boundary == "wrap":
        for k in _wrap_range(kernel):
            out += _base_pdf(kernel, center, x + k)
    elif kernel.boundary == "reflect":
        for k in _reflect_range(kernel):
            out += _base_pdf(kernel, center, x + 2.0 * k)
            out += _base_pdf(kernel, center, -x + 2.0 * k)
    else:
        mass = _base_cdf(kernel, center, 1.0) - _base_cdf(kernel, center, 0.0)
        out = _base_pdf(kernel, center, x) / mass
    if out.ndim == 0:
        return float(out)
    return out


def kernel_cdf(kernel, center, x):
    """Mass of the boundary-adjusted kernel on [0, x]. Broadcasts."""
    center = np.asarray(center, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(np.broadcast_shapes(center.shape, x.shape))
    if kernel.boundary == "wrap":
        for k in _wrap_range(kernel):
            out += _base_cdf(kernel, center, x + k)
            out -= _base_cdf(kernel, center, float(k))
    elif kernel.boundary == "reflect":
        for k in _reflect_range(kernel):
            out += _base_cdf(kernel, center, x + 2.0 * k)
            out -= _base_cdf(kernel, center, 2.0 * k - x)
    else:
        lo = _base_cdf(kernel, center, 0.0)
        mass = _base_cdf(kernel, center, 1.0) - lo
        out = (_base_cdf(kernel, center, x) - lo) / mass
    out = np.clip(out, 0.0, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_sample(kernel, center, rng, size=None):
    """Draw from the boundary-adjusted kernel; rng is a numpy Generator.

    Returns a float when ``size`` is None, else an ndarray.
    """
    n = 1 if size is None else int(np.prod(size))
    center = np.broadcast_to(np.asarray(center, dtype=float), (n,))
    if kernel.family == "uniform":
        raw = center + kernel.epsilon * (2.0 * rng.random(n) - 1.0)
    else:
        raw = center + kernel.epsilon * rng.standard_normal(n)
    if kernel.boundary == "wrap":
        out = np.mod(raw, 1.0)
    elif kernel.boundary == "reflect":
        z = np.mod(raw, 2.0)
        out = np.where(z > 1.0, 2.0 - z, z)
    else:
        out = raw
        bad = (out < 0.0) | (out > 1.0)
        tries = 0
        while np.any(bad):
            tries += 1
            if tries > 10_000:
                raise RuntimeError("rejection sampling failed to terminate")
            m = int(bad.sum())
            if kernel.family == "uniform":
                redraw = center[bad] + kernel.epsilon * (2.0 * rng.random(m) - 1.0)
            else:
                redraw = center[bad] + kernel.epsilon * rng.standard_normal(m)
            out[bad] = redraw
            bad = (out < 0.0) | (out > 1.0)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def kernel_entropy(kernel):
    """Differential entropy in bits of the unrestricted kernel.

    Boundary-free idealization: uniform -> log2(2 eps),
    gaussian -> 0.5 * log2(2 pi e eps^2).
    """
    eps = kernel.epsilon
    if kernel.family == "uniform":
        return math.log2(2.0 * eps)
    return 0.5 * math.log2(2.0 * math.pi * math.e * eps * eps)
