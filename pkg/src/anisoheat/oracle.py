"""Independent references for the spectral propagator.

Nothing here touches an FFT: Gaussian data are evolved by adding covariance
matrices, and :func:`direct_convolution` is a naive periodic double sum.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .diffusivity import SpdMatrix, accumulate_array
from .errors import GridTooLarge
from .kernel import KernelParams, kernel_eval
from .propagator import Field

MAX_DIRECT_POINTS = 2 ** 16


@dataclass(frozen=True)
class GaussianState:
    """``amplitude * W(x; sigma0)``, a kernel-shaped Gaussian."""

    sigma0: SpdMatrix
    amplitude: float = 1.0

    def __post_init__(self):
        if not isinstance(self.sigma0, SpdMatrix):
            object.__setattr__(self, "sigma0", SpdMatrix(self.sigma0))

    def sample(self, grid):
        kp = KernelParams(self.sigma0)
        return Field(grid, self.amplitude * kernel_eval(grid.coordinates, kp))


def gaussian_evolve(g, model, s, t):
    """Exact continuum evolution: ``sigma0 -> sigma0 + A(t) - A(s)``."""
    if s == t:
        return g
    return GaussianState(SpdMatrix(g.sigma0.entries + accumulate_array(model, s, t)), g.amplitude)


def periodic_kernel(grid, kp, images=1):
    """Kernel sampled at all lattice offsets, summed over ``2*images + 1``
    periodic copies per axis. Shape ``grid.shape``, index = offset mod N."""
    n = grid.points
    rep = np.arange(n)
    rep = np.where(rep < n // 2, rep, rep - n) * grid.spacing
    base = np.stack(np.meshgrid(*([rep] * grid.dim), indexing="ij"), axis=-1)
    period = 2.0 * grid.half_width
    table = np.zeros(grid.shape)
    for shift in itertools.product(range(-images, images + 1), repeat=grid.dim):
        table += kernel_eval(base + period * np.asarray(shift, dtype=float), kp)
    return table


def direct_convolution(u, kp, images=1, max_points=MAX_DIRECT_POINTS):
    """Periodic convolution ``h^n sum_j K(x_i - x_j) u_j`` by explicit summation.

    Agrees with the spectral propagator when the kernel is resolved
    (``sqrt(lambda_min) >~ 2 h``) and fits in the box (``sqrt(lambda_max) < L/8``).
    """
    grid = u.grid
    total = grid.points ** grid.dim
    if total > max_points:
        raise GridTooLarge(f"direct convolution limited to {max_points} points, grid has {total}")
    table = periodic_kernel(grid, kp, images).ravel()
    idx = np.array(list(np.ndindex(*grid.shape)))
    flat_u = u.values.ravel()
    strides = grid.points ** np.arange(grid.dim - 1, -1, -1)
    out = np.empty(total)
    chunk = max(1, 2 ** 22 // total)
    for start in range(0, total, chunk):
        rows = idx[start:start + chunk]
        diff = (rows[:, None, :] - idx[None, :, :]) % grid.points
        out[start:start + chunk] = table[diff @ strides] @ flat_u
    return Field(grid, out.reshape(grid.shape) * grid.cell_volume)
