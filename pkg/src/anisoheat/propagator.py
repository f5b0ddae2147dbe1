"""Spectral realisation of the propagator family W_{s,t} on a periodic grid.

The grid covers ``[-L, L)^n`` with ``N`` points per axis. Mode ``k`` carries
the wavenumber ``xi = k pi / L`` and W_{s,t} multiplies it by
``exp(-<Sigma xi, xi>)`` with ``Sigma = A(t) - A(s)``. At the Nyquist index
the cross products ``xi_i xi_j`` (i != j) are set to zero, which keeps the
discrete symbol Hermitian and still exactly multiplicative in ``Sigma``.

Results are meaningful for data whose mass outside ``|x| < L/2`` is below
1e-10 and for ``sqrt(lambda_max(Sigma)) < L/8``; beyond that periodic wrap
dominates.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .diffusivity import accumulate_array
from .errors import QuadratureUnresolved
from .quadrature import composite_rule

GRID_TOO_COARSE = "GridTooCoarse"
NYQUIST_SYMBOL_LIMIT = 0.5
TOP_OCTAVE_ENERGY_LIMIT = 1e-6


@dataclass(frozen=True)
class SpatialGrid:
    dim: int
    points: int
    half_width: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError("grid dimension must be 1, 2 or 3")
        n = int(self.points)
        if n < 2 or n & (n - 1):
            raise ValueError(f"points per axis must be a power of two, got {self.points}")
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        object.__setattr__(self, "points", n)
        object.__setattr__(self, "half_width", float(self.half_width))

    @property
    def spacing(self):
        return 2.0 * self.half_width / self.points

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def shape(self):
        return (self.points,) * self.dim

    @cached_property
    def axis(self):
        return -self.half_width + self.spacing * np.arange(self.points)

    @cached_property
    def coordinates(self):
        """Grid points as an array of shape ``shape + (dim,)``."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def wavenumbers(self):
        """Per-axis wavenumbers ``k pi / L`` in FFT order."""
        return 2.0 * math.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def _frequency_products(self):
        k = self.wavenumbers
        nyq = np.zeros(self.points, dtype=bool)
        nyq[self.points // 2] = True
        mesh = np.meshgrid(*([k] * self.dim), indexing="ij")
        nyq_mesh = np.meshgrid(*([nyq] * self.dim), indexing="ij")
        prods = {}
        for i in range(self.dim):
            for j in range(i, self.dim):
                p = mesh[i] * mesh[j]
                if i != j:
                    p = np.where(nyq_mesh[i] | nyq_mesh[j], 0.0, p)
                prods[i, j] = p
        return prods

    def quadratic_form(self, sigma):
        """``<Sigma xi, xi>`` on the frequency grid."""
        sigma = np.asarray(sigma, dtype=float)
        out = np.zeros(self.shape)
        for (i, j), p in self._frequency_products.items():
            coef = sigma[i, j] if i == j else sigma[i, j] + sigma[j, i]
            if coef:
                out += coef * p
        return out

    def symbol(self, sigma):
        return np.exp(-self.quadratic_form(sigma))

    @cached_property
    def top_octave(self):
        idx = np.abs(np.fft.fftfreq(self.points) * self.points)
        masks = np.meshgrid(*([idx >= self.points // 4] * self.dim), indexing="ij")
        return np.logical_or.reduce(masks)

    def sample(self, fn):
        """Field of ``fn(points)`` where points have shape ``shape + (dim,)``."""
        return Field(self, np.asarray(fn(self.coordinates), dtype=float))


@dataclass
class Field:
    """Real samples on a :class:`SpatialGrid`.

    ``flags`` collects advisory conditions raised while producing the field
    (e.g. ``GridTooCoarse``); ``meta`` carries solver bookkeeping.
    """

    grid: SpatialGrid
    values: np.ndarray
    flags: frozenset = frozenset()
    meta: dict = dc_field(default_factory=dict, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.size != self.grid.points ** self.grid.dim:
            raise ValueError(f"field has {vals.size} samples, grid needs {self.grid.points ** self.grid.dim}")
        self.values = vals.reshape(self.grid.shape)
        self.flags = frozenset(self.flags)

    def norm(self, q=2.0):
        """Discrete ``L^q`` norm (Riemann sum, cell-volume weight)."""
        q = float(q)
        if math.isinf(q):
            return float(np.max(np.abs(self.values)))
        return float((self.grid.cell_volume * np.sum(np.abs(self.values) ** q)) ** (1.0 / q))

    def mass(self):
        return float(self.grid.cell_volume * np.sum(self.values))

    def _like(self, values):
        return Field(self.grid, values, self.flags)

    def __add__(self, other):
        return self._like(self.values + (other.values if isinstance(other, Field) else other))

    def __sub__(self, other):
        return self._like(self.values - (other.values if isinstance(other, Field) else other))

    def __mul__(self, scalar):
        return self._like(self.values * scalar)

    __rmul__ = __mul__


@dataclass
class Trajectory:
    times: list
    states: list

    def __post_init__(self):
        self.times = [float(t) for t in self.times]
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# propagator
# ---------------------------------------------------------------------------

def apply_symbol(u, sigma, check=True):
    """Multiply the modes of ``u`` by ``exp(-<Sigma xi, xi>)``."""
    grid = u.grid
    q = grid.quadratic_form(sigma)
    coeffs = np.fft.fftn(u.values)
    out = np.fft.ifftn(coeffs * np.exp(-q))
    flags = set(u.flags)
    if check:
        k_nyq = math.pi * grid.points / (2.0 * grid.half_width)
        nyq_symbol = math.exp(-min(np.diag(np.asarray(sigma))) * k_nyq ** 2)
        if nyq_symbol > NYQUIST_SYMBOL_LIMIT:
            power = np.abs(coeffs) ** 2
            total = power.sum()
            if total > 0 and power[grid.top_octave].sum() > TOP_OCTAVE_ENERGY_LIMIT * total:
                flags.add(GRID_TOO_COARSE)
    return Field(grid, out.real, flags)


def apply_propagator(u, model, s, t):
    """``W_{s,t} u`` by exact symbol multiplication; ``W_{t,t} = 1``."""
    if not 0.0 <= s <= t:
        raise ValueError(f"need 0 <= s <= t, got s={s!r}, t={t!r}")
    if s == t:
        return u
    return apply_symbol(u, accumulate_array(model, s, t))


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def solve_homogeneous(u0, model, times, workers=1):
    """States ``W_{0,t} u0``, each propagated directly from ``u0``."""
    times = [float(t) for t in times]
    if times and times[0] < 0:
        raise ValueError("times must be nonnegative")
    states = _map(lambda t: apply_propagator(u0, model, 0.0, t), times, workers)
    return Trajectory(times, states)


def _duhamel_integral(f, model, t, panels, order=4):
    nodes, weights = composite_rule(0.0, t, panels, order)
    acc = None
    flags = set()
    for s, w in zip(nodes, weights):
        term = apply_propagator(f(float(s)), model, float(s), t)
        flags |= term.flags
        acc = w * term.values if acc is None else acc + w * term.values
    return acc, flags


def solve_duhamel(u0, f, model, t, panels=16, tol=1e-8, max_panels=64, source_order=4):
    """``W_{0,t} u0 + int_0^t W_{s,t} f(s) ds`` with composite Gauss quadrature.

    ``f`` maps a time to a :class:`Field`. With ``tol=None`` the integral is
    evaluated once on ``panels`` panels. Otherwise panels are doubled until
    two successive results agree to ``tol`` (relative L2); failing that by
    ``max_panels`` raises :class:`QuadratureUnresolved`.
    """
    if not t > 0:
        raise ValueError("solve_duhamel needs t > 0")
    if panels < 1:
        raise ValueError("panels must be >= 1")
    hom = apply_propagator(u0, model, 0.0, t)
    if f is None:
        return hom
    cur, flags = _duhamel_integral(f, model, t, panels, source_order)
    change = None
    p = panels
    if tol is not None:
        while True:
            nxt, nflags = _duhamel_integral(f, model, t, 2 * p, source_order)
            total = hom.values + nxt
            scale = max(float(np.linalg.norm(total)), np.finfo(float).tiny)
            change = float(np.linalg.norm(nxt - cur)) / scale
            p *= 2
            cur, flags = nxt, flags | nflags
            if change <= tol:
                break
            if p >= max_panels:
                raise QuadratureUnresolved(
                    f"Duhamel integral changed by {change:.3e} (> {tol:.1e}) at {p} panels")
    out = Field(hom.grid, hom.values + cur, hom.flags | flags)
    out.meta.update(panels=p, last_change=change)
    return out


def identity_limit_check(u0, model, s, eps_list):
    """``||W_{s-eps, s+eps} u0 - u0||_inf`` per ``eps``."""
    out = []
    for eps in eps_list:
        if eps == 0:
            out.append(0.0)
            continue
        if s - eps < 0:
            raise ValueError("identity_limit_check needs s - eps >= 0")
        v = apply_propagator(u0, model, s - eps, s + eps)
        out.append(float(np.max(np.abs(v.values - u0.values))))
    return out


def spectral_gradient(u):
    """Spectral gradient components (Nyquist mode dropped)."""
    grid = u.grid
    coeffs = np.fft.fftn(u.values)
    k = grid.wavenumbers.copy()
    k[grid.points // 2] = 0.0
    comps = []
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = grid.points
        deriv = np.fft.ifftn(1j * k.reshape(shape) * coeffs).real
        comps.append(Field(grid, deriv))
    return comps


def gradient_norm(u, q=2.0):
    """Discrete ``L^q`` norm of ``|grad u|``."""
    comps = spectral_gradient(u)
    mag = np.sqrt(sum(c.values ** 2 for c in comps))
    return Field(u.grid, mag).norm(q)
