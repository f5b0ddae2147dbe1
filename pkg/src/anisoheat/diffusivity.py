"""Time-dependent diffusivity tensors a(t) and their time integrals.

Four model kinds are provided:

* :class:`ConstantModel` -- ``a(t) = M``.
* :class:`SmoothModel` -- ``a(t) = R (sum_k c_k(t) M_k) R^T`` with scalar
  coefficients from a closed-form family (polynomials, sin, cos, exp) and a
  constant rotation ``R``.
* :class:`PiecewiseConstantModel` -- SPD step function with finitely many
  breakpoints, right-continuous at each breakpoint.
* :class:`MollifiedModel` -- convolution of a base model with a scaled
  polynomial bump ``psi_eps(tau) = psi(tau / eps) / eps``.

Models are defined for ``t >= 0``. Wherever a mollifier reaches below zero the
base model is extended by its value at ``t = 0``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .errors import BadMollifier, NotSpd
from .quadrature import fixed_rule, integrate

SPD_RTOL = 1e-12
JACOBI_TOL = 1e-13
_MOLLIFIER_ORDER = 24
EXTENSION_REACH = 0.1


# ---------------------------------------------------------------------------
# symmetric eigenvalues
# ---------------------------------------------------------------------------

def _eig2(m):
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    d = m[..., 1, 1]
    mean = 0.5 * (a + d)
    rad = np.hypot(0.5 * (a - d), b)
    hi = mean + rad
    det = a * d - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(hi > 0, det / hi, mean - rad)
    return lo, hi


def jacobi_eigenvalues(matrix, tol=JACOBI_TOL, max_sweeps=60):
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius norm drops below
    ``tol * ||matrix||_F``. Returned in ascending order.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = math.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def symmetric_eigenvalues(matrix):
    """Ascending eigenvalues; closed form for n <= 2, Jacobi otherwise."""
    m = np.asarray(matrix, dtype=float)
    n = m.shape[-1]
    if n == 1:
        return m[..., 0, :].copy()
    if n == 2:
        lo, hi = _eig2(m)
        return np.stack([lo, hi], axis=-1)
    if m.ndim == 2:
        return jacobi_eigenvalues(m)
    return np.stack([jacobi_eigenvalues(x) for x in m.reshape(-1, n, n)]).reshape(m.shape[:-1])


def _min_eig_many(mats):
    n = mats.shape[-1]
    if n == 1:
        return mats[:, 0, 0]
    if n == 2:
        return _eig2(mats)[0]
    return np.array([jacobi_eigenvalues(m)[0] for m in mats])


# ---------------------------------------------------------------------------
# SPD matrices
# ---------------------------------------------------------------------------

class SpdMatrix:
    """Immutable symmetric positive definite matrix.

    The input is symmetrised exactly; asymmetry beyond round-off or a smallest
    eigenvalue below ``1e-12 * trace`` raises :class:`NotSpd`.
    """

    __slots__ = ("entries", "dim", "_eig")

    def __init__(self, entries):
        m = np.array(entries, dtype=float)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise NotSpd(f"expected a square matrix, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NotSpd("matrix has non-finite entries")
        scale = np.max(np.abs(m))
        if np.max(np.abs(m - m.T)) > 1e-12 * max(scale, 1e-300):
            raise NotSpd(f"matrix is not symmetric: {m.tolist()}")
        m = 0.5 * (m + m.T)
        eig = symmetric_eigenvalues(m)
        trace = float(np.trace(m))
        if not (trace > 0 and eig[0] > SPD_RTOL * trace):
            raise NotSpd(f"matrix is not positive definite (eigenvalues {eig.tolist()})")
        m.setflags(write=False)
        eig.setflags(write=False)
        object.__setattr__(self, "entries", m)
        object.__setattr__(self, "dim", m.shape[0])
        object.__setattr__(self, "_eig", eig)

    def __setattr__(self, name, value):
        raise AttributeError("SpdMatrix is immutable")

    @property
    def eigenvalues(self):
        return self._eig

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __add__(self, other):
        return SpdMatrix(self.entries + np.asarray(other))

    def __eq__(self, other):
        return isinstance(other, SpdMatrix) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"SpdMatrix({self.entries.tolist()})"


def lambda_min(matrix):
    """Smallest eigenvalue of an SPD matrix."""
    m = matrix if isinstance(matrix, SpdMatrix) else SpdMatrix(matrix)
    return float(m.eigenvalues[0])


def operator_norm(matrix):
    """Spectral norm, i.e. the largest eigenvalue for an SPD matrix."""
    m = matrix if isinstance(matrix, SpdMatrix) else SpdMatrix(matrix)
    return float(m.eigenvalues[-1])


def _as_matrix(value, dim=None):
    m = np.array(value, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if dim is not None and m.shape != (dim, dim):
        raise ValueError(f"expected a {dim}x{dim} matrix, got shape {m.shape}")
    return m


# ---------------------------------------------------------------------------
# scalar time functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimeFunction:
    """Scalar coefficient ``c(t)`` from the closed-form family.

    ``kind`` is one of ``poly`` (coefficients in increasing degree), ``sin``
    and ``cos`` (``omega, phase``, i.e. ``sin(omega t + phase)``) or ``exp``
    (``rate``, i.e. ``exp(rate t)``).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in ("poly", "sin", "cos", "exp"):
            raise ValueError(f"unknown time function kind {self.kind!r}")
        if self.kind == "poly" and not self.params:
            raise ValueError("poly() needs at least one coefficient")
        if self.kind in ("sin", "cos") and len(self.params) not in (1, 2):
            raise ValueError(f"{self.kind}() takes omega[, phase]")
        if self.kind == "exp" and len(self.params) != 1:
            raise ValueError("exp() takes a single rate")

    @classmethod
    def parse(cls, text):
        """Parse ``const``/a number, ``poly(c0, c1, ...)``, ``sin(w[, phi])``,
        ``cos(w[, phi])`` or ``exp(r)``."""
        text = text.strip()
        if text in ("const", "1"):
            return cls("poly", (1.0,))
        m = re.fullmatch(r"(poly|sin|cos|exp)\s*\((.*)\)", text)
        if m is None:
            try:
                return cls("poly", (float(text),))
            except ValueError:
                raise ValueError(f"cannot parse time function {text!r}") from None
        args = tuple(float(a) for a in m.group(2).split(",") if a.strip())
        return cls(m.group(1), args)

    def derivative(self, t, order=0):
        t = np.asarray(t, dtype=float)
        if self.kind == "poly":
            p = Polynomial(self.params)
            return p.deriv(order)(t) if order else p(t)
        if self.kind in ("sin", "cos"):
            omega = self.params[0]
            phase = self.params[1] if len(self.params) > 1 else 0.0
            shift = phase + order * 0.5 * math.pi
            fn = np.sin if self.kind == "sin" else np.cos
            return omega ** order * fn(omega * t + shift)
        rate = self.params[0]
        return rate ** order * np.exp(rate * t)

    def __call__(self, t):
        return self.derivative(t, 0)

    def __str__(self):
        return f"{self.kind}({', '.join(repr(p) for p in self.params)})"


def rotation_2d(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class DiffusivityModel:
    """Common interface. Subclasses implement ``_eval_many`` and
    ``_accumulate``; both accept times below zero (extension by ``a(0)``)."""

    kind = "abstract"
    dim: int

    def _eval_many(self, ts):
        raise NotImplementedError

    def _accumulate(self, s, t):
        raise NotImplementedError

    def kinks(self):
        """Times where a(t) is not smooth (quadrature split points)."""
        return ()

    def eval_many(self, ts):
        """Unchecked batch evaluation, shape ``(len(ts), n, n)``."""
        return self._eval_many(np.atleast_1d(np.asarray(ts, dtype=float)))

    def _accumulate_ext(self, s, t):
        """``int_s^t a`` allowing ``s < 0`` (constant extension by a(0))."""
        if s >= 0.0:
            return self._accumulate(s, t)
        a0 = self._eval_many(np.zeros(1))[0]
        out = a0 * (min(t, 0.0) - s)
        if t > 0.0:
            out = out + self._accumulate(0.0, t)
        return out


class ConstantModel(DiffusivityModel):
    kind = "constant"

    def __init__(self, matrix):
        self.matrix = matrix if isinstance(matrix, SpdMatrix) else SpdMatrix(matrix)
        self.dim = self.matrix.dim

    def _eval_many(self, ts):
        return np.broadcast_to(self.matrix.entries, (len(ts), self.dim, self.dim)).copy()

    def _accumulate(self, s, t):
        return (t - s) * self.matrix.entries

    def __repr__(self):
        return f"ConstantModel({self.matrix.entries.tolist()})"


class SmoothModel(DiffusivityModel):
    """``a(t) = R (sum_k c_k(t) M_k) R^T``.

    ``terms`` is a sequence of ``(TimeFunction | str, matrix)`` pairs; the
    matrices must be symmetric but need not be definite individually.
    ``rotation`` is an orthogonal matrix or, for n = 2, an angle.
    SPD-ness of the sum is checked wherever :func:`eval_a` is called.
    """

    kind = "smooth"

    def __init__(self, terms, rotation=None):
        if not terms:
            raise ValueError("a smooth model needs at least one term")
        funcs, mats = [], []
        dim = None
        for fn, mat in terms:
            if isinstance(fn, str):
                fn = TimeFunction.parse(fn)
            m = _as_matrix(mat, dim)
            dim = m.shape[0]
            if not np.allclose(m, m.T, rtol=0, atol=1e-14 * max(np.max(np.abs(m)), 1.0)):
                raise NotSpd(f"term matrix is not symmetric: {m.tolist()}")
            funcs.append(fn)
            mats.append(0.5 * (m + m.T))
        self.dim = dim
        if rotation is None:
            rot = np.eye(dim)
        elif np.ndim(rotation) == 0:
            if dim != 2:
                raise ValueError("an angle rotation is only defined for n = 2")
            rot = rotation_2d(float(rotation))
        else:
            rot = _as_matrix(rotation, dim)
            if np.max(np.abs(rot @ rot.T - np.eye(dim))) > 1e-12:
                raise ValueError("rotation matrix is not orthogonal")
        self.rotation = rot
        self.functions = tuple(funcs)
        # conjugation is folded into the coefficient matrices once
        self.matrices = np.stack([rot @ m @ rot.T for m in mats])
        self.matrices = 0.5 * (self.matrices + np.swapaxes(self.matrices, 1, 2))

        self.reach = self._natural_reach()

    def _natural_reach(self):
        # below t=0 the formula is kept while it stays comfortably SPD
        ts = np.linspace(-EXTENSION_REACH, 0.0, 65)
        raw = np.einsum("tk,kij->tij", self._coefficients(ts), self.matrices)
        mins = _min_eig_many(raw)
        return EXTENSION_REACH if np.all(mins >= 0.5 * mins[-1]) and mins[-1] > 0 else 0.0

    def _coefficients(self, ts, order=0):
        return np.stack([fn.derivative(ts, order) for fn in self.functions], axis=-1)

    def _eval_many(self, ts):
        c = self._coefficients(np.maximum(ts, -self.reach))
        return np.einsum("tk,kij->tij", c, self.matrices)

    def _accumulate_ext(self, s, t):
        lo = -self.reach
        if s >= lo:
            return self._accumulate(s, t)
        a_lo = self._eval_many(np.array([lo]))[0]
        out = a_lo * (min(t, lo) - s)
        if t > lo:
            out = out + self._accumulate(lo, t)
        return out

    def derivative(self, t, order=1):
        """``d^order a / dt^order`` at ``t > 0`` (plain array)."""
        c = self._coefficients(np.atleast_1d(float(t)), order)
        return np.einsum("tk,kij->tij", c, self.matrices)[0]

    def _accumulate(self, s, t):
        return integrate(self._eval_many, s, t, points=self.kinks() + (-self.reach,))

    def __repr__(self):
        terms = ", ".join(f"({fn}, {m.tolist()})" for fn, m in zip(self.functions, self.matrices))
        return f"SmoothModel([{terms}])"


class PiecewiseConstantModel(DiffusivityModel):
    """SPD step function: ``values[k]`` on ``[b_k, b_{k+1})`` with
    ``b_0 = 0`` and ``b_{K+1} = inf``. Right-continuous at breakpoints."""

    kind = "piecewise"

    def __init__(self, breakpoints, values):
        bps = np.array(breakpoints, dtype=float).ravel()
        if len(values) != len(bps) + 1:
            raise ValueError(f"{len(bps)} breakpoints need {len(bps) + 1} values, got {len(values)}")
        if len(bps) and (bps[0] <= 0 or np.any(np.diff(bps) <= 0)):
            raise ValueError("breakpoints must satisfy 0 < t_1 < ... < t_K")
        vals = [v if isinstance(v, SpdMatrix) else SpdMatrix(v) for v in values]
        dims = {v.dim for v in vals}
        if len(dims) != 1:
            raise ValueError("all piece values must have the same dimension")
        self.dim = dims.pop()
        self.breakpoints = bps
        self.values = tuple(vals)
        self._stack = np.stack([v.entries for v in vals])

    def kinks(self):
        return tuple(self.breakpoints)

    def min_gap(self):
        """Smallest distance between consecutive breakpoints (including 0)."""
        if not len(self.breakpoints):
            return math.inf
        return float(np.min(np.diff(np.concatenate([[0.0], self.breakpoints]))))

    def _eval_many(self, ts):
        idx = np.searchsorted(self.breakpoints, ts, side="right")
        return self._stack[idx]

    def _accumulate(self, s, t):
        edges = np.concatenate([[-np.inf], self.breakpoints, [np.inf]])
        lo = np.clip(edges[:-1], s, t)
        hi = np.clip(edges[1:], s, t)
        return np.tensordot(hi - lo, self._stack, axes=(0, 0))

    def __repr__(self):
        return (f"PiecewiseConstantModel({self.breakpoints.tolist()}, "
                f"{[v.entries.tolist() for v in self.values]})")


# ---------------------------------------------------------------------------
# mollifiers
# ---------------------------------------------------------------------------

class Mollifier:
    """Nonnegative polynomial bump supported in [-1, 1] with unit mass.

    ``psi`` is the density, ``cdf`` its running integral and
    ``cdf_integral`` the running integral of ``cdf``; all three are exact
    piecewise polynomials.
    """

    def __init__(self, coefficients, name=None):
        poly = Polynomial(np.asarray(coefficients, dtype=float))
        prim = poly.integ(lbnd=-1.0)
        mass = float(prim(1.0))
        if abs(mass - 1.0) > 1e-10:
            raise BadMollifier(f"mollifier mass is {mass!r}, expected 1")
        probe = np.linspace(-1.0, 1.0, 2001)
        if np.min(poly(probe)) < -1e-14:
            raise BadMollifier("mollifier takes negative values on [-1, 1]")
        self.name = name or f"poly{list(poly.coef)}"
        self.poly = poly
        self._cdf = prim
        self._cdf_int = prim.integ(lbnd=-1.0)
        self._g1 = float(self._cdf_int(1.0))

    @classmethod
    def bump(cls, power=2):
        """``c_m (1 - tau^2)^m`` normalised to unit mass."""
        base = Polynomial([1.0, 0.0, -1.0]) ** int(power)
        prim = base.integ(lbnd=-1.0)
        return cls((base / prim(1.0)).coef, name=f"bump{int(power)}")

    @classmethod
    def parse(cls, text):
        m = re.fullmatch(r"\s*bump\s*\(\s*(\d+)\s*\)\s*", text)
        if m:
            return cls.bump(int(m.group(1)))
        m = re.fullmatch(r"\s*poly\s*\((.*)\)\s*", text)
        if m:
            return cls([float(c) for c in m.group(1).split(",")])
        raise ValueError(f"cannot parse mollifier {text!r}")

    @property
    def symmetric(self):
        return bool(np.allclose(self.poly.coef[1::2], 0.0, atol=1e-15))

    def psi(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.where(np.abs(tau) <= 1.0, self.poly(np.clip(tau, -1.0, 1.0)), 0.0)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z <= -1.0, 0.0, np.where(z >= 1.0, 1.0, self._cdf(np.clip(z, -1.0, 1.0))))

    def cdf_integral(self, z):
        z = np.asarray(z, dtype=float)
        inner = self._cdf_int(np.clip(z, -1.0, 1.0))
        return np.where(z <= -1.0, 0.0, np.where(z >= 1.0, self._g1 + (z - 1.0), inner))

    def __repr__(self):
        return f"Mollifier({self.name})"


DEFAULT_MOLLIFIER = Mollifier.bump(2)


class MollifiedModel(DiffusivityModel):
    """``a_eps = a * psi_eps`` for a piecewise-constant or smooth base.

    Step bases are handled in closed form through the mollifier's primitives;
    smooth bases use a fixed high-order Gauss rule in the mollifier variable,
    split where the shifted argument crosses ``t = 0``.
    """

    kind = "mollified"

    def __init__(self, base, epsilon, mollifier=None):
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        if isinstance(base, MollifiedModel):
            raise ValueError("base model is already mollified")
        self.base = base
        self.epsilon = float(epsilon)
        self.mollifier = mollifier or DEFAULT_MOLLIFIER
        self.dim = base.dim

    def kinks(self):
        eps = self.epsilon
        if isinstance(self.base, PiecewiseConstantModel):
            pts = [p for b in self.base.breakpoints for p in (b - eps, b + eps)]
        else:
            pts = [eps]
        return tuple(sorted(p for p in pts if p > 0))

    def _tau_rule(self, shifts):
        cuts = sorted({float(c) for c in shifts if -1.0 < c < 1.0})
        edges = [-1.0, *cuts, 1.0]
        nodes, weights = [], []
        for lo, hi in zip(edges[:-1], edges[1:]):
            x, w = fixed_rule(lo, hi, _MOLLIFIER_ORDER)
            nodes.append(x)
            weights.append(w * self.mollifier.psi(x))
        return np.concatenate(nodes), np.concatenate(weights)

    def _eval_many(self, ts):
        eps = self.epsilon
        base = self.base
        if isinstance(base, PiecewiseConstantModel):
            edges = np.concatenate([[-np.inf], base.breakpoints, [np.inf]])
            z = (ts[:, None] - edges[None, :]) / eps
            cdf = self.mollifier.cdf(z)
            weights = cdf[:, :-1] - cdf[:, 1:]
            return np.einsum("tk,kij->tij", weights, base._stack)
        out = np.empty((len(ts), self.dim, self.dim))
        for i, t in enumerate(ts):
            tau, w = self._tau_rule([t / eps])
            out[i] = np.tensordot(w, base._eval_many(t - eps * tau), axes=(0, 0))
        return out

    def _accumulate(self, s, t):
        eps = self.epsilon
        base = self.base
        if isinstance(base, PiecewiseConstantModel):
            g = self.mollifier.cdf_integral
            out = base._stack[0] * (t - s)
            jumps = np.diff(base._stack, axis=0)
            for b, jump in zip(base.breakpoints, jumps):
                out = out + jump * (eps * float(g((t - b) / eps) - g((s - b) / eps)))
            return out
        tau, w = self._tau_rule([s / eps, t / eps])
        acc = np.stack([base._accumulate_ext(s - eps * x, t - eps * x) for x in tau])
        return np.tensordot(w, acc, axes=(0, 0))

    def __repr__(self):
        return f"MollifiedModel({self.base!r}, epsilon={self.epsilon!r}, {self.mollifier!r})"


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def _check_time(t, name="t"):
    t = float(t)
    if not t >= 0.0:
        raise ValueError(f"{name} must be nonnegative, got {t!r}")
    return t


def eval_a(model, t):
    """``a(t)`` as an :class:`SpdMatrix` (right limit at breakpoints)."""
    t = _check_time(t)
    m = model.eval_many([t])[0]
    try:
        return SpdMatrix(m)
    except NotSpd as exc:
        raise NotSpd(f"diffusivity is not SPD at t={t!r}: {exc}") from None


def accumulate(model, s, t):
    """``A(t) - A(s) = int_s^t a``; SPD-validated when ``s < t``.

    Returns an :class:`SpdMatrix` for ``s < t`` and the zero array for
    ``s == t``.
    """
    s = _check_time(s, "s")
    t = _check_time(t)
    if s > t:
        raise ValueError(f"accumulate needs s <= t, got s={s!r}, t={t!r}")
    if s == t:
        return np.zeros((model.dim, model.dim))
    m = model._accumulate(s, t)
    try:
        return SpdMatrix(m)
    except NotSpd as exc:
        raise NotSpd(f"A({t!r}) - A({s!r}) is not SPD: {exc}") from None


def accumulate_array(model, s, t):
    """Like :func:`accumulate` but always a plain array (zero when s == t)."""
    out = accumulate(model, s, t)
    return np.array(out.entries if isinstance(out, SpdMatrix) else out)


def decay_budget(model, t, s=0.0):
    """``F(t) - F(s)`` with ``F(t) = int_0^t lambda_min(a)``."""
    s = _check_time(s, "s")
    t = _check_time(t)
    if s > t:
        raise ValueError("decay_budget needs s <= t")
    if s == t:
        return 0.0
    if isinstance(model, ConstantModel):
        return lambda_min(model.matrix) * (t - s)
    if isinstance(model, PiecewiseConstantModel):
        edges = np.concatenate([[-np.inf], model.breakpoints, [np.inf]])
        lengths = np.clip(edges[1:], s, t) - np.clip(edges[:-1], s, t)
        mins = np.array([lambda_min(v) for v in model.values])
        return float(np.dot(lengths, mins))

    def integrand(ts):
        return _min_eig_many(model._eval_many(ts))

    return float(integrate(integrand, s, t, points=model.kinks()))


def mollify(model, epsilon, mollifier=None):
    """Mollified model ``a * psi_eps``; constants are returned unchanged."""
    if isinstance(model, ConstantModel):
        return model
    return MollifiedModel(model, epsilon, mollifier)


def random_spd(rng, dim, low=0.5, high=2.0):
    """Random SPD matrix with eigenvalues uniform in [low, high]."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = rng.uniform(low, high, size=dim)
    return SpdMatrix((q * eig) @ q.T)
