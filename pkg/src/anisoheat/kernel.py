"""Closed-form fundamental kernel of the anisotropic heat equation.

For ``Sigma = A(t) - A(s)``::

    W(x) = exp(-<x, Sigma^{-1} x> / 4) / sqrt((4 pi)^n det Sigma)

with Fourier symbol ``exp(-<Sigma xi, xi>)`` under the pairing
``f(x) = (2 pi)^{-n} int exp(i <x, xi>) f^(xi) dxi``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .diffusivity import SpdMatrix, accumulate, eval_a, lambda_min
from .errors import BadExponent, QuadratureFailure
from .quadrature import tensor_rule

FOUR_PI = 4.0 * math.pi
MASS_TOL = 1e-10
BOX_WIDTH = 10.0


class KernelParams:
    """``Sigma`` with cached determinant, inverse and principal axes."""

    def __init__(self, sigma):
        sigma = sigma if isinstance(sigma, SpdMatrix) else SpdMatrix(sigma)
        self.sigma = sigma
        self.dim = sigma.dim
        m = sigma.entries
        chol = np.linalg.cholesky(m)
        self.cholesky = chol
        self.det_sigma = float(np.prod(np.diag(chol)) ** 2)
        inv = np.linalg.solve(m, np.eye(self.dim))
        self.inv_sigma = SpdMatrix(0.5 * (inv + inv.T))
        evals, evecs = np.linalg.eigh(m)
        self.axes = evecs
        self.axis_variances = evals
        self.peak = 1.0 / math.sqrt(FOUR_PI ** self.dim * self.det_sigma)

    @classmethod
    def from_model(cls, model, s, t):
        return cls(accumulate(model, s, t))

    def __repr__(self):
        return f"KernelParams({self.sigma.entries.tolist()})"


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise ValueError(f"points must have trailing dimension {dim}, got shape {x.shape}")
    return x


def kernel_eval(x, kp):
    """Kernel value at ``x`` (shape ``(..., n)``; scalars allowed for n = 1)."""
    pts = _points(x, kp.dim)
    quad = np.einsum("...i,ij,...j->...", pts, kp.inv_sigma.entries, pts)
    out = kp.peak * np.exp(-0.25 * quad)
    return float(out) if out.ndim == 0 else out


def symbol_eval(xi, kp):
    """Fourier symbol ``exp(-<Sigma xi, xi>)``."""
    pts = _points(xi, kp.dim)
    quad = np.einsum("...i,ij,...j->...", pts, kp.sigma.entries, pts)
    out = np.exp(-quad)
    return float(out) if out.ndim == 0 else out


def _exponent(p):
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "+inf"):
            return math.inf
        p = float(p)
    p = float(p)
    if not p >= 1.0:
        raise BadExponent(f"exponent must satisfy p >= 1, got {p!r}")
    return p


def kernel_p_norm(kp, p):
    """Closed-form ``||W||_p`` for ``p`` in [1, inf]."""
    p = _exponent(p)
    if math.isinf(p):
        return kp.peak
    n = kp.dim
    return 1.0 / (p ** (n / (2.0 * p)) * (FOUR_PI ** n * kp.det_sigma) ** ((p - 1.0) / (2.0 * p)))


def _default_order(dim):
    return 200 if dim <= 2 else 64


def principal_rule(kp, order=None, width=BOX_WIDTH):
    """Tensor Gauss rule on a box aligned with the principal axes of ``Sigma``.

    The half-width along axis ``i`` is ``width`` kernel standard deviations,
    i.e. ``width * sqrt(2 lambda_i)``.
    """
    order = order or _default_order(kp.dim)
    half = width * np.sqrt(2.0 * kp.axis_variances)
    y, w = tensor_rule(-half, half, order)
    return y @ kp.axes.T, w


def kernel_mass(kp, order=None, weight=None, power=1.0, tol=MASS_TOL, check=False):
    """Quadrature of ``W^power * weight`` over the truncated principal box.

    With the defaults this is the mass, which must be 1. ``check=True``
    raises :class:`QuadratureFailure` when the mass misses 1 by more than
    ``tol``.
    """
    x, w = principal_rule(kp, order)
    vals = kernel_eval(x, kp)
    if power != 1.0:
        vals = vals ** power
    if weight is not None:
        vals = vals * np.asarray(weight(x), dtype=float)
    total = float(np.dot(w, vals))
    if check and weight is None and power == 1.0 and abs(total - 1.0) > tol:
        raise QuadratureFailure(f"kernel mass {total!r} differs from 1 by more than {tol}")
    return total


def direct_p_norm(kp, p, order=None, seed=0):
    """Brute-force ``||W||_p``: box quadrature of ``W^p``, or a numerical
    maximisation of ``W`` for ``p = inf``."""
    p = _exponent(p)
    if math.isinf(p):
        rng = np.random.default_rng(seed)
        scale = np.sqrt(kp.axis_variances.max())
        start = rng.normal(scale=scale, size=kp.dim)
        res = optimize.minimize(lambda y: -kernel_eval(y, kp) / kp.peak, start,
                                method="Nelder-Mead",
                                options={"xatol": 1e-12 * scale, "fatol": 1e-16, "maxiter": 20000})
        return float(kernel_eval(res.x, kp))
    return kernel_mass(kp, order, power=p) ** (1.0 / p)


def heat_residual(model, x, s, t, h=1e-4):
    """``|dW/dt - sum_ij a_ij(t) d2W/dx_i dx_j|`` by central differences.

    Steps are relative: ``dt = h (t - s)`` and ``dx = h sqrt(lambda_min(Sigma))``.
    """
    if not s < t:
        raise ValueError("heat_residual needs s < t")
    dt = h * (t - s)
    if t - dt <= s:
        raise ValueError("step too large: t - dt must exceed s")
    kp = KernelParams.from_model(model, s, t)
    x = _points(x, kp.dim).reshape(kp.dim)
    w_plus = kernel_eval(x, KernelParams.from_model(model, s, t + dt))
    w_minus = kernel_eval(x, KernelParams.from_model(model, s, t - dt))
    dw_dt = (w_plus - w_minus) / (2.0 * dt)

    dx = h * math.sqrt(lambda_min(kp.sigma))
    n = kp.dim
    eye = np.eye(n) * dx
    a = eval_a(model, t).entries
    w0 = kernel_eval(x, kp)
    lap = 0.0
    for i in range(n):
        d2 = (kernel_eval(x + eye[i], kp) - 2.0 * w0 + kernel_eval(x - eye[i], kp)) / dx ** 2
        lap += a[i, i] * d2
        for j in range(i + 1, n):
            ei, ej = eye[i], eye[j]
            d2 = (kernel_eval(x + ei + ej, kp) - kernel_eval(x + ei - ej, kp)
                  - kernel_eval(x - ei + ej, kp) + kernel_eval(x - ei - ej, kp)) / (4.0 * dx ** 2)
            lap += 2.0 * a[i, j] * d2
    return abs(dw_dt - lap)


def delta_limit_errors(phi, model, point, eps_list, side="forward", order=None):
    """``|int W(.; s, s+eps) phi - phi(0)|`` for each ``eps``.

    ``side="backward"`` uses ``W(.; t-eps, t)`` with ``t = point`` instead.
    ``phi`` maps points of shape ``(m, n)`` to values of shape ``(m,)``.
    """
    origin = float(np.asarray(phi(np.zeros((1, model.dim))), dtype=float).ravel()[0])
    out = []
    for eps in eps_list:
        if side == "forward":
            kp = KernelParams.from_model(model, point, point + eps)
        elif side == "backward":
            kp = KernelParams.from_model(model, point - eps, point)
        else:
            raise ValueError("side must be 'forward' or 'backward'")
        out.append(abs(kernel_mass(kp, order, weight=phi) - origin))
    return out
