"""A priori bounds for the propagator and checks of simulated solutions.

Exponents follow Young's convolution relation ``1/p + 1/q = 1/r + 1`` with
``1 <= p, q, r < inf``; ``p`` is the kernel exponent, ``q`` the data norm and
``r`` the solution norm.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .diffusivity import accumulate, decay_budget
from .errors import AssumptionViolated, BadExponent, ExponentMismatch
from .kernel import FOUR_PI, KernelParams, kernel_p_norm
from .propagator import apply_propagator
from .quadrature import composite_rule, integrate

BOUND_RTOL = 1e-9
YOUNG_TOL = 1e-12


@dataclass(frozen=True)
class BoundReport:
    kind: str
    t: float
    measured: float
    bound: float
    ratio: float
    satisfied: bool
    tolerance: float = BOUND_RTOL
    params: dict = dc_field(default_factory=dict)

    @classmethod
    def make(cls, kind, t, measured, bound, **params):
        measured = float(measured)
        bound = float(bound)
        ratio = measured / bound if bound > 0 else (0.0 if measured == 0 else math.inf)
        satisfied = measured <= bound * (1.0 + BOUND_RTOL)
        return cls(kind, float(t), measured, bound, ratio, bool(satisfied), BOUND_RTOL, params)

    def scaled(self, factor):
        """Same measurement against ``factor * bound`` (harness self-tests)."""
        return BoundReport.make(self.kind, self.t, self.measured, self.bound * factor, **self.params)

    def to_dict(self):
        d = asdict(self)
        for key in ("bound", "ratio"):
            if math.isinf(d[key]):
                d[key] = "inf"
        return d


def energy(v, q):
    """``E(v) = ||v||_q^q`` as a Riemann sum."""
    q = float(q)
    if not q >= 1.0:
        raise BadExponent(f"energy exponent must satisfy q >= 1, got {q!r}")
    return float(v.grid.cell_volume * np.sum(np.abs(v.values) ** q))


def check_energy_monotone(traj, q):
    """One report per consecutive pair: current energy against the previous one."""
    energies = [energy(u, q) for u in traj.states]
    return [BoundReport.make("energy", t, e1, e0, q=float(q))
            for t, e0, e1 in zip(traj.times[1:], energies[:-1], energies[1:])]


def check_young(p, q, r):
    for name, val in (("p", p), ("q", q), ("r", r)):
        if not (1.0 <= val < math.inf):
            raise ExponentMismatch(f"{name}={val!r} outside [1, inf)")
    gap = 1.0 / p + 1.0 / q - 1.0 / r - 1.0
    if abs(gap) > YOUNG_TOL:
        raise ExponentMismatch(f"1/p + 1/q != 1/r + 1 for (p, q, r) = ({p}, {q}, {r})")


def young_r(p, q):
    """``r`` solving Young's relation; raises if it would be infinite."""
    inv = 1.0 / p + 1.0 / q - 1.0
    if inv <= YOUNG_TOL:
        raise ExponentMismatch(f"(p, q) = ({p}, {q}) gives r = inf")
    return 1.0 / inv


def lplq_operator_bound(model, s, t, p, q, r):
    """Upper bound on ``||W_{s,t}||_{q->r}``: the kernel's ``L^p`` norm."""
    check_young(p, q, r)
    if not s < t:
        raise ValueError("lplq_operator_bound needs s < t")
    return kernel_p_norm(KernelParams(accumulate(model, s, t)), p)


def measured_operator_ratio(u, model, s, t, q, r):
    """``||W_{s,t} u||_r / ||u||_q`` on the grid."""
    return apply_propagator(u, model, s, t).norm(r) / u.norm(q)


def check_lplq(traj, model, p, q, r):
    """Reports ``||u(t)||_r / ||u0||_q`` against the operator bound per time."""
    if traj.times[0] != 0.0:
        raise ValueError("trajectory must start at t = 0")
    u0 = traj.states[0]
    base = u0.norm(q)
    out = []
    for t, u in zip(traj.times[1:], traj.states[1:]):
        bound = lplq_operator_bound(model, 0.0, t, p, q, r)
        out.append(BoundReport.make("lplq", t, u.norm(r) / base, bound, p=p, q=q, r=r))
    return out


def decay_constant(n, p):
    """``C = p^{-n/2p} (4 pi)^{-n(p-1)/2p}``."""
    return 1.0 / (p ** (n / (2.0 * p)) * FOUR_PI ** (n * (p - 1.0) / (2.0 * p)))


def _decay_exponents(n, p, alpha):
    if not (1.0 < alpha < math.inf):
        raise BadExponent(f"alpha must lie in (1, inf), got {alpha!r}")
    if n * (p - 1.0) * alpha >= 2.0 * p:
        raise AssumptionViolated(f"n(p-1)alpha = {n * (p - 1.0) * alpha} must be < 2p = {2.0 * p}")
    return n * (p - 1.0) / (2.0 * p), n * (p - 1.0) * alpha / (2.0 * p)


def singular_budget_integral(model, t, exponent, rtol=1e-11):
    """``int_0^t (F(t) - F(s))^{-exponent} ds`` for ``0 <= exponent < 1``.

    The substitution ``s = t (1 - y^k)``, ``k = 1/(1 - exponent)``, cancels
    the endpoint singularity whenever ``F`` is C^1 with positive derivative
    near ``t``; kinks of the model are passed to the adaptive rule.
    """
    if exponent == 0.0:
        return t
    if not 0.0 < exponent < 1.0:
        raise AssumptionViolated(f"singularity exponent {exponent} must lie in [0, 1)")
    k = 1.0 / (1.0 - exponent)

    def integrand(ys):
        out = np.empty(len(ys))
        for i, y in enumerate(ys):
            s = t * (1.0 - y ** k)
            gap = decay_budget(model, t, max(s, 0.0))
            out[i] = gap ** (-exponent) * t * k * y ** (k - 1.0)
        return out

    cuts = [((t - b) / t) ** (1.0 / k) for b in model.kinks() if 0.0 < b < t]
    return float(integrate(integrand, 0.0, 1.0, rtol=rtol, points=cuts))


def decay_bound(model, t, p, q, r, alpha, u0_norm, f_beta_norm=0.0):
    """Decay envelope for ``||u(t)||_r`` driven by ``F(t) = int_0^t lambda_min(a)``.

    ``C F(t)^{-k} ||u0||_q + C ||f||_{L^beta(0,t; L^q)} (int_0^t (F(t)-F(s))^{-k alpha} ds)^{1/alpha}``
    with ``k = n(p-1)/2p``; infinite at ``t = 0`` when ``p > 1``.
    """
    check_young(p, q, r)
    n = model.dim
    k, k_alpha = _decay_exponents(n, p, alpha)
    c = decay_constant(n, p)
    if t == 0:
        return math.inf if k > 0 else float(u0_norm)
    first = c * decay_budget(model, t) ** (-k) * u0_norm
    if f_beta_norm == 0:
        return first
    integral = singular_budget_integral(model, t, k_alpha)
    return first + c * f_beta_norm * integral ** (1.0 / alpha)


def decay_bound_uniform(gamma0, t, n, p, alpha, u0_norm, f_beta_norm=0.0):
    """Closed form of :func:`decay_bound` when ``lambda_min(a) >= gamma0``.

    ``C gamma0^{-k} (t^{-k} ||u0||_q + t^{1/alpha - k} (1 - k alpha)^{-1/alpha} ||f||)``.
    """
    k, k_alpha = _decay_exponents(n, p, alpha)
    c = decay_constant(n, p)
    return c * gamma0 ** (-k) * (t ** (-k) * u0_norm
                                 + t ** (1.0 / alpha - k) / (1.0 - k_alpha) ** (1.0 / alpha) * f_beta_norm)


def source_beta_norm(f, t, q, beta, panels=16):
    """``(int_0^t ||f(s)||_q^beta ds)^{1/beta}`` by composite Gauss quadrature."""
    nodes, weights = composite_rule(0.0, t, panels, 4)
    vals = np.array([f(float(s)).norm(q) ** beta for s in nodes])
    return float(np.dot(weights, vals) ** (1.0 / beta))


def verify_decay(traj, model, p, q, r, alpha, u0=None, f=None, panels=16):
    """Per time ``||u(t)||_r`` against :func:`decay_bound`."""
    if u0 is None:
        if traj.times[0] != 0.0:
            raise ValueError("pass u0 when the trajectory does not start at t = 0")
        u0 = traj.states[0]
    beta = alpha / (alpha - 1.0)
    base = u0.norm(q)
    out = []
    for t, u in zip(traj.times, traj.states):
        fb = source_beta_norm(f, t, q, beta, panels) if (f is not None and t > 0) else 0.0
        bound = decay_bound(model, t, p, q, r, alpha, base, fb)
        out.append(BoundReport.make("decay", t, u.norm(r), bound, p=p, q=q, r=r, alpha=alpha))
    return out


def scale_reports(reports, factor):
    return [rep.scaled(factor) for rep in reports]

