"""Nets of mollified problems for singular diffusivities.

A net replaces a step diffusivity ``a`` by ``a_eps = a * psi_eps`` for a
decreasing list of ``eps`` and solves each regularised Cauchy problem with
the exact propagator. Diagnostics fit power laws in ``eps`` to seminorms of
the net (moderateness), of differences between two nets (negligibility) and
of the distance to a classical reference (consistency).

The seminorms are grid versions of Schwartz-type seminorms restricted to the
time window of the trajectories: ``l2`` is ``sup_t ||u(t)||_2`` and ``h1`` is
``sup_t ||grad u(t)||_2``. They are configuration, not a canonical choice.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .diffusivity import DEFAULT_MOLLIFIER, PiecewiseConstantModel, mollify
from .errors import AnisoHeatError, MismatchedNets, NetConstructionError
from .estimates import BoundReport
from .fitting import loglog_slope
from .propagator import Field, Trajectory, gradient_norm, solve_duhamel, solve_homogeneous
from .quadrature import composite_rule

DEFAULT_EPSILONS = tuple(float(e) for e in np.geomspace(1e-1, 1e-4, 13))
STDERR_LIMIT = 0.2
MIN_POINTS = 6
SLOPE_SNAP = 0.05
ZERO_FLOOR = 1e-12


def _sup_l2(traj):
    return max(u.norm(2.0) for u in traj.states)


def _sup_h1(traj):
    return max(gradient_norm(u, 2.0) for u in traj.states)


SEMINORMS = {"l2": _sup_l2, "h1": _sup_h1}


class EpsNet:
    """Mollification net over ``epsilons`` (strictly decreasing).

    For step models every ``eps`` must stay below half the smallest
    breakpoint gap, so mollified jumps never overlap.
    """

    def __init__(self, base_model, epsilons=DEFAULT_EPSILONS, mollifier=None):
        eps = [float(e) for e in epsilons]
        if not eps:
            raise NetConstructionError("a net needs at least one epsilon")
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise NetConstructionError("epsilons must be positive and strictly decreasing")
        if isinstance(base_model, PiecewiseConstantModel):
            limit = 0.5 * base_model.min_gap()
            if eps[0] >= limit:
                raise NetConstructionError(
                    f"epsilon {eps[0]} exceeds breakpoint clearance {limit}")
        self.base_model = base_model
        self.epsilons = tuple(eps)
        self.mollifier = mollifier or DEFAULT_MOLLIFIER

    def models(self):
        return [mollify(self.base_model, e, self.mollifier) for e in self.epsilons]

    def __len__(self):
        return len(self.epsilons)

    def __repr__(self):
        return f"EpsNet({self.base_model!r}, {len(self)} epsilons, {self.mollifier!r})"


@dataclass
class NetSolution:
    """Trajectories of a net, ordered like ``net.epsilons`` (descending)."""

    net: EpsNet
    trajectories: list
    u0: Field
    source: object
    times: list

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]


def _solve_one(model, u0, f, times, panels):
    if f is None:
        return solve_homogeneous(u0, model, times)
    states = [u0 if t == 0 else solve_duhamel(u0, f, model, t, panels=panels) for t in times]
    return Trajectory(times, states)


def solve_trajectory(model, u0, f, times, panels=16):
    """Homogeneous or Duhamel trajectory of a single model."""
    return _solve_one(model, u0, f, [float(t) for t in times], panels)


def solve_net(net, u0, f, times, workers=1, panels=16):
    """Solve every member of ``net``; errors are re-raised tagged with eps."""
    times = [float(t) for t in times]
    models = net.models()

    def run(item):
        eps, model = item
        try:
            return _solve_one(model, u0, f, times, panels)
        except AnisoHeatError as exc:
            raise type(exc)(f"[epsilon={eps:.6g}] {exc}") from exc

    items = list(zip(net.epsilons, models))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajs = list(pool.map(run, items))
    else:
        trajs = [run(it) for it in items]
    return NetSolution(net, trajs, u0, f, times)


def difference(a, b):
    if a.times != b.times:
        raise MismatchedNets("trajectories have different times")
    states = []
    for x, y in zip(a.states, b.states):
        if x.grid != y.grid:
            raise MismatchedNets("trajectories live on different grids")
        states.append(Field(x.grid, x.values - y.values))
    return Trajectory(a.times, states)


@dataclass
class NetDiagnostics:
    """Per-eps seminorm table plus fitted log-log slopes.

    ``fits[name]`` is ``None`` when no fit was possible (too few points above
    the zero floor). ``fitted_slope``/``stderr`` refer to the first seminorm.
    """

    kind: str
    epsilons: list
    table: dict
    fits: dict
    verdict: str
    order: int | None = None
    notes: dict = dc_field(default_factory=dict)

    @property
    def primary(self):
        return next(iter(self.table))

    @property
    def fitted_slope(self):
        fit = self.fits[self.primary]
        return fit.slope if fit is not None else math.nan

    @property
    def stderr(self):
        fit = self.fits[self.primary]
        return fit.stderr if fit is not None else math.nan

    def to_dict(self):
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "order": self.order,
            "stderr_limit": STDERR_LIMIT,
            "fits": {k: (v.to_dict() if v is not None else None) for k, v in self.fits.items()},
            "table": [
                {"epsilon": e, **{k: self.table[k][i] for k in self.table}}
                for i, e in enumerate(self.epsilons)
            ],
            "notes": self.notes,
        }

    def csv_rows(self):
        names = list(self.table)
        rows = [["kind", "epsilon", *names]]
        for i, e in enumerate(self.epsilons):
            rows.append([self.kind, repr(e), *[repr(self.table[k][i]) for k in names]])
        return rows


def _fit(x, values, floor):
    pts = [(a, v) for a, v in zip(x, values) if v > floor]
    if len(pts) < MIN_POINTS:
        return None
    xs, ys = zip(*pts)
    return loglog_slope(xs, ys)


def moderateness_diagnostic(solution, seminorms=("l2", "h1")):
    """Fit ``seminorm(u_eps) ~ eps^{-N}``; verdict ``moderate(N)``.

    ``N`` is the largest slope rounded up after snapping slopes within 0.05
    of an integer, so a flat seminorm gives ``N = 0``.
    """
    eps = list(solution.net.epsilons)
    if len(eps) < MIN_POINTS:
        raise ValueError(f"moderateness needs at least {MIN_POINTS} epsilons")
    table = {name: [SEMINORMS[name](tr) for tr in solution] for name in seminorms}
    inv = [1.0 / e for e in eps]
    fits = {name: _fit(inv, vals, 0.0) for name, vals in table.items()}
    if any(f is None or f.stderr >= STDERR_LIMIT for f in fits.values()):
        return NetDiagnostics("moderateness", eps, table, fits, "inconclusive")
    top = max(f.slope for f in fits.values())
    order = max(0, math.ceil(top - SLOPE_SNAP))
    return NetDiagnostics("moderateness", eps, table, fits, f"moderate({order})", order)


def _decay_verdict(kind, eps, table, fits, floor):
    notes = {"zero_floor": floor}
    if all(v == 0.0 for vals in table.values() for v in vals):
        return NetDiagnostics(kind, eps, table, fits, "identical", notes=notes)
    if all(v <= floor for vals in table.values() for v in vals):
        return NetDiagnostics(kind, eps, table, fits, "below_floor", notes=notes)
    fit = fits[next(iter(table))]
    if fit is None or fit.stderr >= STDERR_LIMIT:
        verdict = "inconclusive"
    elif fit.slope >= 1.0:
        verdict = "negligible" if kind == "negligibility" else "consistent"
    elif fit.slope > 0.0:
        verdict = "decaying"
    else:
        verdict = "not_decaying"
    return NetDiagnostics(kind, eps, table, fits, verdict, notes=notes)


def _floor(solution, seminorms):
    scale = max(SEMINORMS[name](tr) for name in seminorms for tr in solution)
    return ZERO_FLOOR * scale


def negligibility_diagnostic(sol_a, sol_b, seminorms=("l2",)):
    """Fit ``seminorm(u_eps^A - u_eps^B) ~ eps^slope``.

    Differences below ``1e-12`` times the largest seminorm in the net are
    treated as zero and left out of the fit.
    """
    if sol_a.net.epsilons != sol_b.net.epsilons:
        raise MismatchedNets("nets have different epsilons")
    if sol_a.times != sol_b.times:
        raise MismatchedNets("nets have different times")
    eps = list(sol_a.net.epsilons)
    diffs = [difference(a, b) for a, b in zip(sol_a, sol_b)]
    table = {name: [SEMINORMS[name](d) for d in diffs] for name in seminorms}
    floor = _floor(sol_a, seminorms)
    fits = {name: _fit(eps, vals, floor) for name, vals in table.items()}
    return _decay_verdict("negligibility", eps, table, fits, floor)


def consistency_check(solution, classical_model=None, reference=None, seminorms=("l2",), panels=16):
    """Fit ``seminorm(u_eps - u) ~ eps^slope`` against a classical solution.

    ``reference`` may be given directly; otherwise it is solved with
    ``classical_model`` (default: the net's unmollified base model, which for
    step models is the exactly integrated reference) from the same data.
    """
    if reference is None:
        model = classical_model or solution.net.base_model
        reference = solve_trajectory(model, solution.u0, solution.source, solution.times, panels)
    eps = list(solution.net.epsilons)
    diffs = [difference(tr, reference) for tr in solution]
    table = {name: [SEMINORMS[name](d) for d in diffs] for name in seminorms}
    floor = _floor(solution, seminorms)
    fits = {name: _fit(eps, vals, floor) for name, vals in table.items()}
    return _decay_verdict("consistency", eps, table, fits, floor)


def net_energy_reports(solution, panels=16):
    """``||u_eps(t)||_2 <= ||u0||_2 + int_0^t ||f||_2`` for every member and time."""
    base = solution.u0.norm(2.0)
    f = solution.source
    budgets = {}
    for t in solution.times:
        if f is None or t == 0:
            budgets[t] = base
        else:
            nodes, weights = composite_rule(0.0, t, panels, 4)
            budgets[t] = base + float(np.dot(weights, [f(float(s)).norm(2.0) for s in nodes]))
    out = []
    for eps, tr in zip(solution.net.epsilons, solution):
        for t, u in zip(tr.times, tr.states):
            out.append(BoundReport.make("net_energy", t, u.norm(2.0), budgets[t], epsilon=eps))
    return out
