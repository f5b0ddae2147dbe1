"""Kernel identity certificate.

Checks, on random SPD matrices, that the closed-form kernel has unit mass,
solves the heat equation (central-difference residual with order-2 decay) and
that its closed-form ``L^p`` norms match quadrature. Delta-family limits are
checked on the scenario's own diffusivity.
"""
from __future__ import annotations

import math

import numpy as np

from .diffusivity import ConstantModel, lambda_min, operator_norm, random_spd
from .fitting import loglog_slope
from .kernel import (
    KernelParams, delta_limit_errors, direct_p_norm, heat_residual, kernel_mass, kernel_p_norm,
)

MASS_TOL = 1e-8
RESIDUAL_TOL = 1e-6
RESIDUAL_STEPS = (2e-3, 1e-3)
ORDER_RANGE = (1.75, 2.25)
FLOOR_MARGIN = 100.0
PNORM_TOL = 1e-8
P_VALUES = (1.0, 1.5, 2.0, 3.0, math.inf)
DELTA_EPSILONS = tuple(float(e) for e in np.geomspace(1e-2, 1e-4, 9))
DELTA_SLOPE = 1.0
DELTA_SLOPE_TOL = 0.15


def _gauss(x):
    return np.exp(-np.sum(x ** 2, axis=-1))


def _gauss_cos(x):
    return np.exp(-0.5 * np.sum(x ** 2, axis=-1)) * np.cos(x[..., 0])


TEST_FUNCTIONS = {"gaussian": _gauss, "gaussian_cosine": _gauss_cos}


def _num(x):
    return "inf" if math.isinf(x) else float(x)


def _residual_pair(model, x):
    """Residuals at ``RESIDUAL_STEPS``, doubled (at most 4 times) until the
    smaller one sits ``FLOOR_MARGIN`` above the roundoff floor, so the observed
    order measures truncation rather than cancellation noise.

    The floor is measured: at ``h = 1e-5`` truncation is negligible and the
    residual is pure roundoff, which scales like ``h^-2``.
    """
    probe = 1e-5
    noise = heat_residual(model, x, 0.0, 1.0, probe)
    h1, h2 = RESIDUAL_STEPS
    for _ in range(5):
        floor = noise * (probe / h2) ** 2
        res = [heat_residual(model, x, 0.0, 1.0, h) for h in (h1, h2)]
        if min(res) >= FLOOR_MARGIN * floor:
            break
        h1, h2 = 2.0 * h1, 2.0 * h2
    return (h1, h2), res, floor


def certify_sigma(sigma, rng):
    """All identity checks for one SPD ``sigma`` (used as ``a`` on ``[0, 1]``)."""
    kp = KernelParams(sigma)
    mass = kernel_mass(kp)
    record = {
        "dim": kp.dim,
        "sigma": np.asarray(sigma.entries).tolist(),
        "mass": {"value": mass, "error": abs(mass - 1.0), "tolerance": MASS_TOL,
                 "passed": abs(mass - 1.0) <= MASS_TOL},
    }

    model = ConstantModel(sigma)
    x = math.sqrt(2.0 * operator_norm(sigma)) * 0.7 * rng.standard_normal(kp.dim)
    steps, res, floor = _residual_pair(model, x)
    order = math.log(res[0] / res[1]) / math.log(steps[0] / steps[1])
    record["residual"] = {
        "point": x.tolist(), "steps": list(steps), "values": res, "roundoff_floor": floor,
        "order": order, "tolerance": RESIDUAL_TOL, "order_range": list(ORDER_RANGE),
        "passed": max(res) <= RESIDUAL_TOL and ORDER_RANGE[0] <= order <= ORDER_RANGE[1],
    }

    norms = []
    for p in P_VALUES:
        closed = kernel_p_norm(kp, p)
        direct = direct_p_norm(kp, p)
        rel = abs(direct - closed) / closed
        norms.append({"p": _num(p), "closed": closed, "direct": direct, "rel_error": rel,
                      "tolerance": PNORM_TOL, "passed": rel <= PNORM_TOL})
    record["p_norms"] = norms
    record["passed"] = bool(record["mass"]["passed"] and record["residual"]["passed"]
                            and all(n["passed"] for n in norms))
    return record


def delta_limit_record(model, name, phi, point=0.0, eps_list=DELTA_EPSILONS):
    errs = delta_limit_errors(phi, model, point, eps_list)
    fit = loglog_slope(eps_list, errs)
    return {"test_function": name, "point": point, "epsilons": list(eps_list), "errors": errs,
            "slope": fit.slope, "stderr": fit.stderr, "expected": DELTA_SLOPE,
            "tolerance": DELTA_SLOPE_TOL,
            "passed": abs(fit.slope - DELTA_SLOPE) <= DELTA_SLOPE_TOL}


def kernel_certificate(model, seed=42, samples=20, dims=(1, 2, 3)):
    """Certificate dictionary; ``certificate["passed"]`` is the overall verdict."""
    rng = np.random.default_rng(seed)
    sigmas = [random_spd(rng, dims[i % len(dims)], 0.3, 2.0) for i in range(samples)]
    records = [certify_sigma(s, rng) for s in sigmas]
    deltas = [delta_limit_record(model, name, phi) for name, phi in TEST_FUNCTIONS.items()]
    return {
        "seed": seed,
        "samples": records,
        "delta_limits": deltas,
        "min_eigenvalue_at_0": lambda_min(model.eval_many([0.0])[0]),
        "passed": bool(all(r["passed"] for r in records) and all(d["passed"] for d in deltas)),
    }
