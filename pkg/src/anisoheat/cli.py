"""Command line front end: ``anisoheat {solve,certify,verify,net}``.

Every subcommand reads a scenario document (see :mod:`anisoheat.config`) and
writes its artifacts to ``--out``. Exit status: 0 on success, 1 when a bound
or certificate check fails, 2 on any error (a JSON error record is printed to
stdout and written to ``error.json`` when the output directory is usable).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

from . import __version__
from .certify import kernel_certificate
from .config import parse_scenario
from .diffusivity import ConstantModel
from .errors import AnisoHeatError, ValidationError
from .estimates import (
    BoundReport, check_energy_monotone, check_lplq, scale_reports, verify_decay,
)
from .fieldio import atomic_write, field_to_bytes, field_to_csv
from .propagator import solve_homogeneous
from .quadrature import composite_rule
from .veryweak import (
    DEFAULT_EPSILONS, EpsNet, consistency_check, moderateness_diagnostic,
    negligibility_diagnostic, net_energy_reports, solve_net,
)
from .propagator import Trajectory, solve_duhamel

EXIT_OK, EXIT_VIOLATION, EXIT_ERROR = 0, 1, 2


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False, default=_default) + "\n"


def _default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return x


def _trajectory(sc, workers):
    if sc.source is None:
        return solve_homogeneous(sc.initial, sc.model, sc.times, workers)
    states = [sc.initial if t == 0 else
              solve_duhamel(sc.initial, sc.source, sc.model, t, sc.panels, sc.tol, sc.max_panels)
              for t in sc.times]
    return Trajectory(sc.times, states)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(sc, out, args):
    traj = _trajectory(sc, args.threads)
    rows = [["index", "t", "mass", "l1", "l2", "linf", "panels", "flags"]]
    files = []
    for i, (t, u) in enumerate(zip(traj.times, traj.states)):
        stem = f"state_{i:03d}"
        atomic_write(os.path.join(out, stem + ".bin"), field_to_bytes(u))
        atomic_write(os.path.join(out, stem + ".csv"), field_to_csv(u))
        files += [stem + ".bin", stem + ".csv"]
        rows.append([i, _fmt(t), _fmt(u.mass()), _fmt(u.norm(1)), _fmt(u.norm(2)),
                     _fmt(u.norm(math.inf)), u.meta.get("panels", ""), ";".join(sorted(u.flags))])
    atomic_write(os.path.join(out, "norms.csv"), _csv(rows))
    manifest = {"subcommand": "solve", "scenario": sc.name, "times": traj.times,
                "files": files + ["norms.csv"], "grid": {"dim": sc.grid.dim,
                "points": sc.grid.points, "half_width": sc.grid.half_width}}
    atomic_write(os.path.join(out, "manifest.json"), _json(manifest))
    return EXIT_OK, {"subcommand": "solve", "states": len(traj.times)}


def cmd_certify(sc, out, args):
    cert = kernel_certificate(sc.model, seed=sc.seed, samples=sc.certify_samples)
    atomic_write(os.path.join(out, "certificate.json"), _json(cert))
    failed = [i for i, r in enumerate(cert["samples"]) if not r["passed"]]
    failed += [d["test_function"] for d in cert["delta_limits"] if not d["passed"]]
    return (EXIT_OK if cert["passed"] else EXIT_VIOLATION,
            {"subcommand": "certify", "passed": cert["passed"], "failed": failed})


def _source_reports(sc, traj):
    out = []
    for q in sc.energy_q:
        base = sc.initial.norm(q)
        for t, u in zip(traj.times[1:], traj.states[1:]):
            nodes, weights = composite_rule(0.0, t, sc.panels, 4)
            budget = base + sum(w * sc.source(float(s)).norm(q) for s, w in zip(nodes, weights))
            out.append(BoundReport.make("duhamel", t, u.norm(q), budget, q=float(q)))
    return out


def verify_reports(sc, workers=1):
    hom = solve_homogeneous(sc.initial, sc.model, sc.times, workers)
    reports = []
    for q in sc.energy_q:
        reports += check_energy_monotone(hom, q)
    for tup in sc.verify:
        if hom.times[0] == 0.0 and len(hom.times) > 1:
            reports += check_lplq(hom, sc.model, tup.p, tup.q, tup.r)
    full = hom
    if sc.source is not None:
        full = _trajectory(sc, workers)
        reports += _source_reports(sc, full)
    for tup in sc.verify:
        if tup.alpha is not None:
            reports += verify_decay(full, sc.model, tup.p, tup.q, tup.r, tup.alpha,
                                    u0=sc.initial, f=sc.source, panels=sc.panels)
    return reports


def cmd_verify(sc, out, args):
    reports = verify_reports(sc, args.threads)
    if args.bound_scale != 1.0:
        reports = scale_reports(reports, args.bound_scale)
    lines = "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports)
    atomic_write(os.path.join(out, "reports.jsonl"), lines)
    rows = [["kind", "t", "measured", "bound", "ratio", "satisfied", "tolerance", "params"]]
    for r in reports:
        rows.append([r.kind, _fmt(r.t), _fmt(r.measured), _fmt(r.bound), _fmt(r.ratio),
                     str(r.satisfied).lower(), _fmt(r.tolerance), json.dumps(r.params, sort_keys=True)])
    atomic_write(os.path.join(out, "reports.csv"), _csv(rows))
    failing = [r.to_dict() for r in reports if not r.satisfied]
    return (EXIT_VIOLATION if failing else EXIT_OK,
            {"subcommand": "verify", "reports": len(reports), "failing": failing})


def cmd_net(sc, out, args):
    if isinstance(sc.model, ConstantModel):
        raise ValidationError("net needs a piecewise or smooth diffusivity")
    spec = sc.net
    eps = spec.epsilons if spec and spec.epsilons else DEFAULT_EPSILONS
    seminorms = spec.seminorms if spec else ("l2", "h1")
    net = EpsNet(sc.model, eps, spec.mollifier if spec else None)
    sol = solve_net(net, sc.initial, sc.source, sc.times, args.threads, sc.panels)
    diags = {
        "moderateness": moderateness_diagnostic(sol, seminorms),
        "consistency": consistency_check(sol, panels=sc.panels),
    }
    if spec and spec.second_mollifier is not None:
        other = solve_net(EpsNet(sc.model, eps, spec.second_mollifier),
                          sc.initial, sc.source, sc.times, args.threads, sc.panels)
        diags["negligibility"] = negligibility_diagnostic(sol, other)
    energy = net_energy_reports(sol, sc.panels)
    worst = max(energy, key=lambda r: r.ratio)
    doc = {
        "scenario": sc.name,
        "mollifier": repr(net.mollifier),
        "epsilons": list(net.epsilons),
        "diagnostics": {k: v.to_dict() for k, v in diags.items()},
        "energy": {"reports": len(energy), "all_satisfied": all(r.satisfied for r in energy),
                   "worst": worst.to_dict()},
    }
    atomic_write(os.path.join(out, "diagnostics.json"), _json(doc))
    rows = []
    for name, d in diags.items():
        part = d.csv_rows()
        rows += part if not rows else part[1:] if part[0] == rows[0] else [[]] + part
    atomic_write(os.path.join(out, "net_table.csv"), _csv(rows))
    summary = {"subcommand": "net", **{k: {"verdict": v.verdict, "slope": v.fitted_slope,
                                           "stderr": v.stderr} for k, v in diags.items()}}
    ok = doc["energy"]["all_satisfied"]
    return (EXIT_OK if ok else EXIT_VIOLATION), summary


COMMANDS = {"solve": cmd_solve, "certify": cmd_certify, "verify": cmd_verify, "net": cmd_net}


def build_parser():
    parser = argparse.ArgumentParser(prog="anisoheat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario document")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if name == "verify":
            p.add_argument("--bound-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def _safe(obj):
    """Replace non-finite floats so the summary stays valid JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_safe(v) for v in obj]
    return obj


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
        with open(args.scenario, encoding="utf-8") as fh:
            text = fh.read()
        sc = parse_scenario(text)
        if args.seed is not None:
            sc.seed = args.seed
        status, summary = COMMANDS[args.command](sc, out, args)
    except (AnisoHeatError, OSError, ValueError) as exc:
        if isinstance(exc, AnisoHeatError):
            record = exc.to_dict()
        else:
            record = {"error": type(exc).__name__, "message": str(exc)}
        record["subcommand"] = args.command
        text = json.dumps(record, sort_keys=True)
        print(text)
        try:
            atomic_write(os.path.join(out, "error.json"), text + "\n")
        except OSError:
            pass
        return EXIT_ERROR
    summary["exit"] = status
    print(json.dumps(_safe(summary), sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
