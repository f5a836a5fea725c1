"""Command line entry point.

Exit codes: 0 success, 1 verification failure (including infeasible plans
and refused scenarios), 2 configuration or usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .fronts import certify_immortal, steady_fronts, track, write_certificates, write_fronts_csv
from .hysteresis import StructureError
from .kernels import ThresholdDomain, TruncationPolicy, sweep_rows, verify_kernel_bounds
from .scenario import ConfigError, _Section, load_scenario, load_series, load_yaml, save_series
from .solver import run

log = logging.getLogger("relaydiff")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _g(v) -> str:
    return "-" if v is None else format(float(v), ".17g")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _config_path(args) -> str:
    path = args.config or args.config_pos
    if path is None:
        raise ConfigError("no configuration given (positional or --config)")
    return path


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    sc = load_scenario(_config_path(args))
    series = run(sc.params, sc.data, sc.stop, grid=sc.grid, cadence=sc.cadence, probes=sc.probes,
                 profile_cadence=sc.profile_cadence)
    out = Path(args.out)
    save_series(out, series)
    tracks, collisions = track(series)
    steady_fronts(tracks, series)
    if sc.probes:
        # each probe is a candidate cut; certificates cover the second half of the run
        for x_cut in sorted(sc.probes):
            certify_immortal(tracks, series, x_cut, series.records[-1].t / 2)
    write_fronts_csv(out / "fronts.csv", tracks)
    write_certificates(out / "certificates.json", tracks)
    viol = series.monitor.violations()
    _write_json(out / "summary.json", {
        "name": sc.name, "stop_reason": series.stop_reason, "t_end": series.records[-1].t,
        "n_fronts": series.records[-1].cfg.n_fronts, "collisions": len(collisions),
        "collision_ratios": [c.U_ratio for c in collisions], "monitor_violations": viol,
    })
    for v in viol:
        log.warning("monitor: %s", v)
    print(f"simulated to t={series.records[-1].t:.6g} ({series.stop_reason}); "
          f"{series.records[-1].cfg.n_fronts} fronts; output in {out}")
    return EXIT_OK


def cmd_kernels(args) -> int:
    path = _config_path(args)
    doc = load_yaml(path)
    top = _Section(doc, path, "", {"domain", "x", "taus", "truncation", "bounds"})
    ds = top.sub("domain", {"lo", "hi"})
    try:
        dom = ThresholdDomain(ds.number("lo", 0.05), ds.number("hi", 0.25))
    except StructureError as exc:
        raise ConfigError(str(exc), path, top.line_of("domain")) from None
    xs_spec = doc.get("x", {"n": 201})
    if isinstance(xs_spec, list):
        xs = np.asarray(xs_spec, dtype=float)
    else:
        xn = top.sub("x", {"n"}).integer("n", 201)
        xs = np.linspace(dom.lo, dom.hi, xn)
    taus = doc.get("taus")
    if not isinstance(taus, list) or not taus or not all(isinstance(t, (int, float)) and t > 0 for t in taus):
        raise ConfigError("'taus' must be a non-empty list of positive numbers", path, top.line_of("taus"))
    tr = top.sub("truncation", {"abs_tol", "max_terms", "small_tau"})
    try:
        pol = TruncationPolicy(tr.number("abs_tol", 1e-13, positive=True), tr.integer("max_terms", 4000),
                               tr.d.get("small_tau", "images"))
    except ValueError as exc:
        raise ConfigError(str(exc), path, top.line_of("truncation")) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kernels.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "tau", "psi", "phi", "Phi_tail", "Psi_tail", "abs_diff"])
        for row in sweep_rows(dom, xs, taus, pol):
            w.writerow([_g(v) for v in row])
    status = EXIT_OK
    if "bounds" in doc:
        b = top.sub("bounds", {"theta", "tau_min", "tau_max", "n_tau", "n_random"})
        theta = b.number("theta", 0.5, positive=True)
        grid = np.geomspace(b.number("tau_min", 0.005, positive=True), b.number("tau_max", theta, positive=True),
                            b.integer("n_tau", 40))
        rep = verify_kernel_bounds(dom, grid, theta, n_random=b.integer("n_random", 100), seed=args.seed, pol=pol)
        _write_json(out / "kernel_bounds.json", {"theta": theta, "c_fit": rep.c_fit, "taus": rep.taus,
                                                 "sup_diff": rep.sup_diff, "normalized": rep.normalized,
                                                 "violations": rep.violations, "seed": args.seed})
        print(f"kernel bound constant c = {rep.c_fit:.6g}; {len(rep.violations)} violations")
        status = EXIT_OK if rep.ok else EXIT_FAIL
    print(f"wrote {out / 'kernels.csv'}")
    return status


def cmd_sequences(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.theorem == "thm1":
            plan = ex.build_sequences_thm1(ThresholdDomain(args.lo, args.hi), args.N, margin=args.margin)
            bad = ex.check_plan1(plan)
        else:
            mu = args.mu if args.mu is not None else 0.5 - args.hi
            plan = ex.build_sequences_thm2(args.N, mu, margin=args.margin)
            bad = ex.check_plan2(plan)
    except ex.PlanInfeasible as exc:
        _write_json(out / "report.json", {"status": "infeasible", "blocking_index": exc.index, "message": str(exc)})
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except StructureError as exc:
        raise ConfigError(str(exc)) from None
    _write_json(out / "plan.json", plan.to_dict())
    _write_json(out / "report.json", {"status": "pass" if not bad else "fail", "check_failures": bad})
    print(f"plan written to {out / 'plan.json'}; independent check: {'ok' if not bad else bad}")
    return EXIT_OK if not bad else EXIT_FAIL


def cmd_verify(args) -> int:
    series = load_series(args.series)
    try:
        doc = json.loads(Path(args.plan).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read plan: {exc}", args.plan) from None
    if doc.get("kind") != args.theorem:
        raise ConfigError(f"plan kind {doc.get('kind')!r} does not match '{args.theorem}'", args.plan)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.theorem == "thm1":
            rep = ex.verify_theorem1(series, ex.SequencePlan1.from_dict(doc), scenario_id=str(args.series))
        else:
            rep = ex.verify_theorem2(series, ex.SequencePlan2.from_dict(doc), scenario_id=str(args.series))
    except ex.ScenarioMismatch as exc:
        _write_json(out / "report.json", {"status": "refused", "message": str(exc)})
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write_json(out / "report.json", rep.to_dict())
    for c in rep.checks:
        print(f"i={c.i} t>={c.t_obs:.6g} x_cut={c.x_cut:.6g}: min count {c.min_count} (need {c.expected}) "
              f"{'ok' if c.counts_ok else 'FAIL'}")
    print(f"status: {rep.status}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_asymptotics(args) -> int:
    path = _config_path(args)
    doc = load_yaml(path)
    top = _Section(doc, path, "", {"D_list", "lo", "hi", "T", "n_fronts", "grid_n", "cadence", "rel_tol"})
    D_list = doc.get("D_list")
    if not isinstance(D_list, list) or not D_list or not all(isinstance(d, (int, float)) and d > 0 for d in D_list):
        raise ConfigError("'D_list' must be a non-empty list of positive numbers", path, top.line_of("D_list"))
    d = ex.RemarkScenario()
    try:
        base = ex.RemarkScenario(top.number("lo", d.lo), top.number("hi", d.hi), top.number("T", d.T, positive=True),
                                 top.integer("n_fronts", d.n_fronts), top.integer("grid_n", d.grid_n),
                                 top.number("cadence", d.cadence, positive=True),
                                 top.number("rel_tol", d.rel_tol, positive=True))
        base.params(float(D_list[0]))
    except StructureError as exc:
        raise ConfigError(str(exc), path) from None
    rows = ex.asymptotics_experiment(D_list, base, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "asymptotics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["D", "n", "t_n", "q_n", "y_hat_n"])
        for r in rows:
            w.writerow([_g(r.D), r.n, _g(r.t_n), _g(r.q_n), _g(r.y_hat)])
    errs = ex.relative_errors(rows)
    gaps = [(r.D, r.n) for r in rows if r.t_n is None]
    ordered = ex.ordering_ok(rows)
    _write_json(out / "report.json", {
        "rows": [r.__dict__ for r in rows],
        "relative_errors": [{"D": D, "n": n, "t_err": a, "q_err": b} for (D, n), (a, b) in errs.items()],
        "gaps": gaps, "ordering_ok": ordered,
    })
    for r in rows:
        print(f"D={r.D:.3g} n={r.n}: t={_g(r.t_n)} q/sqrtD={_g(r.q_over_sqrtD)}")
    if gaps:
        print(f"{len(gaps)} fronts not steady within the horizon: {gaps}")
    return EXIT_OK if ordered else EXIT_FAIL


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="concurrent runs for sweeps")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="relaydiff", description="Hysteresis-diffusion simulator and verification harness")
    sub = p.add_subparsers(dest="command", required=True)

    for name, fn, helptext in (("simulate", cmd_simulate, "run one scenario config"),
                               ("kernels", cmd_kernels, "tabulate kernels from a sweep config"),
                               ("asymptotics", cmd_asymptotics, "steady-front table over a list of D")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("config_pos", nargs="?", metavar="config")
        sp.add_argument("--config", default=None)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("sequences", parents=[common], help="build and check an observation plan")
    sp.add_argument("theorem", choices=["thm1", "thm2"])
    sp.add_argument("--N", type=int, default=2)
    sp.add_argument("--lo", type=float, default=0.05)
    sp.add_argument("--hi", type=float, default=0.25)
    sp.add_argument("--mu", type=float, default=None, help="thm2 only; defaults to 1/2 - hi")
    sp.add_argument("--margin", type=float, default=0.05)
    sp.set_defaults(func=cmd_sequences)

    sp = sub.add_parser("verify", parents=[common], help="check a saved run against a plan")
    sp.add_argument("theorem", choices=["thm1", "thm2"])
    sp.add_argument("series", help="directory written by 'simulate'")
    sp.add_argument("plan", help="plan.json written by 'sequences'")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
