"""Command-line front end: instances, runs, audits, sweeps and exponent fits."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from hardsum.instance import HypothesisError, build
from hardsum.oracle import OracleSession, ZeroChainViolation, span_audit
from hardsum.solvers import SOLVERS, CertificateViolation, RunAborted, make_spec, run

log = logging.getLogger("hardsum")

CSV_SCHEMA = "hardsum.results/1"
CSV_HEADER = ("family", "n", "L", "sigma", "delta", "eps", "solver", "seed",
              "ifo_to_target", "lower_bound", "ratio", "status")

# which factory keyword each CSV column maps to, per family
_PARAM_KEYS = {
    "SC": ("sigma", "Delta"),
    "AVG-NC": ("sigma", "Delta"),
    "IND-NC": ("sigma", "Delta"),
    "CVX": ("B", None),
    "OMEGA-N": (None, "Delta"),
    "OMEGA-N-CVX": ("B", None),
}


def factory_params(family, n, L, sigma, delta):
    """Map the CSV-style (sigma, delta) pair onto the factory's keywords.

    For CVX and OMEGA-N-CVX the ``sigma`` slot carries the radius B.
    """
    if family not in _PARAM_KEYS:
        raise ValueError(f"unknown family {family!r}")
    skey, dkey = _PARAM_KEYS[family]
    p = {"n": int(n), "L": float(L)}
    if skey:
        p[skey] = float(sigma)
    if dkey:
        p[dkey] = float(delta)
    return p


def make_instance(family, n, L, sigma, delta, eps):
    p = factory_params(family, n, L, sigma, delta)
    if family.startswith("OMEGA"):
        inst = build(family, **p)
        return inst, float(eps)
    inst = build(family, epsilon=float(eps), **p)
    return inst, inst.metadata.target_epsilon


# ---------------------------------------------------------------- sweep


@dataclass
class SweepConfig:
    family: str
    n: list
    settings: list  # list of {"L": .., "sigma": .., "delta": ..}
    eps: list
    solvers: list = field(default_factory=lambda: list(SOLVERS))
    hyper: dict = field(default_factory=dict)  # solver -> overrides
    budget_multiplier: float = 20.0
    seeds: int = 3
    seed: int = 0


# Chain lengths stay in the single digits so the grid runs in minutes on one core.
DEFAULT_SWEEP = (
    SweepConfig("SC", [8, 16, 32, 64],
                [{"L": 1.0, "sigma": 1e-3, "delta": 1.0}, {"L": 1.0, "sigma": 1e-2, "delta": 1.0}],
                [2e-3, 1e-3]),
    SweepConfig("CVX", [8, 16, 32, 64],
                [{"L": 1.0, "sigma": 1.0, "delta": None}, {"L": 4.0, "sigma": 1.0, "delta": None}],
                [2e-3, 1e-3]),
    SweepConfig("AVG-NC", [8, 16, 32, 64],
                [{"L": 1.0, "sigma": 1.0, "delta": 1.0}, {"L": 1.0, "sigma": 0.5, "delta": 1.0}],
                [1.1e-3, 1e-3]),
    SweepConfig("IND-NC", [8, 16, 32, 64],
                [{"L": 1.0, "sigma": 1e-2, "delta": 1.0}, {"L": 1.0, "sigma": 1e-1, "delta": 1.0}],
                [6e-4, 5e-4]),
)


def load_configs(path) -> list:
    doc = json.loads(Path(path).read_text())
    items = doc if isinstance(doc, list) else doc.get("sweeps", [doc])
    return [SweepConfig(**it) for it in items]


def _run_seed(base, *parts) -> int:
    key = [int(base) & 0xFFFFFFFF] + [int(p) for p in parts]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)[0] >> 1)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Task:
    family: str
    n: int
    L: float
    sigma: float
    delta: float | None
    eps: float
    solver: str
    hyper: tuple
    seed: int
    budget_multiplier: float


def execute(task: Task) -> dict:
    """Run one sweep cell; never raises, the outcome goes into ``status``."""
    row = {"family": task.family, "n": task.n, "L": task.L, "sigma": task.sigma,
           "delta": task.delta, "eps": task.eps, "solver": task.solver, "seed": task.seed,
           "ifo_to_target": None, "lower_bound": None, "ratio": None}
    try:
        inst, target = make_instance(task.family, task.n, task.L, task.sigma, task.delta, task.eps)
    except HypothesisError as e:
        row["status"] = "skipped: " + str(e).replace(",", ";")
        return row
    lb = inst.metadata.lower_bound_ifo
    row["lower_bound"] = lb
    spec = make_spec(task.solver, inst, seed=task.seed, **dict(task.hyper))
    session = OracleSession(inst, seed=task.seed, store_points=False)
    budget = max(1, int(math.ceil(task.budget_multiplier * lb)))
    try:
        res = run(spec, session, budget, target, record=False)
    except (CertificateViolation, ZeroChainViolation) as e:
        row["status"] = "violation: " + str(e).replace(",", ";")
        return row
    except RunAborted as e:
        row["status"] = "aborted: " + str(e).replace(",", ";")
        return row
    if res.ifo_to_target is None:
        row["status"] = "budget"
        return row
    row["ifo_to_target"] = res.ifo_to_target
    row["ratio"] = res.ifo_to_target / lb
    row["status"] = "ok" if res.ifo_to_target >= lb else "violation: ratio < 1"
    return row


def sweep_tasks(configs) -> list:
    tasks = []
    for ci, cfg in enumerate(configs):
        for si, st in enumerate(cfg.settings):
            for ei, eps in enumerate(cfg.eps):
                for n in cfg.n:
                    for k, solver in enumerate(cfg.solvers):
                        hyper = tuple(sorted(cfg.hyper.get(solver, {}).items()))
                        for r in range(cfg.seeds):
                            tasks.append(Task(
                                cfg.family, int(n), float(st["L"]), float(st["sigma"]),
                                None if st.get("delta") is None else float(st["delta"]),
                                float(eps), solver, hyper,
                                _run_seed(cfg.seed, ci, si, ei, n, k, r),
                                float(cfg.budget_multiplier),
                            ))
    return tasks


def run_sweep(configs, jobs: int = 1) -> list:
    tasks = sweep_tasks(configs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(execute, tasks, chunksize=4))
    else:
        rows = [execute(t) for t in tasks]
    for r in rows:
        if r["status"].startswith("skipped"):
            log.info("skipped %s n=%s: %s", r["family"], r["n"], r["status"])
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in CSV_HEADER])
    return buf.getvalue()


def read_rows(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep_failures(rows) -> list:
    """Rows that break an acceptance property: violations, aborts, ratio < 1."""
    bad = []
    for r in rows:
        st = r["status"]
        if st.startswith("violation") or st.startswith("aborted"):
            bad.append(r)
        elif st == "ok" and int(r["ifo_to_target"]) < int(r["lower_bound"]):
            bad.append(r)
    return bad


# ---------------------------------------------------------------- fitting


def fit_exponent(xs, ys):
    """OLS of log(y) on log(x); returns (slope, intercept, stderr of slope)."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    if len(np.unique(x)) < 4:
        raise ValueError("need at least 4 distinct predictor values")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = len(x) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(math.sqrt(max(cov[0, 0], 0.0)))


def sc_log_factor(inst) -> float:
    """The logarithm multiplying n^(3/4) in the SC chain length."""
    n = inst.n
    alpha = inst.base.params.alpha
    q = inst.base.params.q
    gap = (1 - alpha) * q / 8.0
    # lam sqrt(n) = Delta / gap, so this is log(lam sqrt(n) alpha / (4 eps))
    return math.log(inst.metadata.delta_bound * alpha / (4.0 * gap * inst.metadata.target_epsilon))


def lower_bound_curve(family, predictor, values, *, n=None, L=1.0, sigma=None, delta=None, eps=None):
    """Certified lower bounds along ``n`` or ``eps`` with the rest held fixed."""
    out = []
    for v in values:
        nn, ee = (v, eps) if predictor == "n" else (n, v)
        inst, _ = make_instance(family, nn, L, sigma, delta, ee)
        row = {"x": float(v), "lower_bound": inst.metadata.lower_bound_ifo,
               "T": inst.metadata.progress_threshold, "instance_family": inst.family}
        if family == "SC" and inst.structure == "embed":
            row["log_factor"] = sc_log_factor(inst)
        out.append(row)
    return out


def fit_curve(curve, normalize_log=False):
    xs = [r["x"] for r in curve]
    ys = [r["lower_bound"] / (r["log_factor"] if normalize_log else 1.0) for r in curve]
    slope, icpt, se = fit_exponent(xs, ys)
    return {"slope": slope, "intercept": icpt, "stderr": se,
            "ci95": [slope - 1.96 * se, slope + 1.96 * se]}


def plot_description(title, xlabel, ylabel, series):
    return {"title": title, "x": {"label": xlabel, "scale": "log"},
            "y": {"label": ylabel, "scale": "log"}, "series": series}


# ---------------------------------------------------------------- CLI


def _add_instance_flags(p):
    p.add_argument("--family", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=None, help="sigma, or the radius B for convex families")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--eps", type=float, required=True)


def _out_dir(args):
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_verify(args):
    from hardsum.verify import run_suite

    report = run_suite(seed=args.seed, jobs=args.jobs)
    print(report.text())
    if args.out:
        (_out_dir(args) / "verify.json").write_text(report.to_json())
    return 0 if report.passed else 1


def cmd_make_instance(args):
    try:
        inst, _ = make_instance(args.family, args.n, args.L, args.sigma, args.delta, args.eps)
    except HypothesisError as e:
        print(f"rejected: {e}", file=sys.stderr)
        return 2
    text = json.dumps(inst.to_dict(), indent=2)
    if args.out:
        (_out_dir(args) / "instance.json").write_text(text)
    else:
        print(text)
    return 0


def cmd_run(args):
    try:
        inst, target = make_instance(args.family, args.n, args.L, args.sigma, args.delta, args.eps)
    except HypothesisError as e:
        print(f"rejected: {e}", file=sys.stderr)
        return 2
    lb = inst.metadata.lower_bound_ifo
    budget = max(1, int(math.ceil(args.budget_multiplier * lb)))
    spec = make_spec(args.solver, inst, seed=args.seed)
    keep = inst.d <= 4096
    session = OracleSession(inst, seed=args.seed, store_points=keep)
    status = "ok"
    try:
        res = run(spec, session, budget, target)
    except (CertificateViolation, ZeroChainViolation, RunAborted) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return 1
    summary = {
        "family": inst.family, "n": inst.n, "d": inst.d, "solver": spec.name, "hyper": spec.hyper,
        "seed": spec.seed, "target": target, "lower_bound": lb, "budget": budget,
        "ifo_to_target": res.ifo_to_target, "ifo_used": res.ifo_used,
        "first_certified_failure": next((c.step for c in res.certificate_curve if c.floor_value <= target), None),
    }
    if res.ifo_to_target is None:
        status = "budget"
    elif res.ifo_to_target < lb:
        status = "violation: ratio < 1"
    summary["status"] = status
    if args.out:
        out = _out_dir(args)
        (out / "instance.json").write_text(json.dumps(inst.to_dict(), indent=2))
        with open(out / "trace.jsonl", "w") as fh:
            session.export_trace(fh)
        if keep:
            pts, grads = session.points()
            np.savez_compressed(out / "points.npz", points=np.array(pts), grads=np.array(grads))
        (out / "result.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    return 1 if status.startswith("violation") else 0


def cmd_audit(args):
    src = Path(args.trace)
    data = np.load(src / "points.npz" if src.is_dir() else src)
    report = span_audit(list(data["points"]), list(data["grads"]), tol=args.tol)
    print(json.dumps({"passed": report.passed, "checked": report.checked,
                      "max_residual": report.max_residual,
                      "violations": [[str(a), b] for a, b in report.violations[:20]]}))
    return 0 if report.passed else 1


def _configs_from_args(args):
    if args.config:
        cfgs = load_configs(args.config)
    elif args.family:
        base = {c.family: c for c in DEFAULT_SWEEP}[args.family]
        cfgs = [base]
    else:
        cfgs = list(DEFAULT_SWEEP)
    out = []
    for c in cfgs:
        kw = asdict(c)
        if args.family and not args.config:
            if args.n:
                kw["n"] = [args.n]
            if args.eps:
                kw["eps"] = [args.eps]
        if args.solver:
            kw["solvers"] = [args.solver]
        kw["seed"] = args.seed
        if args.budget_multiplier is not None:
            kw["budget_multiplier"] = args.budget_multiplier
        out.append(SweepConfig(**kw))
    return out


def cmd_sweep(args):
    cfgs = _configs_from_args(args)
    rows = run_sweep(cfgs, jobs=args.jobs)
    text = rows_to_csv(rows)
    out = _out_dir(args)
    (out / "results.csv").write_text(text)
    (out / "results.meta.json").write_text(json.dumps(
        {"csv_schema": CSV_SCHEMA, "configs": [asdict(c) for c in cfgs]}, indent=2))
    (out / "results.plot.json").write_text(json.dumps(plot_description(
        "IFO calls to target vs certified lower bound", "n", "IFO calls",
        [{"name": "lower_bound", "csv": "results.csv", "x": "n", "y": "lower_bound", "group_by": ["family"]},
         {"name": "ifo_to_target", "csv": "results.csv", "x": "n", "y": "ifo_to_target",
          "group_by": ["family", "solver"], "filter": {"status": "ok"}}]), indent=2))
    bad = sweep_failures(rows)
    ok = sum(r["status"] == "ok" for r in rows)
    print(f"{len(rows)} rows, {ok} reached target, {len(bad)} failures -> {out / 'results.csv'}")
    return 1 if bad else 0


def cmd_fit(args):
    out = {}
    if args.results:
        rows = [r for r in read_rows(args.results) if r["status"] == "ok"]
        if args.family:
            rows = [r for r in rows if r["family"] == args.family]
        groups = {}
        for r in rows:
            groups.setdefault(r["solver"], {}).setdefault(float(r[args.predictor]), []).append(
                int(r["ifo_to_target"]))
        fits = {}
        for solver, by_x in sorted(groups.items()):
            xs = sorted(by_x)
            try:
                fits[solver] = dict(zip(("slope", "intercept", "stderr"),
                                        fit_exponent(xs, [np.median(by_x[x]) for x in xs])))
            except ValueError as e:
                fits[solver] = {"error": str(e)}
        out["measured"] = fits
    else:
        values = args.values
        if not values:
            print("fit needs --values (or --results)", file=sys.stderr)
            return 2
        try:
            curve = lower_bound_curve(args.family, args.predictor, values, n=args.n, L=args.L,
                                      sigma=args.sigma, delta=args.delta, eps=args.eps)
            out["curve"] = curve
            out["fit"] = fit_curve(curve)
            if all("log_factor" in r for r in curve):
                out["fit_log_normalized"] = fit_curve(curve, normalize_log=True)
        except (HypothesisError, ValueError) as e:
            print(f"rejected: {e}", file=sys.stderr)
            return 2
    if args.out:
        d = _out_dir(args)
        (d / "fit.json").write_text(json.dumps(out, indent=2))
        (d / "fit.plot.json").write_text(json.dumps(plot_description(
            f"certified lower bound vs {args.predictor}", args.predictor, "IFO calls",
            [{"name": "lower_bound", "json": "fit.json", "path": "curve", "x": "x", "y": "lower_bound"}]),
            indent=2))
    print(json.dumps(out, indent=2))
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="hardsum", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("make-instance", help="emit an instance as JSON")
    _add_instance_flags(p)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_make_instance)

    p = sub.add_parser("run", help="run one solver and write its trace")
    _add_instance_flags(p)
    p.add_argument("--solver", default="gd", choices=SOLVERS + ("katyushax",))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-multiplier", type=float, default=20.0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("audit", help="span audit of a stored run")
    p.add_argument("trace", help="run directory or points.npz")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("sweep", help="run a parameter sweep and write results.csv")
    p.add_argument("--config")
    p.add_argument("--out", default="sweep-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--family")
    p.add_argument("--n", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--solver")
    p.add_argument("--budget-multiplier", type=float, default=None)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("fit", help="log-log fit of lower bounds or measured IFO counts")
    p.add_argument("--family")
    p.add_argument("--predictor", choices=("n", "eps"), default="n")
    p.add_argument("--values", type=float, nargs="*", help="predictor values for the analytic curve")
    p.add_argument("--n", type=int)
    p.add_argument("--L", type=float, default=1.0)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--results", help="results.csv to fit measured IFO counts instead")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
