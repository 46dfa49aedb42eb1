"""Command line entry point: ``critlab <task> [options]``.

Every task writes report.txt (resolved config, results, timings) and its CSV
tables into the output directory.  CSV files carry no timings or paths, so
identical configs and seeds give byte-identical CSVs.  Exit codes: 0 success,
2 bad configuration, 3 failed precondition, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import concentration, conformal, criticality, green3
from .config import (
    TASKS,
    ExperimentConfig,
    get_bool,
    get_float,
    get_int,
    get_list,
    get_str,
    load_config,
    split_list,
)
from .errors import CritlabError, InvalidConfiguration
from .functional import ProblemSpec
from .manifold import (
    DiscreteManifold,
    build_periodic_torus,
    build_radial_sphere,
    bump,
    make_profile,
    parse_profile,
)
from .sobolev import SharpConstants, conformal_constant
from .solver import SolverConfig, continuation_in_q, minimize

log = logging.getLogger("critlab")

DEFAULT_OUT = "critlab_out"


def fmt(x) -> str:
    """12 significant digits for floats, plain text otherwise."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


@dataclass
class TaskOutput:
    lines: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # file name -> (header, rows)
    summary: dict = field(default_factory=dict)

    def add(self, key: str, value) -> None:
        self.lines.append(f"{key}: {fmt(value)}")
        self.summary[key] = value


# ---------------------------------------------------------------- builders


def build_manifold(cfg: ExperimentConfig) -> DiscreteManifold:
    d = cfg.manifold
    kind = d.get("kind", "sphere")
    n = get_int(d, "n", 6)
    if kind == "sphere":
        return build_radial_sphere(n, get_int(d, "N", 4096), get_float(d, "clustering", 2.0))
    if kind == "torus":
        return build_periodic_torus(n, get_float(d, "L", 1.0), get_int(d, "m", 16))
    raise InvalidConfiguration(f"unknown manifold kind {kind!r}")


def _field(M: DiscreteManifold, raw: str) -> np.ndarray:
    try:
        return np.full(M.size, float(raw))
    except ValueError:
        return make_profile(M, raw)


def build_problem(cfg: ExperimentConfig, M: DiscreteManifold) -> ProblemSpec:
    h = _field(M, get_str(cfg.fields, "h", f"const({conformal_constant(M.dim):g})"))
    f = _field(M, get_str(cfg.fields, "f", "const(1)"))
    q = cfg.task.get("q")
    return ProblemSpec(M, h, f, float(q) if q is not None else None)


def solver_config(cfg: ExperimentConfig, **defaults) -> SolverConfig:
    t = cfg.task
    base = SolverConfig(**defaults)
    tol = t.get("tol_residual")
    return SolverConfig(
        tau=get_float(t, "tau", base.tau),
        max_iter=get_int(t, "max_iter", base.max_iter),
        tol_residual=float(tol) if tol is not None else base.tol_residual,
        init=t.get("init", base.init),
        bubble_center=get_int(t, "bubble_center", base.bubble_center),
        bubble_mu=get_float(t, "bubble_mu", base.bubble_mu),
        n_starts=get_int(t, "n_starts", base.n_starts),
        rng_seed=get_int(t, "seed", base.rng_seed),
        newton=get_bool(t, "newton", base.newton),
    )


def _optional_float(d: dict, key: str):
    return get_float(d, key) if key in d else None


def _node_columns(M: DiscreteManifold) -> tuple:
    if M.is_sphere:
        return ["node", "r"], [[i, float(r)] for i, r in enumerate(M.nodes)]
    cols = ["node"] + [f"x{k + 1}" for k in range(M.dim)]
    return cols, [[i, *map(float, x)] for i, x in enumerate(M.nodes)]


def radial_function(raw: str):
    """A constant or a profile descriptor as a function of the polar angle r."""
    try:
        return float(raw)
    except ValueError:
        pass
    name, args = parse_profile(raw)
    if name == "const":
        return float(args[0])
    if name == "cos_poly":
        return lambda r: np.polynomial.polynomial.polyval(np.cos(r), args)
    if name == "bump":
        return lambda r: bump(r, args[0])
    raise InvalidConfiguration(f"profile {name!r} is not available for the S^3 Green problem")


# ---------------------------------------------------------------- tasks


def task_constants(cfg: ExperimentConfig) -> TaskOutput:
    n = get_int(cfg.task, "dim", get_int(cfg.manifold, "n", 6))
    sup_f = get_float(cfg.task, "sup_f", 1.0)
    c = SharpConstants.for_dim(n)
    out = TaskOutput()
    out.add("n", n)
    out.add("omega_n", c.omega_n)
    out.add("K2", c.K2)
    out.add("two_star", c.two_star)
    out.add("sup_f", sup_f)
    out.add("threshold", c.threshold(sup_f))
    out.add("conformal_constant", conformal_constant(n))
    keys = ["n", "omega_n", "K2", "two_star", "sup_f", "threshold", "conformal_constant"]
    out.tables["constants.csv"] = (keys, [[out.summary[k] for k in keys]])
    return out


def task_solve(cfg: ExperimentConfig) -> TaskOutput:
    M = build_manifold(cfg)
    spec = build_problem(cfg, M)
    res = minimize(spec, solver_config(cfg))
    out = TaskOutput()
    out.add("q", spec.q)
    out.add("lambda", res.lam)
    out.add("residual", res.residual)
    out.add("iters", res.iters)
    out.add("status", res.status)
    out.add("start", res.start)
    out.add("sup_u", res.sup_u)
    out.add("peak", res.peak)
    cols, rows = _node_columns(M)
    out.tables["solution.csv"] = (cols + ["u"], [row + [float(u)] for row, u in zip(rows, res.u)])
    return out


def task_classify(cfg: ExperimentConfig) -> TaskOutput:
    M = build_manifold(cfg)
    spec = build_problem(cfg, M)
    rep = criticality.classify(spec, solver_config(cfg, **_classify_defaults()), _optional_float(cfg.task, "tol_class"))
    out = TaskOutput()
    out.lines.append(f"classification: {rep.classification}, margin = {fmt(rep.margin)}")
    out.summary["classification"] = rep.classification
    out.add("lambda", rep.lam)
    out.add("threshold", rep.threshold)
    out.add("margin", rep.margin)
    out.add("tol_class", rep.tol_class)
    out.add("coercive", rep.coercive)
    if rep.prop1_gaps:
        out.add("min_prop1_gap", rep.min_prop1_gap)
        r = M.distances_from(0)
        out.tables["prop1_gaps.csv"] = (["node", "r", "gap"], [[p, float(r[p]), g] for p, g in rep.prop1_gaps])
    return out


def _classify_defaults() -> dict:
    d = criticality.default_classify_config()
    return {"init": d.init, "n_starts": d.n_starts, "bubble_mu": d.bubble_mu, "max_iter": d.max_iter}


def task_find_critical(cfg: ExperimentConfig) -> TaskOutput:
    M = build_manifold(cfg)
    spec = build_problem(cfg, M)
    t = cfg.task
    history = []
    t0 = criticality.find_critical_offset(
        spec,
        t_max=get_float(t, "t_max"),
        tol_t=get_float(t, "tol_t", 0.01),
        tol_class=_optional_float(t, "tol_class"),
        cfg=solver_config(cfg, **_classify_defaults()),
        history=history,
    )
    out = TaskOutput()
    out.add("t0", t0)
    out.add("probes", len(history))
    out.add("monotone", criticality.predicate_is_monotone(history))
    out.tables["bisection.csv"] = (
        ["step", "t", "classification", "lambda"],
        [[i, tt, c, lam] for i, (tt, c, lam) in enumerate(history)],
    )
    return out


def task_aubin(cfg: ExperimentConfig) -> TaskOutput:
    M = build_manifold(cfg)
    spec = build_problem(cfg, M)
    t = cfg.task
    P = get_int(t, "P", int(np.argmax(spec.f)))
    ks = get_list(t, "k_list", [64 * 2**j for j in range(7)], cast=int)
    series = criticality.aubin_slope(
        M, spec.h, spec.f, P, ks, get_float(t, "delta", 0.5), get_int(t, "terms", 5)
    )
    out = TaskOutput()
    out.add("P", P)
    out.add("fitted_slope", series.fitted_slope)
    out.add("expected_slope", series.expected_slope)
    out.add("fit_residual", series.fit_residual)
    out.add("terms", series.terms)
    out.tables["aubin.csv"] = (
        ["k", "J_value", "y_k"],
        [[k, J, y] for k, J, y in zip(series.k_list, series.J_values, series.y_values)],
    )
    return out


def task_concentrate(cfg: ExperimentConfig) -> TaskOutput:
    M = build_manifold(cfg)
    t = cfg.task
    mode = t.get("mode", "continuation")
    delta = get_float(t, "delta", 0.5)
    R = get_float(t, "R", 5.0)
    nu = get_float(t, "nu", 0.1)
    if mode == "synthetic":
        mus = get_list(t, "mu_list")
        raw = t.get("offsets", "0")
        if raw.strip() == "sqrt":
            offsets = [math.sqrt(m) for m in mus]
        else:
            offsets = [float(v) for v in split_list(raw)]
            if len(offsets) == 1:
                offsets = offsets * len(mus)
        fam = concentration.synthetic_family(M, mus, offsets)
        tr = concentration.synthetic_trace(fam, delta, R, nu)
    elif mode == "continuation":
        spec = build_problem(cfg, M)
        q_list = get_list(t, "q_list")
        trigger = _optional_float(t, "refine_trigger")
        results = continuation_in_q(spec, q_list, solver_config(cfg), refine_trigger=trigger)
        x0 = get_int(t, "x0", int(np.argmax(spec.f)))
        tr = concentration.trace(results, x0, delta, R, nu)
    else:
        raise InvalidConfiguration(f"unknown concentrate mode {mode!r}")
    out = TaskOutput()
    out.add("mode", mode)
    out.add("samples", len(tr.samples))
    last = tr.samples[-1]
    for key in ("sup_u", "mu", "mass_in_ball", "bubble_err", "speed_ratio"):
        out.add(f"last_{key}", getattr(last, key))
    rows = []
    for s in tr.samples:
        row = s.row()
        rows.append([row[c] for c in concentration.TRACE_COLUMNS])
    out.tables["trace.csv"] = (list(concentration.TRACE_COLUMNS), rows)
    return out


def task_green_mass(cfg: ExperimentConfig) -> TaskOutput:
    t = cfg.task
    raw = t.get("h", cfg.fields.get("h", "0.75"))
    h = radial_function(raw)
    N = get_int(t, "N", 4096)
    out = TaskOutput()
    if get_bool(t, "find_shift", False):
        lo, hi = get_list(t, "B_range", (-1.0, 2.0))
        B = green3.find_mass_zero_offset(h, (lo, hi), get_float(t, "tol", 1e-8), N)
        out.add("critical_shift", B)
        h = h + B if isinstance(h, float) else (lambda r, g=h, b=B: g(r) + b)
    prof = green3.green_radial(h, N)
    out.add("mass", prof.mass)
    G = prof.G
    out.tables["green.csv"] = (
        ["r", "w", "G"],
        [[float(r), float(w), float(g) if np.isfinite(g) else "inf"] for r, w, g in zip(prof.r, prof.w, G)],
    )
    return out


def task_conformal_check(cfg: ExperimentConfig) -> TaskOutput:
    t = cfg.task
    ladder = conformal.refinement_ladder(
        get_list(t, "N_list", (512, 1024, 2048, 4096), cast=int),
        n=get_int(t, "n", 3),
        h=get_float(t, "h", 0.75),
        u_coef=get_float(t, "u_coef", 0.3),
        w_coef=get_float(t, "w_coef", 0.2),
    )
    out = TaskOutput()
    for (N0, r0), (N1, r1) in zip(ladder, ladder[1:]):
        out.lines.append(f"ratio {N0}->{N1}: {fmt(r0 / r1 if r1 > 0 else float('inf'))}")
    out.add("finest_residual", ladder[-1][1])
    out.tables["conformal.csv"] = (["N", "residual"], [[N, r] for N, r in ladder])
    return out


RUNNERS = {
    "constants": task_constants,
    "solve": task_solve,
    "classify": task_classify,
    "find-critical": task_find_critical,
    "aubin": task_aubin,
    "concentrate": task_concentrate,
    "green-mass": task_green_mass,
    "conformal-check": task_conformal_check,
}


# ---------------------------------------------------------------- output


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_report(path: Path, cfg: ExperimentConfig, out: TaskOutput | None, elapsed: float, error=None) -> None:
    lines = ["# critlab report", f"task: {cfg.task_name}", "", "## config", cfg.echo(), "## results"]
    if out is not None:
        lines.extend(out.lines)
    if error is not None:
        lines.append(f"error: {type(error).__name__}: {error}")
    lines += ["", "## timings", f"elapsed_seconds: {elapsed:.3f}", ""]
    path.write_text("\n".join(lines))


def execute(cfg: ExperimentConfig, out_dir: Path) -> TaskOutput:
    """Run the configured task and write its artifacts into out_dir."""
    cfg.validate()
    out_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        out = RUNNERS[cfg.task_name](cfg)
    except CritlabError as exc:
        write_report(out_dir / "report.txt", cfg, None, time.perf_counter() - start, exc)
        raise
    elapsed = time.perf_counter() - start
    if get_bool(cfg.output, "csv", True):
        for name, (header, rows) in out.tables.items():
            write_csv(out_dir / name, header, rows)
    write_report(out_dir / "report.txt", cfg, out, elapsed)
    return out


def _sweep_item(args):
    index, value, cfg, item_dir = args
    try:
        out = execute(cfg, Path(item_dir))
        return index, value, "ok", 0, out.summary, ""
    except CritlabError as exc:
        return index, value, "failed", exc.exit_code, {}, str(exc)
    except Exception as exc:  # numeric blow-ups inside numpy/scipy
        return index, value, "failed", 4, {}, f"{type(exc).__name__}: {exc}"


def sweep(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> int:
    """Run the task once per sweep value; returns the exit code."""
    key = cfg.sweep.get("key")
    if not key:
        raise InvalidConfiguration("[sweep] key is missing")
    values = split_list(cfg.sweep.get("values", ""))
    if not values:
        raise InvalidConfiguration("[sweep] values is empty")
    cfg.validate()
    out_dir.mkdir(parents=True, exist_ok=True)
    items = []
    for i, v in enumerate(values):
        item = cfg.copy()
        item.sweep = {}
        item.set(key, v)
        items.append((i, v, item, str(out_dir / f"item_{i:03d}")))
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_item, items))
    else:
        results = [_sweep_item(it) for it in items]
    results.sort(key=lambda r: r[0])
    metric_keys = []
    for r in results:
        for k in r[4]:
            if k not in metric_keys:
                metric_keys.append(k)
    header = ["item", key, "item_status", "exit_code"] + metric_keys + ["message"]
    rows = [[i, v, st, code] + [r4.get(k, "") for k in metric_keys] + [msg] for i, v, st, code, r4, msg in results]
    write_csv(out_dir / "summary.csv", header, rows)
    failed = [r for r in results if r[2] != "ok"]
    for r in failed:
        log.error("sweep item %d (%s = %s) failed: %s", r[0], key, r[1], r[5])
    if failed and len(failed) == len(results):
        return failed[0][3]
    return 0


# ---------------------------------------------------------------- argument parsing


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting values given earlier
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="experiment config file (INI)")
    common.add_argument("--out", default=d(None), help=f"output directory (default: [output] directory or {DEFAULT_OUT})")
    common.add_argument("--jobs", type=int, default=d(None), help="parallel sweep items")
    common.add_argument("--seed", type=int, default=d(None), help="random seed for multistart")
    common.add_argument(
        "--set", action="append", default=d([]), metavar="SECTION.KEY=VALUE", help="override one config entry"
    )
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(
        prog="critlab", description=__doc__.splitlines()[0], parents=[_global_flags(suppress=False)]
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("constants", parents=[common], help="sharp Sobolev constants")
    p.add_argument("--dim", type=int)
    helps = {
        "solve": "minimize the quotient at exponent q",
        "classify": "subcritical or weakly critical at the critical exponent",
        "find-critical": "bisect h - t for the critical offset",
        "aubin": "1/k slope of the Aubin test functions",
        "concentrate": "concentration trace (synthetic family or q continuation)",
        "conformal-check": "covariance residual under grid refinement on S^3",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    p = sub.add_parser("green-mass", parents=[common], help="mass of the Green function on S^3")
    p.add_argument("--h", help="constant or radial profile descriptor")
    p.add_argument("--find-critical-shift", action="store_true")
    sub.add_parser("run", parents=[common], help="run the task named in the config")
    sub.add_parser("sweep", parents=[common], help="run the task for each [sweep] value")
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    for item in args.set:
        if "=" not in item:
            raise InvalidConfiguration(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    if args.command in TASKS:
        cfg.task["name"] = args.command
    if getattr(args, "dim", None) is not None:
        cfg.task["dim"] = str(args.dim)
    if getattr(args, "h", None) is not None:
        cfg.task["h"] = args.h
    if getattr(args, "find_critical_shift", False):
        cfg.task["find_shift"] = "yes"
    if args.seed is not None:
        cfg.task["seed"] = str(args.seed)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        out_dir = Path(args.out or cfg.output.get("directory", DEFAULT_OUT))
        if args.command == "sweep" or (args.command == "run" and cfg.sweep):
            jobs = args.jobs if args.jobs is not None else get_int(cfg.output, "jobs", 1)
            return sweep(cfg, out_dir, max(1, jobs))
        out = execute(cfg, out_dir)
    except CritlabError as exc:
        print(f"critlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"critlab: numeric failure: {exc}", file=sys.stderr)
        return 4
    for line in out.lines:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
