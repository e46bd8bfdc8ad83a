"""Experiment runner: verify-space, verify-problem, solve, sweep, print-config.

Configuration is one flat key-value INI file with a single ``[experiment]``
section and dotted keys (``problem.id = P2``).  Every key is also a command
line flag (``--problem.id P2``).  Some keys take small arithmetic
expressions in the derived quantities ``d, m, mu, s, s0, lam, tau, N`` and,
once calibrated, ``delta``.
"""

from __future__ import annotations

import argparse
import configparser
import itertools
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import artifacts
from .diagnostics import (
    InsufficientRows,
    Tolerances,
    check_double_exponential,
    check_lemma1,
    check_lemma2,
    check_lemma3_domain,
    check_lemma4,
    check_lemma5_and_cauchy,
)
from .graded_space import GradedElement, random_element, scaled_to, seminorm, space_invariant_suite
from .problem_api import SamplerConfig, StructuralViolation, TameProblem, defect, estimate_condition
from .problems import GOLDEN_MEAN, DivisorFloorViolated, LambdaOutOfRange, make_problem
from .solver import (
    DegenerateExponentWarning,
    DerivedExponents,
    ScheduleParams,
    SolveConfig,
    SolveResult,
    calibrate_delta,
    derive_exponents,
    solve,
)

log = logging.getLogger("nashmoser")

SECTION = "experiment"

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "problem.id": "P2",
    "problem.N": 128,
    "problem.epsilon": 1e-3,
    "problem.alpha": "golden",
    "problem.divisor_floor": 1e-6,
    "schedule.lambda": "",
    "schedule.tau": "",
    "solver.residual_tol": 1e-10,
    "solver.max_iter": 30,
    "solver.neumann_tol": 1e-12,
    "solver.neumann_max_terms": 200,
    "solver.delta": "auto",
    "solver.delta_safety": 0.9,
    "solver.allow_outside": False,
    "y.seed": 1,
    "y.amplitude": "delta/1000",
    "y.amplitude_index": "s0",
    "y.decay": "s0+d",
    "y.band": "",
    "diagnostics.checks": "lemma1,lemma2,double_exp,lemma3",
    "diagnostics.n_grid": "d, 2*d+1, s0",
    "diagnostics.a_grid": "mu, mu+d+m, mu+2*(d+m)",
    "diagnostics.b": "mu-d-m",
    "diagnostics.growth_slope": 0.05,
    "diagnostics.decay_slack": 0.25,
    "diagnostics.theorem_trend": 0.2,
    "diagnostics.lemma4_growth": 10.0,
    "sampler.samples": 200,
    "sampler.seed": 0,
    "sampler.n_grid": "0, 1, 2, 4, 8",
    "sampler.decay": 3.0,
    "sampler.x_norm": 0.45,
    "space.N": 128,
    "space.samples": 1000,
    "space.grid": "0, 0.5, 1, 2, 4, 8",
    "space.rtol": 1e-12,
    "space.weight_power": 1.0,
    "sweep.epsilon": "0, 1e-4, 1e-3",
    "sweep.amplitude": "delta/1000",
    "sweep.tau": "",
    "sweep.workers": 2,
    "sweep.delta_bisection": False,
    "output.dir": "out",
}

# per-problem defaults, applied under explicit file/flag values
PRESETS: dict[str, dict[str, object]] = {
    "P0": {"y.band": "3", "y.decay": "2", "y.amplitude": "0.5", "solver.delta": "analytic",
           "diagnostics.checks": "lemma1,lemma2,lemma3"},
    "P1": {"problem.N": 32, "problem.epsilon": 0.1, "y.decay": "6", "y.amplitude": "0.5",
           "solver.delta": "analytic", "diagnostics.checks": "lemma1,lemma2,lemma3"},
    "P2": {},
    "P3": {"problem.N": 64},
}

EXIT_OK, EXIT_FAIL = 0, 1


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def _coerce(key: str, raw) -> object:
    default = DEFAULTS[key]
    if isinstance(raw, str):
        raw = raw.strip()
    if isinstance(default, bool):
        if isinstance(raw, bool):
            return raw
        return str(raw).lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return str(raw)


def read_config_file(path: str | Path) -> dict[str, object]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path):
        raise FileNotFoundError(path)
    if not cp.has_section(SECTION):
        raise ValueError(f"config file {path} has no [{SECTION}] section")
    out = {}
    for key, val in cp.items(SECTION):
        if key not in DEFAULTS:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = val
    return out


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> dict[str, object]:
    """defaults < problem preset < config file < command-line overrides."""
    explicit = {**(file_values or {}), **(overrides or {})}
    pid = str(explicit.get("problem.id", DEFAULTS["problem.id"])).upper()
    merged = {**DEFAULTS, **PRESETS.get(pid, {}), **explicit}
    cfg = {k: _coerce(k, v) for k, v in merged.items()}
    cfg["problem.id"] = str(cfg["problem.id"]).upper()
    if cfg["seed"] < 0:
        raise ValueError("seed must be nonnegative")
    return cfg


def format_config(cfg: dict) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp[SECTION] = {k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in cfg.items()}
    buf = __import__("io").StringIO()
    cp.write(buf)
    return buf.getvalue()


def evaluate(expr: str, ns: dict) -> float:
    """Evaluate an arithmetic expression over the derived-quantity namespace."""
    try:
        return float(eval(expr, {"__builtins__": {}}, dict(ns)))  # noqa: S307 - local config only
    except NameError as exc:
        raise ValueError(f"cannot evaluate {expr!r}: {exc}") from None


def evaluate_list(text: str, ns: dict) -> list[float]:
    return [evaluate(part, ns) for part in text.split(",") if part.strip()]


def evaluate_indices(text: str, ns: dict) -> list[float]:
    """Like :func:`evaluate_list`, rejecting negative seminorm indices."""
    out = evaluate_list(text, ns)
    if any(v < 0 for v in out):
        raise ValueError(f"seminorm indices must be >= 0, got {text!r} -> {out}")
    return out


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def alpha_value(cfg: dict) -> float:
    a = str(cfg["problem.alpha"]).strip().lower()
    if a in ("golden", "golden_mean"):
        return GOLDEN_MEAN
    if "/" in a:
        num, den = a.split("/")
        return float(num) / float(den)
    return float(a)


def build_problem(cfg: dict) -> TameProblem:
    pid = cfg["problem.id"]
    kw = {}
    if pid in ("P2", "P3"):
        kw["floor"] = cfg["problem.divisor_floor"]
    return make_problem(pid, cfg["problem.N"], cfg["problem.epsilon"], alpha_value(cfg), **kw)


def build_schedule(cfg: dict, problem: TameProblem) -> tuple[ScheduleParams, DerivedExponents]:
    tau = str(cfg["schedule.tau"]).strip()
    lam = str(cfg["schedule.lambda"]).strip()
    if lam:
        # re-declares the problem's loss exponent
        problem.constants = replace(problem.constants, lam=float(lam))
    params = ScheduleParams(lam=problem.constants.lam, tau=float(tau) if tau else None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateExponentWarning)
        exps = derive_exponents(problem.constants, params)
    return params, exps


def namespace(problem: TameProblem, exps: DerivedExponents, delta: float | None = None) -> dict:
    ns = {"d": exps.d, "m": exps.m, "mu": exps.mu, "s": exps.s, "s0": exps.s0, "lam": exps.lam,
          "tau": exps.tau, "N": problem.N, "l": problem.constants.l}
    if delta is not None:
        ns["delta"] = delta
    return ns


def y_direction(cfg: dict, problem: TameProblem, exps: DerivedExponents) -> GradedElement:
    ns = namespace(problem, exps)
    band = str(cfg["y.band"]).strip()
    rng = np.random.default_rng([cfg["seed"], cfg["y.seed"]])
    return random_element(problem.N, rng, decay=evaluate(str(cfg["y.decay"]), ns), real=True,
                          mean_zero=problem.mean_zero, band=int(band) if band else None)


def solve_config(cfg: dict, problem: TameProblem, exps: DerivedExponents) -> SolveConfig:
    ns = namespace(problem, exps)
    return SolveConfig(residual_tol=cfg["solver.residual_tol"], max_iter=cfg["solver.max_iter"],
                       neumann_tol=cfg["solver.neumann_tol"], neumann_max_terms=cfg["solver.neumann_max_terms"],
                       n_grid=tuple(evaluate_indices(cfg["diagnostics.n_grid"], ns)),
                       allow_outside=cfg["solver.allow_outside"])


def resolve_delta(cfg: dict, problem, params, exps, direction, scfg) -> tuple[float, str]:
    mode = str(cfg["solver.delta"]).strip().lower()
    if mode == "analytic":
        return exps.delta, "analytic"
    if mode == "auto":
        return calibrate_delta(problem, direction, scfg, params, safety=cfg["solver.delta_safety"]), "bisection"
    return float(mode), "config"


def build_target(cfg: dict, problem, exps, direction, delta: float, amplitude_expr: str | None = None) -> GradedElement:
    ns = namespace(problem, exps, delta)
    amp = evaluate(amplitude_expr or str(cfg["y.amplitude"]), ns)
    idx = str(cfg["y.amplitude_index"]).strip()
    (index,) = evaluate_indices(idx, ns)
    if amp == 0:
        return GradedElement.zeros(problem.N)
    return scaled_to(direction, index, amp)


def tolerances(cfg: dict) -> Tolerances:
    return Tolerances(growth_slope=cfg["diagnostics.growth_slope"], decay_slack=cfg["diagnostics.decay_slack"],
                      theorem_trend=cfg["diagnostics.theorem_trend"], lemma4_growth=cfg["diagnostics.lemma4_growth"])


def run_diagnostics(cfg: dict, result: SolveResult, problem, exps, delta: float) -> list[dict]:
    """Configured trace diagnostics as a list of report dicts (with ``status``)."""
    ns = namespace(problem, exps, delta)
    tol = tolerances(cfg)
    checks = [c.strip() for c in str(cfg["diagnostics.checks"]).split(",") if c.strip()]
    out = []

    def run(name, fn):
        try:
            rep = fn()
            out.append({"check": name, "status": "pass" if rep.passed else "fail", **rep.to_json()})
        except (InsufficientRows, ValueError, KeyError) as exc:
            out.append({"check": name, "status": "skipped", "reason": str(exc)})

    trace = result.trace
    for name in checks:
        if name == "lemma1":
            for n in trace.n_grid:
                run(f"lemma1[n={n:g}]", lambda n=n: check_lemma1(trace, n, exps, tol))
        elif name == "lemma2":
            run("lemma2", lambda: check_lemma2(trace, exps, tol))
        elif name == "double_exp":
            run("double_exp", lambda: check_double_exponential(trace, exps.tau, tol))
        elif name == "lemma3":
            run("lemma3", lambda: check_lemma3_domain([trace], exps.d, delta * (1 + 1e-12)))
        elif name == "lemma4":
            a_grid = evaluate_list(cfg["diagnostics.a_grid"], ns)
            run("lemma4", lambda: check_lemma4(trace, a_grid, exps, tol))
        elif name == "lemma5":
            b = evaluate(cfg["diagnostics.b"], ns)
            run("lemma5", lambda: check_lemma5_and_cauchy(trace, (exps.d,), b, tol))
        else:
            raise ValueError(f"unknown diagnostic {name!r}")
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _out(cfg: dict) -> Path:
    p = Path(cfg["output.dir"])
    p.mkdir(parents=True, exist_ok=True)
    return p


def _sidecar(out: Path, command: str, chash: str, started: float, status: int) -> None:
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {command} config_hash={chash} exit={status} "
                 f"elapsed={time.time() - started:.3f}s\n")


def cmd_verify_space(cfg: dict) -> int:
    chash = artifacts.config_hash(cfg)
    out = _out(cfg)
    grid = [float(g) for g in str(cfg["space.grid"]).split(",")]
    rep = space_invariant_suite(N=cfg["space.N"], samples=cfg["space.samples"], seed=cfg["seed"], grid=grid,
                                rtol=cfg["space.rtol"], weight_power=cfg["space.weight_power"])
    artifacts.write_json(out / "reports" / "verify_space.json", rep, chash)
    if rep["passed"]:
        print(f"verify-space: PASS ({sum(rep['checks'].values())} checks)")
        return EXIT_OK
    f = rep["first_failure"]
    print(f"verify-space: FAIL {f['check']} sample={f['sample']} "
          f"{ {k: v for k, v in f.items() if k in ('k', 'l', 'n', 'ratio', 'theta')} }")
    return EXIT_FAIL


def sampler_config(cfg: dict) -> SamplerConfig:
    return SamplerConfig(samples=cfg["sampler.samples"], seed=cfg["sampler.seed"],
                         n_grid=tuple(float(v) for v in str(cfg["sampler.n_grid"]).split(",")),
                         decay=cfg["sampler.decay"], x_norm=cfg["sampler.x_norm"])


def defect_at_zero(problem: TameProblem, scfg: SamplerConfig) -> float:
    """Largest ``|defect(0, y)|_d / |y|_d`` over the sample suite's y."""
    rng = np.random.default_rng([scfg.seed, 99])
    zero = GradedElement.zeros(problem.N)
    d = problem.constants.d
    worst = 0.0
    for _ in range(scfg.samples):
        y = random_element(problem.N, rng, decay=scfg.decay, mean_zero=problem.mean_zero)
        worst = max(worst, seminorm(defect(problem, zero, y), d) / seminorm(y, d))
    return worst


def verify_problem(cfg: dict) -> tuple[int, dict]:
    try:
        problem = build_problem(cfg)
    except (DivisorFloorViolated, LambdaOutOfRange) as exc:
        return EXIT_FAIL, {"passed": False, "error": str(exc)}
    scfg = sampler_config(cfg)
    reports, failed = {}, []
    for cid in range(1, 8):
        try:
            rep = estimate_condition(problem, cid, scfg)
        except StructuralViolation as exc:
            failed.append(cid)
            reports[cid] = {"condition_id": cid, "error": str(exc)}
            continue
        reports[cid] = rep.to_json()
        if not math.isfinite(rep.estimated_constant):
            failed.append(cid)
    d0 = defect_at_zero(problem, scfg)
    summary = {"problem": problem.describe(), "constants": {str(c): r.get("estimated_constant") for c, r in reports.items()},
               "defect_at_zero": d0, "failed_conditions": failed,
               "passed": not failed and d0 <= 1e-10}
    if hasattr(problem, "lambda_hat"):
        summary["lambda_hat"] = problem.lambda_hat
    m_hat = reports.get(7, {}).get("extra", {}).get("m_hat")
    if m_hat is not None:
        summary["m_hat"] = m_hat
    summary["reports"] = reports
    return (EXIT_OK if summary["passed"] else EXIT_FAIL), summary


def cmd_verify_problem(cfg: dict) -> int:
    chash = artifacts.config_hash(cfg)
    out = _out(cfg)
    code, summary = verify_problem(cfg)
    for cid, rep in summary.get("reports", {}).items():
        artifacts.write_json(out / "reports" / f"condition_{cid}.json", rep, chash)
    artifacts.write_json(out / "reports" / "verify_problem.json",
                         {k: v for k, v in summary.items() if k != "reports"}, chash)
    if "error" in summary:
        print(f"verify-problem: FAIL {summary['error']}")
    elif code == EXIT_OK:
        consts = ", ".join(f"C{c}={v:.4g}" for c, v in summary["constants"].items())
        print(f"verify-problem: PASS {consts}")
    else:
        why = f"condition(s) {summary['failed_conditions']}" if summary["failed_conditions"] else \
            f"defect at zero {summary['defect_at_zero']:.3e}"
        print(f"verify-problem: FAIL {why}")
    return code


def run_solve(cfg: dict, with_diagnostics: bool = True) -> dict:
    """Build, calibrate, solve and diagnose one configuration."""
    problem = build_problem(cfg)
    params, exps = build_schedule(cfg, problem)
    scfg = solve_config(cfg, problem, exps)
    direction = y_direction(cfg, problem, exps)
    delta, delta_source = resolve_delta(cfg, problem, params, exps, direction, scfg)
    y = build_target(cfg, problem, exps, direction, delta)
    result = solve(problem, y, replace(scfg, delta=delta), params, exps)
    diags = run_diagnostics(cfg, result, problem, exps, delta) if with_diagnostics else []
    return {"problem": problem, "exps": exps, "params": params, "y": y, "delta": delta,
            "delta_source": delta_source, "result": result, "diagnostics": diags}


def cmd_solve(cfg: dict) -> int:
    chash = artifacts.config_hash(cfg)
    out = _out(cfg)
    run = run_solve(cfg)
    result, exps = run["result"], run["exps"]
    trace = result.trace
    artifacts.write_csv(out / "trace.csv", trace.columns(), trace.rows, chash, artifacts.TRACE_CSV_VERSION)
    diag_fail = [d["check"] for d in run["diagnostics"] if d["status"] == "fail"]
    summary = {
        **result.summary(),
        "problem": run["problem"].describe(),
        "delta": run["delta"], "delta_source": run["delta_source"],
        "y_norms": trace.y_norms,
        "psi_d": seminorm(result.solution, exps.d),
        "diagnostics_failed": diag_fail,
    }
    artifacts.write_json(out / "summary.json", summary, chash)
    artifacts.write_json(out / "reports" / "diagnostics.json", {"diagnostics": run["diagnostics"]}, chash)
    artifacts.write_csv(out / "diagnostics.csv", ["check", "quantity", "predicted", "measured", "pass", "status"],
                        [{**d, "pass": d.get("pass", "")} for d in run["diagnostics"]], chash, "1")
    if not result.ok:
        print(f"solve: FAIL {result.status}: {result.message}")
        return EXIT_FAIL
    if diag_fail:
        print(f"solve: FAIL diagnostics {', '.join(diag_fail)}")
        return EXIT_FAIL
    print(f"solve: OK {result.iterations} iterations, |z|_d = {result.final_residual:.3e}")
    return EXIT_OK


SWEEP_COLUMNS = ["epsilon", "amplitude", "tau", "status", "iterations", "final_residual", "y_s0", "psi_d",
                 "mu", "mu_hat", "C_hat", "delta", "delta_source"]


def _sweep_one(cfg: dict) -> dict:
    row = {"epsilon": cfg["problem.epsilon"], "amplitude": cfg["y.amplitude"], "tau": cfg["schedule.tau"] or "default"}
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            run = run_solve(cfg, with_diagnostics=False)
    except Exception as exc:  # per-row failure, the sweep goes on
        return {**row, "status": f"error: {exc}"}
    res, exps = run["result"], run["exps"]
    mu_hat = math.nan
    try:
        mu_hat = check_lemma2(res.trace, exps).measured
    except (InsufficientRows, ValueError):
        pass
    y_s0 = seminorm(run["y"], exps.s0)
    psi_d = seminorm(res.solution, exps.d)
    return {**row, "status": res.status, "iterations": res.iterations, "final_residual": res.final_residual,
            "y_s0": y_s0, "psi_d": psi_d, "mu": exps.mu, "mu_hat": mu_hat,
            "C_hat": psi_d / y_s0 if y_s0 > 0 else math.nan,
            "delta": run["delta"], "delta_source": run["delta_source"]}


def sweep_configs(cfg: dict) -> list[dict]:
    eps = [float(v) for v in str(cfg["sweep.epsilon"]).split(",") if v.strip()] or [cfg["problem.epsilon"]]
    amps = [v.strip() for v in str(cfg["sweep.amplitude"]).split(",") if v.strip()] or [cfg["y.amplitude"]]
    taus = [v.strip() for v in str(cfg["sweep.tau"]).split(",") if v.strip()] or [cfg["schedule.tau"]]
    out = []
    for e, a, t in itertools.product(eps, amps, taus):
        c = {**cfg, "problem.epsilon": e, "y.amplitude": a, "schedule.tau": t}
        if cfg["sweep.delta_bisection"]:
            c["solver.delta"] = "auto"
        out.append(c)
    return out


def run_sweep(cfg: dict) -> list[dict]:
    configs = sweep_configs(cfg)
    workers = max(1, int(cfg["sweep.workers"]))
    if workers == 1 or len(configs) == 1:
        return [_sweep_one(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves grid order regardless of completion order
        return list(pool.map(_sweep_one, configs))


def cmd_sweep(cfg: dict) -> int:
    chash = artifacts.config_hash(cfg)
    out = _out(cfg)
    rows = run_sweep(cfg)
    artifacts.write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows, chash, artifacts.SWEEP_CSV_VERSION)
    ok = sum(1 for r in rows if r["status"] == "converged")
    print(f"sweep: {len(rows)} runs, {ok} converged")
    return EXIT_OK


def cmd_print_config(cfg: dict) -> int:
    sys.stdout.write(format_config(cfg))
    return EXIT_OK


COMMANDS = {
    "verify-space": cmd_verify_space,
    "verify-problem": cmd_verify_problem,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "print-config": cmd_print_config,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashmoser", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file with an [experiment] section")
        for key, default in DEFAULTS.items():
            sp.add_argument(f"--{key}", dest=key, default=None, metavar=type(default).__name__.upper())
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k: v for k, v in vars(args).items() if k in DEFAULTS and v is not None}
    cfg = resolve_config(file_values, overrides)
    started = time.time()
    code = COMMANDS[args.command](cfg)
    if args.command != "print-config":
        _sidecar(Path(cfg["output.dir"]), args.command, artifacts.config_hash(cfg), started, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
