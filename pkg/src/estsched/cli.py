"""Experiment runner: config parsing, scenario presets, CSV and JSON output.

A config is a flat YAML mapping.  List values on sweepable keys define a
cross-product grid; every policy in ``policies`` is evaluated at every grid
point.  ``verify`` runs the simulator and the analytic evaluator and checks
the performance inequalities; the exit status is 0 only if all of them hold.

    estsched verify consistency --out results/consistency
    estsched analyze my_sweep.yaml --out results/sweep
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import soap
from .dist import (BoundedPareto, Deterministic, Exponential, FixedMultiplier,
                   Hyperexponential, JointSizeModel, Perfect, TwoPointMultiplier, Uniform,
                   UniformMultiplier)
from .policy import Policy
from .sim import ConfigError, InstabilityError, SimConfig, run

SCHEMA = "estsched.summary/1"

CSV_COLUMNS = [
    "scenario", "point", "policy", "lambda", "rho", "beta", "alpha", "p_low",
    "size", "size_params", "estimate", "jobs", "warmup", "replications", "seed",
    "sim_mean_T", "ci", "sim_mean_wait", "sim_mean_res", "analytic_T",
    "bound_kind", "bound_value", "ratio_to_SRPT",
]

SIZE_PARAMS = {
    "exponential": ("size_rate",),
    "bounded_pareto": ("size_shape", "size_low", "size_high"),
    "uniform": ("size_low", "size_high"),
    "deterministic": ("size_value",),
    "hyperexponential": ("size_weights", "size_rates"),
}
SWEEP_KEYS = ("lambda", "rho", "beta", "alpha", "p_low",
              "size_rate", "size_shape", "size_low", "size_high", "size_value")
SCALAR_KEYS = ("scenario", "mode", "size", "estimate", "jobs", "warmup", "replications",
               "seed", "workers", "out", "trend", "queue_cap")
LIST_KEYS = ("policies", "work_thresholds", "size_weights", "size_rates")
KNOWN_KEYS = set(SWEEP_KEYS) | set(SCALAR_KEYS) | set(LIST_KEYS)
TRENDS = ("none", "consistency", "srpt-e-blowup", "ub-pathology")

DEFAULTS = {
    "scenario": "custom", "mode": "both", "size": "exponential", "size_rate": 1.0,
    "estimate": "perfect", "policies": ["SRPT"], "jobs": 200_000, "warmup": None,
    "replications": 10, "seed": 1, "workers": 1, "out": None, "trend": "none",
    "work_thresholds": [], "queue_cap": 10**7,
}


@dataclass
class GridPoint:
    index: int
    values: dict
    lam: float
    model: JointSizeModel

    @property
    def rho(self) -> float:
        return self.lam * self.model.mean_size()


@dataclass
class ExperimentSpec:
    scenario: str
    mode: str
    policies: list
    points: list
    jobs: int
    warmup: Optional[int]
    replications: int
    seed: int
    workers: int
    out: Optional[str]
    trend: str
    work_thresholds: tuple
    queue_cap: int
    raw: dict = field(default_factory=dict)

    def sim_config(self, point: GridPoint, policy: Policy) -> SimConfig:
        return SimConfig(point.lam, point.model, policy, jobs_per_replication=self.jobs,
                         warmup_jobs=self.warmup, replications=self.replications,
                         base_seed=self.seed, work_thresholds=self.work_thresholds,
                         queue_cap=self.queue_cap)


class SpecError(ConfigError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


# --------------------------------------------------------------------------
# parsing


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _build_size(name, vals):
    if name == "exponential":
        return Exponential(float(vals["size_rate"]))
    if name == "bounded_pareto":
        return BoundedPareto(float(vals["size_shape"]), float(vals["size_low"]),
                             float(vals["size_high"]))
    if name == "uniform":
        return Uniform(float(vals["size_low"]), float(vals["size_high"]))
    if name == "deterministic":
        return Deterministic(float(vals["size_value"]))
    return Hyperexponential(tuple(vals["size_weights"]), tuple(vals["size_rates"]))


def _build_estimate(name, vals):
    if name == "perfect":
        return Perfect()
    if name == "fixed":
        return FixedMultiplier(float(vals["beta"]))
    if name == "uniform":
        return UniformMultiplier(float(vals["beta"]), float(vals["alpha"]))
    return TwoPointMultiplier(float(vals["beta"]), float(vals["alpha"]), float(vals["p_low"]))


ESTIMATE_PARAMS = {"perfect": (), "fixed": ("beta",), "uniform": ("beta", "alpha"),
                   "two_point": ("beta", "alpha", "p_low")}


def parse_config(text, overrides: Optional[dict] = None) -> ExperimentSpec:
    """Parse and validate a config document; all problems are reported together."""
    try:
        doc = yaml.safe_load(text) if isinstance(text, str) else text
    except yaml.YAMLError as exc:
        raise SpecError([f"not valid YAML: {exc}"]) from None
    doc = dict(doc or {})
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    problems = []
    for key in sorted(set(doc) - KNOWN_KEYS):
        problems.append(f"{key}: unknown key")
    cfg = dict(DEFAULTS)
    cfg.update(doc)

    mode = cfg["mode"]
    if mode not in ("simulate", "analyze", "both"):
        problems.append(f"mode: must be simulate, analyze or both, got {mode!r}")
    size = cfg["size"]
    if size not in SIZE_PARAMS:
        problems.append(f"size: unknown distribution {size!r}; expected one of {sorted(SIZE_PARAMS)}")
    est = cfg["estimate"]
    if est not in ESTIMATE_PARAMS:
        problems.append(f"estimate: unknown model {est!r}; expected one of {sorted(ESTIMATE_PARAMS)}")
    if cfg["trend"] not in TRENDS:
        problems.append(f"trend: expected one of {TRENDS}, got {cfg['trend']!r}")

    policies = []
    for i, p in enumerate(_as_list(cfg["policies"])):
        try:
            policies.append(Policy.parse(p))
        except ValueError as exc:
            problems.append(f"policies[{i}]: {exc}")
    for key in ("jobs", "replications", "workers", "queue_cap"):
        v = cfg[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            problems.append(f"{key}: must be a positive integer, got {v!r}")
    if cfg["warmup"] is not None and (not isinstance(cfg["warmup"], int) or cfg["warmup"] < 0):
        problems.append(f"warmup: must be a non-negative integer, got {cfg['warmup']!r}")
    if not isinstance(cfg["seed"], int):
        problems.append(f"seed: must be an integer, got {cfg['seed']!r}")

    has_lam, has_rho = "lambda" in doc, "rho" in doc
    if has_lam == has_rho:
        problems.append("lambda/rho: give exactly one of them")
    needed = set(SIZE_PARAMS.get(size, ())) | set(ESTIMATE_PARAMS.get(est, ()))
    for key in sorted(needed):
        if key not in cfg:
            problems.append(f"{key}: required by size={size!r} / estimate={est!r}")

    # sweep axes in a fixed order so grid numbering is stable
    axes = [k for k in SWEEP_KEYS if k in cfg and (k in needed or k in ("lambda", "rho"))]
    tied_beta = str(cfg.get("beta", "")).replace(" ", "") == "1/alpha"
    if tied_beta:
        axes = [k for k in axes if k != "beta"]
    levels = {}
    for key in axes:
        vals = _as_list(cfg[key])
        bad = [v for v in vals if isinstance(v, bool) or not isinstance(v, (int, float))]
        if bad or not vals:
            problems.append(f"{key}: expected a number or a list of numbers, got {cfg[key]!r}")
            continue
        levels[key] = [float(v) for v in vals]
    thresholds = _as_list(cfg["work_thresholds"])
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in thresholds):
        problems.append("work_thresholds: expected positive numbers")

    points = []
    if not problems:
        keys = list(levels)
        for idx, combo in enumerate(itertools.product(*(levels[k] for k in keys))):
            vals = dict(zip(keys, combo))
            for k in needed:
                if k not in vals and k in cfg and k != "beta":
                    vals[k] = cfg[k]
            if tied_beta:
                vals["beta"] = 1.0 / vals["alpha"]
            where = ", ".join(f"{k}={v:g}" for k, v in vals.items() if isinstance(v, float))
            try:
                model = JointSizeModel(_build_size(size, vals), _build_estimate(est, vals))
            except ValueError as exc:
                problems.append(f"grid point {idx} ({where}): {exc}")
                continue
            mean = model.mean_size()
            lam = vals["lambda"] if "lambda" in vals else vals["rho"] / mean
            rho = lam * mean
            if not lam > 0:
                problems.append(f"grid point {idx} ({where}): lambda must be positive")
            elif rho >= 1:
                problems.append(f"grid point {idx} ({where}): rho >= 1 (rho = {rho:.6g})")
            points.append(GridPoint(idx, vals, lam, model))
    if problems:
        raise SpecError(problems)
    return ExperimentSpec(
        scenario=str(cfg["scenario"]), mode=mode, policies=policies, points=points,
        jobs=cfg["jobs"], warmup=cfg["warmup"], replications=cfg["replications"],
        seed=cfg["seed"], workers=cfg["workers"], out=cfg["out"], trend=cfg["trend"],
        work_thresholds=tuple(float(v) for v in thresholds), queue_cap=cfg["queue_cap"],
        raw=cfg)


# --------------------------------------------------------------------------
# presets

PRESETS = {
    "consistency": """
scenario: consistency
size: exponential
size_rate: 1.0
estimate: uniform
alpha: [1.01, 1.05, 1.11]
beta: 1/alpha
rho: 0.8
policies: [SRPT, SRPT-B]
jobs: 1000000
replications: 10
trend: consistency
""",
    "srpt-e-blowup": """
scenario: srpt-e-blowup
size: bounded_pareto
size_shape: 1.5
size_low: 1.0
size_high: [100.0, 1000.0, 10000.0]
estimate: fixed
beta: 0.5
rho: 0.8
policies: [SRPT, SRPT-E, SRPT-B]
jobs: 1000000
replications: 10
trend: srpt-e-blowup
""",
    "ub-pathology": """
scenario: ub-pathology
size: uniform
size_low: 1.0
size_high: 1.01
estimate: fixed
beta: 0.49
rho: [0.8, 0.9, 0.95]
policies: [SRPT, SRPT-B, SRPT-UB]
jobs: 1000000
replications: 10
trend: ub-pathology
""",
    "bounds": """
scenario: bounds
mode: analyze
size: exponential
size_rate: 1.0
estimate: uniform
beta: [0.5, 0.8, 0.9]
alpha: [1.0, 1.1, 1.25, 2.0]
rho: [0.5, 0.8]
policies: [SRPT, PSJF, SRPT-E, PSJF-E, SRPT-B, SRPT-SE]
""",
    "bounds-pareto": """
scenario: bounds-pareto
mode: analyze
size: bounded_pareto
size_shape: 1.5
size_low: 1.0
size_high: 100.0
estimate: uniform
beta: [0.5, 0.8, 0.9]
alpha: [1.0, 1.1, 1.25, 2.0]
rho: [0.5, 0.8]
policies: [SRPT, PSJF, SRPT-E, PSJF-E, SRPT-B, SRPT-SE]
""",
    "cross-validation": """
scenario: cross-validation
size: exponential
size_rate: 1.0
estimate: uniform
beta: 0.8
alpha: 1.2
rho: 0.7
policies: [SRPT, PSJF, SRPT-E, PSJF-E, SRPT-B, SRPT-SE]
jobs: 1000000
replications: 10
""",
}


def load_spec(source: str, overrides: Optional[dict] = None) -> ExperimentSpec:
    """A preset name or a path to a YAML config."""
    if source in PRESETS:
        return parse_config(PRESETS[source], overrides)
    path = Path(source)
    if not path.exists():
        raise SpecError([f"{source}: no such config file or preset "
                         f"(presets: {', '.join(sorted(PRESETS))})"])
    return parse_config(path.read_text(), overrides)


# --------------------------------------------------------------------------
# running


@dataclass
class PointResult:
    point: GridPoint
    sim: dict = field(default_factory=dict)  # policy -> RunSummary
    analytic: dict = field(default_factory=dict)  # policy -> ResponseBreakdown
    bounds: dict = field(default_factory=dict)  # policy -> (kind, value)


def _analyze_point(spec, ctx):
    return {p: soap.mean_response_breakdown(ctx, p)
            for p in spec.policies if p != Policy.SRPT_UB}


def _reference(res: PointResult, p: Policy) -> Optional[float]:
    """Mean response of p, analytic when available."""
    if p in res.analytic:
        return float(res.analytic[p].mean_T)
    if p in res.sim:
        return res.sim[p].mean_T.mean
    return None


def _bounds(ctx, res: PointResult):
    t_srpt = _reference(res, Policy.SRPT)
    t_psjf = _reference(res, Policy.PSJF)
    for p in list(res.analytic) + list(res.sim):
        if p == Policy.SRPT:
            res.bounds[p] = ("lower", soap.srpt_lower_bound(ctx))
        elif p == Policy.SRPT_E:
            res.bounds[p] = ("lower_wait", soap.lower_srpt_e(ctx))
        elif p == Policy.SRPT_SE and t_srpt is not None:
            res.bounds[p] = ("upper", soap.bound_srpt_se(ctx, t_srpt))
        elif p == Policy.SRPT_B and t_srpt is not None:
            res.bounds[p] = ("upper", soap.bound_srpt_b(ctx, t_srpt))
        elif p == Policy.PSJF_E and t_psjf is not None:
            res.bounds[p] = ("upper", soap.bound_psjf_e(ctx, t_psjf))


def run_scenario(spec: ExperimentSpec, log=sys.stderr):
    """Evaluate every grid point; returns (results, checks)."""
    n_sim = len(spec.points) * len(spec.policies) if spec.mode != "analyze" else 0
    print(f"[{spec.scenario}] {len(spec.points)} grid point(s) x {len(spec.policies)} "
          f"policy(ies); {n_sim} simulation run(s) of {spec.replications} x {spec.jobs} jobs",
          file=log)
    results = [PointResult(pt) for pt in spec.points]
    ctxs = []
    for res in results:
        ctx = soap.AnalyticContext(res.point.lam, res.point.model)
        ctxs.append(ctx)
        if spec.mode != "simulate":
            res.analytic = _analyze_point(spec, ctx)
    if spec.mode != "analyze":
        tasks = [(i, p) for i in range(len(results)) for p in spec.policies]

        def job(task):
            i, p = task
            return run(spec.sim_config(results[i].point, p))

        if spec.workers > 1:
            with ThreadPoolExecutor(spec.workers) as pool:
                summaries = list(pool.map(job, tasks))
        else:
            summaries = [job(t) for t in tasks]
        for (i, p), summ in zip(tasks, summaries):
            results[i].sim[p] = summ
    for ctx, res in zip(ctxs, results):
        _bounds(ctx, res)
    return results, evaluate_checks(spec, results)


# --------------------------------------------------------------------------
# checks


@dataclass
class Check:
    name: str
    point: Optional[int]
    passed: bool
    lhs: float
    rhs: float
    detail: str = ""


def _sim_value(res, p):
    s = res.sim.get(p)
    if s is None:
        return None
    hw = s.mean_T.half_width
    return s.mean_T.mean, (0.0 if math.isnan(hw) else hw)


def evaluate_checks(spec: ExperimentSpec, results) -> list[Check]:
    checks = []
    for res in results:
        i = res.point.index
        beta, alpha = res.point.model.bounds()
        ratio = alpha / beta
        ctx = soap.AnalyticContext(res.point.lam, res.point.model)
        a = {p: float(b.mean_T) for p, b in res.analytic.items()}
        # analytic inequalities, up to quadrature error
        tol = 1e-6
        if Policy.SRPT in a:
            lb = soap.srpt_lower_bound(ctx)
            checks.append(Check("analytic: T_SRPT >= log lower bound", i,
                                a[Policy.SRPT] >= lb * (1 - tol), a[Policy.SRPT], lb))
        if Policy.SRPT in a and Policy.SRPT_SE in a:
            rhs = ratio * a[Policy.SRPT]
            checks.append(Check("analytic: T_SRPT-SE <= (alpha/beta) T_SRPT", i,
                                a[Policy.SRPT_SE] / a[Policy.SRPT] <= ratio + tol,
                                a[Policy.SRPT_SE], rhs))
        if Policy.PSJF in a and Policy.PSJF_E in a:
            rhs = ratio * a[Policy.PSJF]
            checks.append(Check("analytic: T_PSJF-E <= (alpha/beta) T_PSJF", i,
                                a[Policy.PSJF_E] <= rhs * (1 + tol), a[Policy.PSJF_E], rhs))
        if Policy.SRPT in a and Policy.PSJF_E in a:
            rhs = 1.5 * ratio * a[Policy.SRPT]
            checks.append(Check("analytic: T_PSJF-E <= 1.5 (alpha/beta) T_SRPT", i,
                                a[Policy.PSJF_E] <= rhs * (1 + tol), a[Policy.PSJF_E], rhs))
        if Policy.SRPT in a and Policy.SRPT_B in a:
            rhs = soap.bound_srpt_b(ctx, a[Policy.SRPT])
            checks.append(Check("analytic: T_SRPT-B <= additive bound", i,
                                a[Policy.SRPT_B] <= rhs * (1 + tol), a[Policy.SRPT_B], rhs))
        if Policy.SRPT_E in res.analytic:
            w = float(res.analytic[Policy.SRPT_E].mean_wait)
            lb = soap.lower_srpt_e(ctx)
            checks.append(Check("analytic: SRPT-E mean wait >= lower bound", i,
                                w >= lb * (1 - tol), w, lb))
        # simulated inequalities, with the CI of each side as slack
        srpt = _sim_value(res, Policy.SRPT)
        for p, name, factor in ((Policy.SRPT_SE, "T_SRPT-SE <= (alpha/beta) T_SRPT", ratio),
                                (Policy.PSJF_E, "T_PSJF-E <= 1.5 (alpha/beta) T_SRPT", 1.5 * ratio)):
            v = _sim_value(res, p)
            if v and srpt:
                lhs, rhs = v[0] - v[1], factor * (srpt[0] + srpt[1])
                checks.append(Check(f"simulated: {name}", i, lhs <= rhs, v[0], factor * srpt[0]))
        v = _sim_value(res, Policy.SRPT_B)
        if v and srpt:
            rhs = soap.bound_srpt_b(ctx, srpt[0] + srpt[1])
            checks.append(Check("simulated: T_SRPT-B <= additive bound", i,
                                v[0] - v[1] <= rhs, v[0], soap.bound_srpt_b(ctx, srpt[0])))
        if Policy.SRPT_E in res.sim:
            w = res.sim[Policy.SRPT_E].mean_T_wait
            lb = soap.lower_srpt_e(ctx)
            checks.append(Check("simulated: SRPT-E mean wait >= lower bound", i,
                                w.mean + _nz(w.half_width) >= lb, w.mean, lb))
    checks.extend(_trend_checks(spec, results))
    return checks


def _nz(x):
    return 0.0 if math.isnan(x) else x


def _ratio(res, p, q=Policy.SRPT):
    """T_p / T_q, simulated when available, else analytic."""
    if p in res.sim and q in res.sim:
        return res.sim[p].mean_T.mean / res.sim[q].mean_T.mean
    if p in res.analytic and q in res.analytic:
        return float(res.analytic[p].mean_T) / float(res.analytic[q].mean_T)
    return None


def _trend_checks(spec, results) -> list[Check]:
    out = []
    if spec.trend == "consistency":
        pts = sorted(results, key=lambda r: r.point.values["alpha"])
        ratios = [_ratio(r, Policy.SRPT_B) for r in pts]
        if None not in ratios and ratios:
            alphas = [r.point.values["alpha"] for r in pts]
            mono = all(x < y for x, y in zip(ratios, ratios[1:]))
            out.append(Check("trend: T_SRPT-B/T_SRPT approaches 1 as alpha -> 1", None, mono,
                             ratios[0], ratios[-1],
                             "ratios by alpha " + ", ".join(f"{a:g}:{r:.5f}" for a, r in zip(alphas, ratios))))
            out.append(Check("trend: T_SRPT-B/T_SRPT <= 1.05 at the smallest alpha", None,
                             ratios[0] <= 1.05, ratios[0], 1.05))
    elif spec.trend == "srpt-e-blowup":
        pts = sorted(results, key=lambda r: r.point.values.get("size_high", 0.0))
        ratios = [_ratio(r, Policy.SRPT_E) for r in pts]
        if None not in ratios and ratios:
            out.append(Check("trend: T_SRPT-E/T_SRPT strictly increasing in size_high", None,
                             all(x < y for x, y in zip(ratios, ratios[1:])), ratios[0], ratios[-1],
                             "ratios " + ", ".join(f"{r:.5f}" for r in ratios)))
    elif spec.trend == "ub-pathology":
        by_rho = {round(r.point.rho, 6): r for r in results}
        if {0.9, 0.95} <= set(by_rho):
            q = {k: _ratio(v, Policy.SRPT_UB, Policy.SRPT_B) for k, v in by_rho.items()}
            if q[0.9] and q[0.95]:
                out.append(Check("trend: T_SRPT-UB/T_SRPT-B at rho 0.95 >= 1.5x its value at 0.9",
                                 None, q[0.95] >= 1.5 * q[0.9], q[0.95], 1.5 * q[0.9]))
        scaled = [r.sim[Policy.SRPT_B].mean_T.mean * (1 - r.point.rho)
                  for r in results if Policy.SRPT_B in r.sim]
        if scaled:
            out.append(Check("trend: T_SRPT-B (1 - rho) within a factor 2 across rho", None,
                             max(scaled) <= 2 * min(scaled), max(scaled), 2 * min(scaled)))
    return out


# --------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def results_csv(spec: ExperimentSpec, results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for res in results:
        pt = res.point
        beta, alpha = pt.model.bounds()
        size_params = ";".join(f"{k}={pt.values.get(k, spec.raw.get(k))}"
                               for k in SIZE_PARAMS[spec.raw["size"]])
        for p in spec.policies:
            s = res.sim.get(p)
            an = res.analytic.get(p)
            kind, bval = res.bounds.get(p, (None, None))
            ratio = _ratio(res, p)
            w.writerow([_fmt(x) for x in (
                spec.scenario, pt.index, p.label, float(pt.lam), float(pt.rho), float(beta),
                float(alpha), pt.values.get("p_low"), spec.raw["size"], size_params,
                spec.raw["estimate"], spec.jobs, s.config.warmup_jobs if s else spec.warmup,
                spec.replications, spec.seed,
                s.mean_T.mean if s else None, s.mean_T.half_width if s else None,
                s.mean_T_wait.mean if s else None, s.mean_T_res.mean if s else None,
                float(an.mean_T) if an else None, kind,
                float(bval) if bval is not None else None,
                float(ratio) if ratio is not None else None)])
    return buf.getvalue()


def summary_json(spec: ExperimentSpec, checks) -> dict:
    return {
        "schema": SCHEMA,
        "scenario": spec.scenario,
        "mode": spec.mode,
        "grid_points": len(spec.points),
        "policies": [p.label for p in spec.policies],
        "seed": spec.seed,
        "jobs": spec.jobs,
        "replications": spec.replications,
        "checks": [{"name": c.name, "point": c.point, "passed": bool(c.passed),
                    "lhs": float(c.lhs), "rhs": float(c.rhs), "detail": c.detail}
                   for c in checks],
        "all_passed": all(c.passed for c in checks),
    }


def write_outputs(spec, results, checks, out: Optional[str]):
    text = results_csv(spec, results)
    summary = summary_json(spec, checks)
    if out:
        base = Path(out)
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".csv").write_text(text)
        base.with_suffix(".json").write_text(json.dumps(summary, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="estsched", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "simulate every grid point"),
                        ("analyze", "evaluate the analytic formulas only"),
                        ("verify", "simulate, analyze and check the inequalities")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="YAML config file or preset name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--jobs", type=int, help="jobs per replication")
        sp.add_argument("--reps", type=int, help="replications per run")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="output path stem; writes <stem>.csv and <stem>.json")
    sp = sub.add_parser("presets", help="list presets or print one")
    sp.add_argument("name", nargs="?")
    args = parser.parse_args(argv)

    if args.command == "presets":
        if args.name:
            if args.name not in PRESETS:
                print(f"unknown preset {args.name!r}", file=sys.stderr)
                return 2
            print(PRESETS[args.name].strip())
        else:
            print("\n".join(sorted(PRESETS)))
        return 0

    mode = {"simulate": "simulate", "analyze": "analyze", "verify": "both"}[args.command]
    overrides = {"seed": args.seed, "jobs": args.jobs, "replications": args.reps,
                 "workers": args.workers, "out": args.out, "mode": mode}
    try:
        spec = load_spec(args.config, overrides)
    except SpecError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        results, checks = run_scenario(spec)
    except InstabilityError as exc:
        print(f"unstable run: {exc}", file=sys.stderr)
        return 3
    summary = write_outputs(spec, results, checks, spec.out)
    for c in checks:
        where = "" if c.point is None else f" [point {c.point}]"
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}{where}: {c.lhs:.6g} vs {c.rhs:.6g} "
              f"{c.detail}".rstrip(), file=sys.stderr)
    return 0 if summary["all_passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
