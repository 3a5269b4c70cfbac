"""phi-work: the remaining work of jobs whose state satisfies a predicate.

Every predicate here, once true for a job, stays true until the job
completes (remaining quantities only shrink and sizes do not change), so a
job's phi-work is its whole remaining size when the predicate holds and zero
otherwise.

The mean system (remsize <= r)-work, integrated as

    E[T] = (1 / lambda) * int_0^inf E[W(remsize <= r)] / r^2 dr,

gives the mean response time of any work-conserving policy; this module
estimates the work curve by simulation and evaluates the integral.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .dist import JointSizeModel
from .policy import JobState
from .sim import Estimate, RunSummary, SimConfig, run, t_interval

MIN_GRID_POINTS = 32
DEFAULT_GRID_POINTS = 128


class WorkKind(enum.Enum):
    REMSIZE_LE = "remsize"  # s - a <= r
    REMSIZE_E_LE = "remsize_e"  # (z/s)(s - a) <= r
    SIZE_LE = "size"  # s <= r
    SIZE_E_LE = "size_e"  # z <= r
    REMSIZE_LE_LT_SIZE = "remsize_lt_size"  # s - a <= r < s


@dataclass(frozen=True)
class WorkPredicate:
    kind: WorkKind
    r: float

    def __call__(self, x: JobState) -> bool:
        rem = x.s - x.a
        if self.kind is WorkKind.REMSIZE_LE:
            return rem <= self.r
        if self.kind is WorkKind.REMSIZE_E_LE:
            return (x.z / x.s) * rem <= self.r
        if self.kind is WorkKind.SIZE_LE:
            return x.s <= self.r
        if self.kind is WorkKind.SIZE_E_LE:
            return x.z <= self.r
        return rem <= self.r < x.s


def RemsizeLE(r):
    return WorkPredicate(WorkKind.REMSIZE_LE, float(r))


def RemsizeELE(r):
    return WorkPredicate(WorkKind.REMSIZE_E_LE, float(r))


def SizeLE(r):
    return WorkPredicate(WorkKind.SIZE_LE, float(r))


def SizeELE(r):
    return WorkPredicate(WorkKind.SIZE_E_LE, float(r))


def RemsizeLEltSize(r):
    return WorkPredicate(WorkKind.REMSIZE_LE_LT_SIZE, float(r))


def phi_work_of_job(x: JobState, phi: WorkPredicate) -> float:
    """Service the job needs before it completes or stops satisfying phi."""
    return (x.s - x.a) if phi(x) else 0.0


def system_phi_work(jobs: Iterable[JobState], phi: WorkPredicate) -> float:
    return float(sum(phi_work_of_job(x, phi) for x in jobs))


# --------------------------------------------------------------------------
# simulation estimates


def _threshold_index(summary: RunSummary, r: float) -> int:
    thr = summary.work_thresholds
    hit = np.flatnonzero(np.isclose(thr, r, rtol=1e-12, atol=0.0))
    if hit.size == 0:
        raise KeyError(f"threshold {r} was not sampled in this run")
    return int(hit[0])


def _per_replication(summary: RunSummary, phi: WorkPredicate) -> np.ndarray:
    i = _threshold_index(summary, phi.r)
    reps = summary.replications
    if phi.kind is WorkKind.REMSIZE_LE_LT_SIZE:
        return np.array([rp.phi_work["remsize"][i] - rp.phi_work["size"][i] for rp in reps])
    return np.array([rp.phi_work[phi.kind.value][i] for rp in reps])


def phi_work_from_summary(summary: RunSummary, phi: WorkPredicate) -> Estimate:
    """Mean phi-work with a t half width, from a run that sampled threshold phi.r."""
    return t_interval(_per_replication(summary, phi))


def work_curve(summary: RunSummary, kind: WorkKind = WorkKind.REMSIZE_LE):
    """(r, mean, half width) arrays over every sampled threshold."""
    thr = summary.work_thresholds
    ests = [phi_work_from_summary(summary, WorkPredicate(kind, r)) for r in thr]
    return thr, np.array([e.mean for e in ests]), np.array([e.half_width for e in ests])


def estimate_mean_phi_work(cfg: SimConfig, phi: WorkPredicate) -> Estimate:
    """Time-average phi-work, sampled at post-warmup arrival epochs."""
    thr = tuple(sorted(set(cfg.work_thresholds) | {phi.r}))
    return phi_work_from_summary(run(replace(cfg, work_thresholds=thr)), phi)


def default_r_grid(model: JointSizeModel, n: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    size = model.size
    beta, alpha = model.bounds()
    lo = min(float(size.quantile(1e-4)), 1e-3 * size.mean())
    lo = max(lo, 1e-6 * size.mean())
    hi = float(size.quantile(1.0 - 1e-6)) * max(1.0, alpha)
    return np.geomspace(lo, hi, n)


def integrate_work_curve(lam: float, r: Sequence[float], work: Sequence[float]) -> float:
    """(1/lambda) int W(r) / r^2 dr from samples of W on a log-spaced grid.

    Trapezoid in ln r, plus the two tails: below the grid W(r) grows like
    r^2, above it W is flat, and each tail then contributes W(r_end) / r_end.
    """
    r = np.asarray(r, dtype=float)
    w = np.asarray(work, dtype=float)
    if r.size < MIN_GRID_POINTS:
        raise ValueError(f"r grid has {r.size} points; need at least {MIN_GRID_POINTS}")
    if np.any(np.diff(r) <= 0) or r[0] <= 0:
        raise ValueError("r grid must be positive and strictly increasing")
    body = trapezoid(w / r, np.log(r))
    tails = w[0] / r[0] + w[-1] / r[-1]
    return float((body + tails) / lam)


def work_integral_response(cfg: SimConfig, r_grid=None, summary: RunSummary = None) -> float:
    """Mean response time recovered from the simulated (remsize <= r)-work curve.

    Pass a ``summary`` that already sampled ``r_grid`` to avoid a second run.
    """
    r_grid = default_r_grid(cfg.model) if r_grid is None else np.asarray(r_grid, dtype=float)
    if r_grid.size < MIN_GRID_POINTS:
        raise ValueError(f"r grid has {r_grid.size} points; need at least {MIN_GRID_POINTS}")
    if summary is None:
        summary = run(replace(cfg, work_thresholds=tuple(r_grid)))
    idx = [_threshold_index(summary, r) for r in r_grid]
    curve = summary.phi_work["remsize"][0][idx]
    return integrate_work_curve(cfg.lam, r_grid, curve)
