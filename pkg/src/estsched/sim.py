"""Discrete-event simulation of the M/G/1 queue under least-rank scheduling.

Event times are computed in closed form from the piecewise-linear ranks, so
there is no time step anywhere.  Each replication draws its own arrival,
size and multiplier streams from a seed that depends only on the base seed
and the replication index; runs that differ only in policy, arrival rate or
estimate law therefore share random numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _engine
from .dist import JointSizeModel
from .policy import Policy

WORK_KEYS = ("remsize", "remsize_e", "size", "size_e")
DEFAULT_QUEUE_CAP = 10**7


class ConfigError(ValueError):
    """Invalid simulation or experiment configuration."""


class InstabilityError(RuntimeError):
    """The number of jobs in system passed the safety cap."""


@dataclass(frozen=True)
class SimConfig:
    lam: float
    model: JointSizeModel
    policy: Policy
    jobs_per_replication: int = 100_000
    warmup_jobs: Optional[int] = None  # default: 10% of the replication
    replications: int = 10
    base_seed: int = 0
    work_thresholds: tuple = ()
    queue_cap: int = DEFAULT_QUEUE_CAP
    extra_arrivals: float = 0.1  # fraction of arrivals simulated past the last measured job
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy.parse(self.policy))
        object.__setattr__(self, "work_thresholds",
                           tuple(sorted(float(r) for r in self.work_thresholds)))
        if self.warmup_jobs is None:
            object.__setattr__(self, "warmup_jobs", self.jobs_per_replication // 10)
        self.validate()

    @property
    def rho(self) -> float:
        return self.lam * self.model.mean_size()

    def validate(self):
        problems = []
        if not self.lam > 0:
            problems.append(f"lambda must be positive, got {self.lam}")
        elif not self.rho < 1:
            problems.append(f"rho >= 1 (rho = {self.rho:.6g}); the queue is unstable")
        if self.jobs_per_replication < 2:
            problems.append("jobs_per_replication must be at least 2")
        if not 0 <= self.warmup_jobs < self.jobs_per_replication:
            problems.append("need 0 <= warmup_jobs < jobs_per_replication")
        if self.replications < 1:
            problems.append("replications must be at least 1")
        if any(not r > 0 for r in self.work_thresholds):
            problems.append("work thresholds must be positive")
        if self.extra_arrivals < 0:
            problems.append("extra_arrivals must be non-negative")
        if problems:
            raise ConfigError("; ".join(problems))

    def describe(self) -> str:
        beta, alpha = self.model.bounds()
        return (f"policy={self.policy.label} lambda={self.lam:g} rho={self.rho:.4g} "
                f"size={self.model.size} estimate={self.model.estimate} "
                f"beta={beta:g} alpha={alpha:g}")


@dataclass(frozen=True)
class JobRecord:
    arrival_time: float
    s: float
    z: float
    first_service_time: float
    completion_time: float

    @property
    def response(self) -> float:
        return self.completion_time - self.arrival_time

    @property
    def waiting(self) -> float:
        return self.first_service_time - self.arrival_time

    @property
    def residence(self) -> float:
        return self.completion_time - self.first_service_time


@dataclass
class ReplicationResult:
    """Summary statistics of one replication, plus its measured jobs unless
    they were dropped to save memory."""

    mean_T: float
    mean_T_wait: float
    mean_T_res: float
    busy_fraction: float
    work_thresholds: np.ndarray
    phi_work: dict  # key -> mean work at each threshold
    n_samples: int
    bad_preemptions: int
    drained: bool
    arrival: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    first_service: Optional[np.ndarray] = None
    completion: Optional[np.ndarray] = None

    @property
    def response(self):
        return self.completion - self.arrival

    @property
    def waiting(self):
        return self.first_service - self.arrival

    @property
    def residence(self):
        return self.completion - self.first_service

    def drop_jobs(self):
        self.arrival = self.s = self.z = self.first_service = self.completion = None

    def records(self) -> list[JobRecord]:
        return [JobRecord(*row) for row in zip(self.arrival.tolist(), self.s.tolist(),
                                               self.z.tolist(), self.first_service.tolist(),
                                               self.completion.tolist())]


@dataclass
class Estimate:
    mean: float
    half_width: float

    def __iter__(self):
        yield self.mean
        yield self.half_width


@dataclass
class RunSummary:
    config: SimConfig
    mean_T: Estimate
    mean_T_wait: Estimate
    mean_T_res: Estimate
    busy_fraction: Estimate
    work_thresholds: np.ndarray
    phi_work: dict = field(default_factory=dict)  # key -> (means, half widths)
    bad_preemptions: int = 0
    drained_replications: int = 0
    replications: list = field(default_factory=list, repr=False)


def t_interval(values, level=0.95) -> Estimate:
    """Mean and Student-t half width over replication means."""
    v = np.asarray(values, dtype=float)
    n = v.size
    m = float(v.mean())
    if n < 2:
        return Estimate(m, math.nan)
    sd = float(v.std(ddof=1))
    return Estimate(m, float(stats.t.ppf(0.5 + level / 2, n - 1) * sd / math.sqrt(n)))


def replication_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))


def generate_input(cfg: SimConfig, seed):
    """Arrival times and (s, z) for one replication, including the extra tail."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    arr_ss, size_ss, mult_ss = ss.spawn(3)
    n_total = cfg.jobs_per_replication + int(math.ceil(cfg.extra_arrivals * cfg.jobs_per_replication))
    gaps = np.random.default_rng(arr_ss).standard_exponential(n_total) / cfg.lam
    arrivals = np.cumsum(gaps)
    s, z = cfg.model.sample(np.random.default_rng(size_ss), n_total,
                            mult_rng=np.random.default_rng(mult_ss))
    return arrivals, np.ascontiguousarray(s, dtype=float), np.ascontiguousarray(z, dtype=float)


def simulate_trace(policy, arrivals, s, z, warmup=0, n_measured=None, thresholds=(),
                   queue_cap=DEFAULT_QUEUE_CAP):
    """Run the event engine on an explicit trace.  Returns the raw engine output."""
    arrivals = np.ascontiguousarray(arrivals, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    z = np.ascontiguousarray(z, dtype=float)
    n = arrivals.shape[0] if n_measured is None else n_measured
    if np.any(np.diff(arrivals) < 0):
        raise ConfigError("arrival times must be non-decreasing")
    thr = np.ascontiguousarray(np.sort(np.asarray(thresholds, dtype=float)))
    out = _engine.simulate(int(Policy.parse(policy)), arrivals, s, z, int(warmup), int(n),
                           thr, int(queue_cap), 1_000_000)
    status = out[0]
    if status == _engine.UNSTABLE:
        raise InstabilityError(f"more than {queue_cap} jobs in system")
    if status == _engine.STALLED:
        raise RuntimeError("event loop made no progress; zero-length events repeated")
    return out


def run_replication(cfg: SimConfig, seed) -> ReplicationResult:
    """Simulate one replication; ``seed`` is an int or a SeedSequence."""
    arrivals, s, z = generate_input(cfg, seed)
    w, n = cfg.warmup_jobs, cfg.jobs_per_replication
    try:
        status, first, done, busy, sums, n_samples, bad = simulate_trace(
            cfg.policy, arrivals, s, z, w, n, cfg.work_thresholds, cfg.queue_cap)
    except InstabilityError as exc:
        raise InstabilityError(f"{exc}: {cfg.describe()}") from None
    sl = slice(w, n)
    thr = np.asarray(cfg.work_thresholds, dtype=float)
    phi = {}
    if thr.size:
        cum = np.cumsum(sums, axis=1) / max(n_samples, 1)
        phi = {key: cum[i] for i, key in enumerate(WORK_KEYS)}
    span = arrivals[n - 1] - arrivals[w]
    arr, fs, cp = arrivals[sl].copy(), first[sl].copy(), done[sl].copy()
    return ReplicationResult(
        mean_T=float(np.mean(cp - arr)), mean_T_wait=float(np.mean(fs - arr)),
        mean_T_res=float(np.mean(cp - fs)),
        busy_fraction=busy / span if span > 0 else math.nan,
        work_thresholds=thr, phi_work=phi, n_samples=int(n_samples),
        bad_preemptions=int(bad), drained=status == _engine.DRAINED,
        arrival=arr, s=s[sl].copy(), z=z[sl].copy(), first_service=fs, completion=cp)


def summarize(cfg: SimConfig, reps: Sequence[ReplicationResult]) -> RunSummary:
    thr = np.asarray(cfg.work_thresholds, dtype=float)
    phi = {}
    if thr.size:
        for key in WORK_KEYS:
            mat = np.array([r.phi_work[key] for r in reps])
            mean = mat.mean(axis=0)
            if len(reps) > 1:
                hw = stats.t.ppf(0.975, len(reps) - 1) * mat.std(axis=0, ddof=1) / math.sqrt(len(reps))
            else:
                hw = np.full_like(mean, math.nan)
            phi[key] = (mean, hw)
    return RunSummary(
        config=cfg,
        mean_T=t_interval([r.mean_T for r in reps]),
        mean_T_wait=t_interval([r.mean_T_wait for r in reps]),
        mean_T_res=t_interval([r.mean_T_res for r in reps]),
        busy_fraction=t_interval([r.busy_fraction for r in reps]),
        work_thresholds=thr, phi_work=phi,
        bad_preemptions=sum(r.bad_preemptions for r in reps),
        drained_replications=sum(r.drained for r in reps),
        replications=list(reps))


def run(cfg: SimConfig, keep_jobs: bool = False) -> RunSummary:
    """Run all replications and aggregate over replication means.

    Per-job arrays are dropped after aggregation unless ``keep_jobs``.
    """
    seeds = [replication_seed(cfg.base_seed, i) for i in range(cfg.replications)]

    def one(seed):
        res = run_replication(cfg, seed)
        if not keep_jobs:
            res.drop_jobs()
        return res

    if cfg.workers > 1:
        # the engine releases the GIL, so threads run replications in parallel
        with ThreadPoolExecutor(cfg.workers) as pool:
            reps = list(pool.map(one, seeds))
    else:
        reps = [one(sd) for sd in seeds]
    return summarize(cfg, reps)


def with_policy(cfg: SimConfig, policy) -> SimConfig:
    return replace(cfg, policy=Policy.parse(policy))
