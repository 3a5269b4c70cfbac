import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from estsched.dist import Exponential, JointSizeModel, UniformMultiplier
from estsched.policy import JobState, Policy, rank
from estsched.sim import SimConfig, run, simulate_trace
from estsched.work import (RemsizeELE, RemsizeLE, RemsizeLEltSize, SizeELE, SizeLE, WorkKind,
                           default_r_grid, estimate_mean_phi_work, integrate_work_curve,
                           phi_work_from_summary, phi_work_of_job, system_phi_work,
                           work_curve, work_integral_response)

EXP_U = JointSizeModel(Exponential(1.0), UniformMultiplier(0.8, 1.2))


def test_single_job_examples():
    assert phi_work_of_job(JobState(8.0, 8.0, 3.0), RemsizeLE(10)) == 5.0
    assert phi_work_of_job(JobState(20.0, 20.0, 6.0), RemsizeLE(10)) == 0.0
    assert phi_work_of_job(JobState(4.0, 6.0, 1.0), SizeLE(5)) == 3.0


def test_snapshot_total():
    jobs = [JobState(r + 1.0, r + 1.0, 1.0) for r in (5, 7, 9, 14, 24)]
    assert system_phi_work(jobs, RemsizeLE(10)) == 21.0


def test_empty_and_unbounded():
    assert system_phi_work([], RemsizeLE(10)) == 0.0
    assert system_phi_work([JobState(3.0, 2.0, 1.0)], RemsizeLE(math.inf)) == 2.0


def test_predicates():
    x = JobState(10.0, 5.0, 4.0)  # remsize 6, scaled estimated remsize 3
    assert RemsizeLE(6)(x) and not RemsizeLE(5.9)(x)
    assert RemsizeELE(3)(x) and not RemsizeELE(2.9)(x)
    assert SizeLE(10)(x) and not SizeLE(9)(x)
    assert SizeELE(5)(x) and not SizeELE(4)(x)
    assert RemsizeLEltSize(8)(x) and not RemsizeLEltSize(10)(x)


jobs_strategy = st.lists(
    st.tuples(st.floats(0.01, 50.0), st.floats(0.2, 3.0), st.floats(0.0, 0.99)).map(
        lambda t: JobState(t[0], t[0] * t[1], t[0] * t[2])),
    max_size=30)


@settings(max_examples=200, deadline=None)
@given(jobs_strategy, st.floats(0.0, 60.0), st.floats(0.0, 60.0))
def test_work_monotone_in_r(jobs, r1, r2):
    lo, hi = sorted((r1, r2))
    for make in (RemsizeLE, RemsizeELE, SizeLE, SizeELE):
        assert system_phi_work(jobs, make(lo)) <= system_phi_work(jobs, make(hi))


@settings(max_examples=200, deadline=None)
@given(jobs_strategy, st.floats(0.0, 60.0))
def test_remsize_work_splits_by_size(jobs, r):
    total = system_phi_work(jobs, RemsizeLE(r))
    parts = system_phi_work(jobs, SizeLE(r)) + system_phi_work(jobs, RemsizeLEltSize(r))
    assert total == pytest.approx(parts, rel=1e-12, abs=1e-12)


def test_integrate_rejects_coarse_grid():
    r = np.geomspace(0.01, 10, 31)
    with pytest.raises(ValueError, match="32"):
        integrate_work_curve(0.5, r, np.zeros_like(r))


def test_integrate_zero_curve():
    r = np.geomspace(0.01, 10, 64)
    assert integrate_work_curve(0.5, r, np.zeros_like(r)) == 0.0


def test_integrate_against_closed_form():
    # W(r) = c min(r, 1)^2 integrates against 1/r^2 to exactly 2c
    c, lam = 0.3, 0.5
    r = np.geomspace(1e-3, 1e3, 400)
    w = c * np.minimum(r, 1.0) ** 2
    assert integrate_work_curve(lam, r, w) == pytest.approx(2 * c / lam, rel=1e-3)


def test_light_traffic_work_vanishes():
    cfg = SimConfig(1e-4, EXP_U, "SRPT", jobs_per_replication=20_000, replications=3)
    est = estimate_mean_phi_work(cfg, RemsizeLE(1.0))
    assert est.mean < 1e-3


def _reference_run(policy, arrivals, s, z, thresholds):
    """Plain-Python least-rank queue for policies whose ranks never rise.

    The served job's rank only falls, so preemption happens only at arrivals.
    Returns completion times and, per work key, the summed remaining work at
    each arrival epoch at or below every threshold.
    """
    n = len(arrivals)
    rem = {}
    done = np.zeros(n)
    sums = np.zeros((4, len(thresholds)))
    t = 0.0

    def best():
        return min(rem, key=lambda i: (rank(policy, JobState(s[i], z[i], s[i] - rem[i])), i))

    def advance(until):
        nonlocal t
        while rem and t < until:
            j = best()
            if t + rem[j] <= until:
                t += rem.pop(j)
                done[j] = t
            else:
                rem[j] -= until - t
                t = until
        t = max(t, until)

    for j in range(n):
        advance(arrivals[j])
        for i, r in rem.items():
            keys = (r, z[i] / s[i] * r, s[i], z[i])
            for k in range(4):
                for b, thr in enumerate(thresholds):
                    if keys[k] <= thr:
                        sums[k, b] += r
        rem[j] = s[j]
    advance(math.inf)
    return done, sums


@pytest.mark.parametrize("policy", [Policy.SRPT, Policy.PSJF, Policy.SRPT_E,
                                    Policy.PSJF_E, Policy.SRPT_SE])
def test_engine_matches_reference_queue(policy):
    rng = np.random.default_rng(int(policy) + 10)
    n = 400
    arrivals = np.cumsum(rng.exponential(1.0, n))
    s = rng.exponential(0.8, n)
    z = s * rng.uniform(0.5, 2.0, n)
    thr = [0.3, 1.0, 2.5]
    _, _, done, _, sums, n_samples, _ = simulate_trace(policy, arrivals, s, z, thresholds=thr)
    ref_done, ref_sums = _reference_run(policy, arrivals, s, z, thr)
    np.testing.assert_allclose(done, ref_done, rtol=1e-10)
    np.testing.assert_allclose(np.cumsum(sums, axis=1), ref_sums, rtol=1e-9, atol=1e-9)
    assert n_samples == n


@pytest.mark.parametrize("policy", ["SRPT", "PSJF-E"])
def test_work_integral_recovers_mean_response(policy):
    cfg = SimConfig(0.5, EXP_U, policy, jobs_per_replication=200_000, replications=5)
    r = default_r_grid(EXP_U)
    summary = run(replace(cfg, work_thresholds=tuple(r)))
    est = work_integral_response(cfg, r_grid=r, summary=summary)
    assert est == pytest.approx(summary.mean_T.mean, rel=0.05)


def test_work_curve_shapes_and_lt_size_split():
    r = default_r_grid(EXP_U, n=40)
    summary = run(SimConfig(0.7, EXP_U, "SRPT-B", jobs_per_replication=50_000, replications=3,
                            work_thresholds=tuple(r)))
    rr, mean, hw = work_curve(summary)
    assert np.all(np.diff(mean) >= 0) and rr.shape == mean.shape == hw.shape
    _, size_mean, _ = work_curve(summary, WorkKind.SIZE_LE)
    _, lt_mean, _ = work_curve(summary, WorkKind.REMSIZE_LE_LT_SIZE)
    np.testing.assert_allclose(size_mean + lt_mean, mean, rtol=1e-12, atol=1e-15)
    with pytest.raises(KeyError):
        phi_work_from_summary(summary, RemsizeLE(123.456))
