import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from estsched import sim
from estsched.dist import (BoundedPareto, Deterministic, Exponential, FixedMultiplier,
                           JointSizeModel, Perfect, Uniform, UniformMultiplier)
from estsched.policy import Policy
from estsched.sim import (ConfigError, InstabilityError, JobRecord, SimConfig, run,
                          run_replication, simulate_trace)
from estsched.soap import AnalyticContext, wait_mean


def _trace(policy, arrivals, s, z):
    status, first, done, *_ = simulate_trace(policy, arrivals, s, z)
    return first, done


def test_srpt_hand_trace():
    first, done = _trace("SRPT", [0.0, 1.0], [3.0, 1.0], [3.0, 1.0])
    assert list(done) == [4.0, 2.0]
    assert list(done - np.array([0.0, 1.0])) == [4.0, 1.0]


def test_srpt_e_negative_rank_blocks():
    first, done = _trace("SRPT-E", [0.0, 6.0], [10.0, 1.0], [5.0, 0.8])
    assert list(done) == [10.0, 11.0]
    assert done[1] - 6.0 == 5.0


def test_srpt_b_bounce_lets_arrival_in():
    first, done = _trace("SRPT-B", [0.0, 6.0], [10.0, 1.0], [5.0, 0.8])
    assert list(first) == [0.0, 6.0]
    assert list(done) == [11.0, 7.0]


def test_srpt_b_equal_rising_ranks_share_server():
    # A (s=4, z=1) bounces back up to rank 1 at age 2; B (z=1) has rank 1 and
    # cannot be starved by A nor starve it, so they share.
    first, done = _trace("SRPT-B", [0.0, 0.5], [4.0, 3.0], [1.0, 1.0])
    assert np.all(np.isfinite(done))
    assert done.max() == pytest.approx(7.0)


def test_trace_rejects_decreasing_arrivals():
    with pytest.raises(ConfigError):
        simulate_trace("SRPT", [1.0, 0.5], [1.0, 1.0], [1.0, 1.0])


def test_job_record_decomposition():
    rec = JobRecord(1.0, 2.0, 2.5, 1.5, 4.0)
    assert rec.response == rec.waiting + rec.residence == 3.0


EXP_U = JointSizeModel(Exponential(1.0), UniformMultiplier(0.8, 1.2))
BP_U = JointSizeModel(BoundedPareto(1.5, 1.0, 100.0), UniformMultiplier(0.5, 2.0))


@pytest.mark.parametrize("policy", list(Policy))
def test_response_equals_wait_plus_residence(policy):
    cfg = SimConfig(0.7, EXP_U, policy, jobs_per_replication=20_000, replications=1)
    rep = run_replication(cfg, 0)
    assert np.all(rep.first_service >= rep.arrival)
    assert np.all(rep.completion >= rep.first_service)
    np.testing.assert_allclose(rep.response, rep.waiting + rep.residence, rtol=1e-12, atol=1e-9)
    assert rep.mean_T == pytest.approx(rep.mean_T_wait + rep.mean_T_res, rel=1e-12)
    assert not rep.drained


@pytest.mark.parametrize("est, clair", [
    (Policy.SRPT_E, Policy.SRPT), (Policy.SRPT_SE, Policy.SRPT),
    (Policy.SRPT_B, Policy.SRPT), (Policy.PSJF_E, Policy.PSJF)])
@pytest.mark.parametrize("size", [Exponential(1.0), BoundedPareto(1.5, 1.0, 100.0)], ids=repr)
def test_perfect_estimates_give_identical_traces(est, clair, size):
    model = JointSizeModel(size, Perfect())
    cfg = SimConfig(0.8 / size.mean(), model, est, jobs_per_replication=50_000, replications=1)
    a = run_replication(cfg, 42)
    b = run_replication(sim.with_policy(cfg, clair), 42)
    assert np.array_equal(a.completion, b.completion)
    assert np.array_equal(a.first_service, b.first_service)


@pytest.mark.parametrize("policy", list(Policy))
def test_busy_fraction_matches_load(policy):
    cfg = SimConfig(0.7, EXP_U, policy, jobs_per_replication=100_000, replications=5)
    summary = run(cfg)
    bf = summary.busy_fraction
    assert abs(bf.mean - 0.7) <= max(bf.half_width, 0.005)


def test_identical_seeds_give_zero_half_width(monkeypatch):
    monkeypatch.setattr(sim, "replication_seed", lambda base, i: np.random.SeedSequence(base))
    cfg = SimConfig(0.5, EXP_U, "SRPT-B", jobs_per_replication=10_000, replications=2)
    summary = run(cfg)
    a, b = summary.replications
    assert a.mean_T == b.mean_T
    assert summary.mean_T.half_width == 0.0


def test_runs_are_reproducible_and_seeds_differ():
    cfg = SimConfig(0.5, EXP_U, "PSJF-E", jobs_per_replication=10_000, replications=3, base_seed=9)
    a, b = run(cfg), run(cfg)
    assert a.mean_T.mean == b.mean_T.mean
    means = [r.mean_T for r in a.replications]
    assert len(set(means)) == 3


def test_thread_workers_match_serial():
    cfg = SimConfig(0.6 / BP_U.mean_size(), BP_U, "SRPT-B", jobs_per_replication=20_000,
                    replications=4)
    serial = run(cfg)
    pooled = run(sim.replace(cfg, workers=4))
    assert [r.mean_T for r in serial.replications] == [r.mean_T for r in pooled.replications]


def test_rho_at_least_one_rejected():
    with pytest.raises(ConfigError, match="rho >= 1"):
        SimConfig(1.2, JointSizeModel(Exponential(1.0)), "SRPT")


def test_invalid_config_lists_all_problems():
    with pytest.raises(ConfigError) as err:
        SimConfig(0.5, JointSizeModel(Exponential(1.0)), "SRPT",
                  jobs_per_replication=10, warmup_jobs=20, replications=0)
    assert "warmup" in str(err.value) and "replications" in str(err.value)


def test_queue_cap_signals_instability():
    cfg = SimConfig(0.95 / BP_U.mean_size(), BP_U, "SRPT-E", jobs_per_replication=50_000,
                    replications=1, queue_cap=20)
    with pytest.raises(InstabilityError, match="SRPT-E"):
        run(cfg)


@pytest.mark.parametrize("model", [
    EXP_U, BP_U,
    JointSizeModel(Uniform(1.0, 1.01), FixedMultiplier(0.49)),
    JointSizeModel(Exponential(1.0), FixedMultiplier(0.5)),
    JointSizeModel(BoundedPareto(1.5, 1.0, 1000.0), UniformMultiplier(0.3, 3.0)),
], ids=["exp", "bp", "narrow", "half", "wide"])
def test_srpt_b_never_preempted_by_earlier_arrival(model):
    cfg = SimConfig(0.9 / model.mean_size(), model, "SRPT-B", jobs_per_replication=200_000,
                    replications=2)
    assert run(cfg).bad_preemptions == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2**31), st.sampled_from(list(Policy)))
def test_small_traces_conserve_work(n, seed, policy):
    rng = np.random.default_rng(seed)
    arrivals = np.cumsum(rng.exponential(1.0, n))
    s = rng.uniform(0.1, 3.0, n)
    z = s * rng.uniform(0.4, 2.0, n)
    status, first, done, *_ = simulate_trace(policy, arrivals, s, z)
    assert np.all(done >= arrivals + s - 1e-9)
    # the server is never idle while work is present, so the makespan is the
    # FCFS makespan
    t = 0.0
    for a, w in zip(arrivals, s):
        t = max(t, a) + w
    assert done.max() == pytest.approx(t, rel=1e-12)


def test_psjf_e_residence_small_run():
    cfg = SimConfig(0.7, EXP_U, "PSJF-E", jobs_per_replication=200_000, replications=5)
    assert run(cfg).mean_T_res.mean == pytest.approx(1.71996, rel=0.02)


def test_srpt_b_waiting_per_estimate_bin_matches_analysis():
    cfg = SimConfig(0.7, EXP_U, "SRPT-B", jobs_per_replication=400_000, replications=10,
                    base_seed=3)
    summary = run(cfg, keep_jobs=True)
    ctx = AnalyticContext(0.7, EXP_U)
    edges = np.arange(0.0, 2.01, 0.1)
    for lo, hi in zip(edges[:-1], edges[1:]):
        per = np.array([r.waiting[(r.z >= lo) & (r.z < hi)].mean() for r in summary.replications])
        se = per.std(ddof=1) / np.sqrt(per.size)
        a = max(lo, 1e-12)
        num, _ = integrate.quad(lambda z: float(wait_mean(ctx, "SRPT-B", z)) * EXP_U.f_z(z), a, hi)
        den, _ = integrate.quad(EXP_U.f_z, a, hi)
        assert abs(per.mean() - num / den) <= 3 * se, (lo, per.mean(), num / den, se)


def test_deterministic_sizes_run_with_ties():
    model = JointSizeModel(Deterministic(1.0), FixedMultiplier(0.5))
    for p in Policy:
        rep = run_replication(SimConfig(0.6, model, p, jobs_per_replication=5_000, replications=1), 1)
        assert np.isfinite(rep.mean_T)
