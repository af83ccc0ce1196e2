import csv
import math

import numpy as np
import pytest

from fjsim import analytic, dists, simcore
from fjsim.analytic import SystemParams
from fjsim.dists import RngStream
from fjsim.simcore import ForkJoinConfig

from conftest import requires_compiled


def cfg(n=10, k=5, lam=1.0, mu=3.0, **kw):
    return ForkJoinConfig(SystemParams(n, k, lam, mu), **kw)


PARITY_CASES = [
    dict(),
    dict(k=1),
    dict(k=10),
    dict(service=dists.Pareto(0.05, 2.5)),
    dict(service=dists.Deterministic(0.02)),
    dict(delta=0.4),
    dict(cancel="none"),
    dict(mode="split_merge"),
]


@requires_compiled
@pytest.mark.parametrize("kw", PARITY_CASES, ids=lambda kw: ",".join(f"{a}={b}" for a, b in kw.items()) or "base")
def test_backends_bit_identical(kw):
    c = cfg(**kw)
    a = simcore.simulate(c, 3000, RngStream(9, 2), backend="python")
    b = simcore.simulate(c, 3000, RngStream(9, 2), backend="cython")
    assert np.array_equal(a.arrival, b.arrival)
    assert np.array_equal(a.join, b.join)
    assert a.events == b.events


def test_deterministic_given_seed_and_stream():
    c = cfg()
    a = simcore.run(c, 5000, 500, seed=4, stream=1)
    b = simcore.run(c, 5000, 500, seed=4, stream=1)
    other = simcore.run(c, 5000, 500, seed=4, stream=2)
    assert a.mean == b.mean and np.array_equal(a.ecdf_t, b.ecdf_t)
    assert a.mean != other.mean
    assert a.digest == c.digest() and a.seed == 4 and a.extra["stream"] == 1


@pytest.fixture(scope="module", params=[(4, 2, "immediate"), (5, 1, "immediate"), (4, 4, "immediate"), (3, 2, "none")])
def traced(request):
    n, k, cancel = request.param
    c = cfg(n, k, lam=1.0, mu=1.0, cancel=cancel)
    return n, k, cancel, simcore.simulate(c, 800, RngStream(3), trace=True)


def test_trace_join_is_kth_finish(traced):
    n, k, cancel, out = traced
    for job in out.jobs:
        times = sorted(t for _, t in job.finishes)
        assert job.join == times[k - 1]
        if cancel == "immediate":
            assert len(times) == k
        elif job.id < 700:
            # the run stops at the last join, so only the tail can be short of n
            assert len(times) == n


def test_trace_causality(traced):
    n, k, cancel, out = traced
    for job in out.jobs:
        starts = dict(job.starts)
        assert all(t >= job.arrival for t in starts.values())
        for q, t in job.finishes:
            assert t >= starts[q]
        assert job.response >= 0


def test_trace_fcfs_per_queue(traced):
    n, k, cancel, out = traced
    for q in range(n):
        seq = [(job.id, t) for job in out.jobs for qq, t in job.starts if qq == q]
        seq.sort()
        times = [t for _, t in seq]
        assert times == sorted(times)


def test_trace_cancellation_withdraws_siblings(traced):
    n, k, cancel, out = traced
    if cancel != "immediate":
        return
    for job in out.jobs:
        # nothing of a joined job starts afterwards
        assert all(t <= job.join for _, t in job.starts)


def test_single_task_join_runs_in_lockstep():
    out = simcore.simulate(cfg(5, 1, 1.0, 1.0), 500, RngStream(8), trace=True)
    for job in out.jobs:
        starts = [t for _, t in job.starts]
        assert len(starts) == 5 and max(starts) == min(starts)


def test_trace_matches_untraced_run():
    c = cfg(4, 2, 1.0, 1.0)
    a = simcore.simulate(c, 2000, RngStream(5), trace=True)
    b = simcore.simulate(c, 2000, RngStream(5))
    assert np.array_equal(a.join, b.join)


def test_all_jobs_joined():
    out = simcore.simulate(cfg(), 5000, RngStream(1))
    assert not np.isnan(out.join).any()
    assert np.all(np.diff(out.arrival) > 0)


def test_no_cancel_first_disk_is_mm1():
    # without cancellation disk 0 is an M/M/1 queue with rate k * mu
    c = cfg(10, 5, 1.0, 0.3, cancel="none")
    out = simcore.simulate(c, 200_000, RngStream(2))
    soj = (out.finish0 - out.arrival)[2000:-2000]
    assert np.isfinite(soj).all()
    assert soj.mean() == pytest.approx(1 / (1.5 - 1.0), rel=0.04)


def test_single_disk_is_mm1():
    r = simcore.run(cfg(1, 1, 1.0, 2.0), 200_000, seed=3)
    assert r.mean == pytest.approx(1.0, rel=0.04)


def test_min_of_n_is_mm1_with_rate_n_mu_prime():
    r = simcore.run(cfg(10, 1, 1.0, 3.0), 200_000, seed=3)
    assert r.mean == pytest.approx(1 / 29, rel=0.02)


def test_littles_law():
    c = cfg(10, 7, 2.0, 3.0)
    out = simcore.simulate(c, 100_000, RngStream(6))
    a, j = out.arrival, out.join
    t_end = a[-1]
    # time-average number present over [0, t_end]
    area = np.minimum(j, t_end) - a
    L = area.sum() / t_end
    W = (j - a).mean()
    assert L == pytest.approx((len(a) / t_end) * W, rel=0.01)


def test_split_merge_is_slower_than_fork_join():
    c = cfg(10, 5, 1.0, 3.0)
    fj = simcore.run_replications(c, 50_000, 1000, 3, seed=2)
    sm = simcore.run_replications(ForkJoinConfig(c.params, mode="split_merge"), 50_000, 1000, 3, seed=2)
    assert sm.mean - sm.ci95 > fj.mean + fj.ci95
    bound = analytic.upper_bound_exp(c.params)
    assert sm.mean == pytest.approx(bound, rel=0.03)


def test_replications_merge_streams():
    c = cfg()
    merged = simcore.run_replications(c, 4000, 400, 3, seed=5)
    singles = [simcore.run(c, 4000, 400, seed=5, stream=s).mean for s in range(3)]
    assert merged.replication_means == tuple(singles)
    assert merged.count == 3 * 3600


def test_replications_with_workers_match_serial():
    c = cfg()
    a = simcore.run_replications(c, 4000, 400, 2, seed=5)
    b = simcore.run_replications(c, 4000, 400, 2, seed=5, workers=2)
    assert a.mean == b.mean


@pytest.mark.parametrize("delta,expect", [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)])
def test_correlated_task_correlation(delta, expect):
    rng = RngStream(12)
    x = np.array([simcore.sample_correlated_services(15.0, delta, 2, rng) for _ in range(60_000)])
    if delta == 1.0:
        assert np.array_equal(x[:, 0], x[:, 1])
    else:
        assert np.corrcoef(x.T)[0, 1] == pytest.approx(expect, abs=0.02)
    assert x.mean() == pytest.approx(1 / 15, rel=0.02)


def test_correlated_delta_one_behaves_as_single_queue():
    # identical task times make all n queues move together
    c = cfg(10, 5, 1.0, 3.0, delta=1.0)
    r = simcore.run(c, 100_000, seed=4)
    assert r.mean == pytest.approx(1 / (15 - 1), rel=0.03)


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(cancel="later")
    with pytest.raises(ValueError):
        cfg(mode="batch")
    with pytest.raises(ValueError):
        cfg(service=dists.Exponential(1.0), delta=0.3)
    with pytest.raises(ValueError):
        cfg(delta=1.5)
    with pytest.raises(ValueError):
        simcore.run(cfg(), 100, 100)
    with pytest.raises(ValueError):
        simcore.run_replications(cfg(), 100, 10, 0)
    with pytest.raises(ValueError):
        simcore.sample_correlated_services(1.0, -0.1, 3, RngStream(0))


def test_default_service_is_scaled_exponential():
    assert cfg(10, 5, 1.0, 3.0).service == dists.Exponential(15.0)
    assert cfg(10, 5, 1.0, 3.0, delta=0.2).service == dists.CorrelatedExpMix(15.0, 0.2)


def test_unstable_config_warns():
    with pytest.warns(RuntimeWarning):
        simcore.run(cfg(2, 1, 3.0, 1.0), 3000, 100)


def test_default_warmup():
    assert simcore.default_warmup(200_000) == 2000
    assert simcore.default_warmup(10_000) == 1000
    assert simcore.default_warmup(1000) == 500


def test_diagnostics_in_extra():
    r = simcore.run(cfg(10, 5, 1.0, 3.0), 3000, 100)
    assert r.extra["rho_task"] == pytest.approx(1 / 15)
    assert r.extra["rho_split_merge"] == pytest.approx(analytic.exp_orderstat_mean(10, 5, 15.0))


def test_write_trace(tmp_path):
    out = simcore.simulate(cfg(3, 2), 50, RngStream(1))
    path = tmp_path / "trace.csv"
    simcore.write_trace(path, out, 2)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 50
    assert rows[0].keys() == {"job_id", "arrival", "join", "response", "tasks_completed_at_join"}
    r = rows[7]
    assert float(r["response"]) == pytest.approx(float(r["join"]) - float(r["arrival"]))
    assert r["tasks_completed_at_join"] == "2"


def test_pareto_response_positive_and_finite():
    xm = dists.pareto_for_mean(1 / 15, 3.0).xm
    r = simcore.run(cfg(service=dists.Pareto(xm, 3.0)), 20_000, 1000)
    assert math.isfinite(r.mean) and r.ecdf_t[0] >= xm
