import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from erwsa.model import MemorySchedule, WalkConfig
from erwsa.stats import (
    MomentAccumulator,
    SmallBallProcess,
    TestFunction,
    accumulate,
    as_clt_log_average,
    brownian_sup_prob,
    cos_test,
    estimate_xi,
    finalize,
    fit_small_ball_constant,
    gaussian_cos_expectation,
    gaussian_expectation_mc,
    ks_normal,
    lil_scale,
    lil_track,
    merge,
    small_ball_log_prob,
    tree_reduce,
    xi_scale,
)
from erwsa.theory import c0_constant
from erwsa.walkers import simulate_batch

PI2_8 = math.pi**2 / 8


def test_accumulator_examples():
    acc = MomentAccumulator(1)
    accumulate(acc, [0.0])
    accumulate(acc, [2.0])
    out = finalize(acc)
    assert out["mean"][0] == 1.0 and out["covariance"][0, 0] == 2.0
    a, b = MomentAccumulator(1).add([[0.0]]), MomentAccumulator(1).add([[2.0]])
    m = finalize(merge(a, b))
    assert m["mean"][0] == 1.0 and m["covariance"][0, 0] == 2.0
    with pytest.raises(ValueError):
        finalize(MomentAccumulator(1).add([[1.0]]))


def test_accumulator_normal_variance():
    x = np.random.default_rng(0).standard_normal((10**6, 1))
    assert abs(MomentAccumulator(1).add(x).finalize()["covariance"][0, 0] - 1) < 0.006


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.integers(1, 200), min_size=1, max_size=8))
def test_accumulator_merge_invariance(seed, sizes):
    rng = np.random.default_rng(seed)
    parts = [rng.normal(3.0, 2.0, (k, 3)) for k in sizes]
    whole = MomentAccumulator(3).add(np.concatenate(parts))
    accs = [MomentAccumulator(3).add(p) for p in parts]
    tree = tree_reduce(accs)
    rev = tree_reduce([a.copy() for a in accs[::-1]])
    seq = accs[0].copy()
    for a in accs[1:]:
        seq = merge(seq, a)
    for other in (tree, rev, seq):
        assert other.count == whole.count
        assert np.allclose(other.mean, whole.mean, rtol=1e-10, atol=1e-10)
        assert np.allclose(other.m2, whole.m2, rtol=1e-10, atol=1e-9)


def test_accumulator_dimension_check():
    with pytest.raises(ValueError):
        MomentAccumulator(2).add(np.zeros((3, 3)))


def test_ks_examples():
    r = ks_normal([-1.0, 0.0, 1.0], 1.0)
    assert r.statistic == pytest.approx(0.174678, abs=1e-6)
    assert r.statistic == pytest.approx(sps.kstest([-1, 0, 1], "norm").statistic, abs=1e-12)
    n = 500
    q = sps.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    assert ks_normal(q, 1.0).statistic == pytest.approx(1 / (2 * n), abs=1e-12)


@given(st.floats(0.1, 10), st.floats(0.5, 4), st.integers(0, 1000))
def test_ks_scale_invariance(a, var, seed):
    x = np.random.default_rng(seed).normal(0, 1.3, 300)
    assert ks_normal(a * x, a * a * var).statistic == pytest.approx(ks_normal(x, var).statistic, abs=1e-12)


def test_ks_pvalue_matches_scipy_asymptotic():
    x = np.random.default_rng(3).normal(0, 2.0, 5000)
    r = ks_normal(x, 4.0)
    ref = sps.kstest(x / 2.0, "norm", method="asymp")
    assert r.pvalue == pytest.approx(ref.pvalue, rel=1e-6)


def test_ks_lattice_jitter_removes_atoms():
    # a scaled simple random walk: without jitter the atoms reject normality
    b = simulate_batch(WalkConfig(1, MemorySchedule.constant(0.5), horizon=400, checkpoints=(400,), replicates=20000, seed=4))
    x = b.S[:, -1, 0] / 20.0
    assert ks_normal(x, 1.0).pvalue < 1e-6
    assert ks_normal(x, 1.0, lattice=2 / 20.0).pvalue > 0.01


def test_ks_rejects():
    with pytest.raises(ValueError):
        ks_normal([1.0], 0.0)
    with pytest.raises(ValueError):
        ks_normal([], 1.0)


def test_xi_copy_walk():
    c = WalkConfig(1, MemorySchedule.constant(1.0), horizon=1000, checkpoints=(1000,), replicates=400, seed=2, first_step="memory")
    b = simulate_batch(c)
    for norm in ("power", "gamma"):
        est = estimate_xi(b.S[:, -1, :], 1000, c.schedule, 1, norm)
        assert np.allclose(np.abs(est.samples), 1.0, rtol=1e-12)


def test_xi_rejects_diffusive():
    with pytest.raises(ValueError):
        estimate_xi(np.zeros((3, 1)), 100, MemorySchedule.constant(0.6), 1)
    with pytest.raises(ValueError):
        xi_scale(100, MemorySchedule.constant(0.9), 1, "bogus")


@pytest.mark.parametrize("n", [10**3, 10**4])
def test_xi_normalization_ratio(n):
    s = MemorySchedule.constant(0.9)
    gamma_n = xi_scale(n, s, 1, "gamma") * c0_constant(0.8)
    assert gamma_n / xi_scale(n, s, 1, "power") == pytest.approx(c0_constant(0.8), rel=2e-3)


def test_xi_general_schedule_scale():
    s = MemorySchedule.tabulated([0.95] * 50, 0.9)
    assert xi_scale(10**4, s, 1) > 0


def test_log_average_constant():
    one = TestFunction(lambda x: np.ones(len(x)), 1.0)
    r = as_clt_log_average([1, 2], np.zeros((2, 1)), one)
    assert r["value"] == pytest.approx(1.5 / math.log(2))
    assert r["value"] == pytest.approx(2.16404, abs=5e-6)
    assert r["unrecorded_weight"] == 0


def test_log_average_unrecorded_weight():
    one = TestFunction(lambda x: np.ones(len(x)), 1.0)
    r = as_clt_log_average([1, 10, 100], np.zeros((3, 1)), one, horizon=100)
    assert r["value"] == pytest.approx(sum(1 / k for k in range(1, 101)) / math.log(100))
    assert 0 < r["unrecorded_weight"] < 1 and r["bias_bound"] == 2 * r["unrecorded_weight"]


def test_unbounded_rejected():
    with pytest.raises(ValueError):
        TestFunction(lambda x: x[:, 0], math.inf)
    liar = TestFunction(lambda x: 5 * np.ones(len(x)), 1.0)
    with pytest.raises(ValueError):
        as_clt_log_average([1, 2], np.zeros((2, 1)), liar)


def test_gaussian_cos_expectation():
    cov = np.array([[1.6667, 0.6], [0.6, 0.62]])
    u = np.array([0.5, 1.0])
    mc = gaussian_expectation_mc(cos_test(u), cov, 10**6, seed=1)
    assert abs(mc["value"] - gaussian_cos_expectation(u, cov)) < 4 * mc["se"]


def test_log_average_of_iid_gaussian_path():
    # sum of iid N(0,1): x_k / sqrt k is N(0, 1) at every k
    x = np.cumsum(np.random.default_rng(2).standard_normal(10**6))
    r = as_clt_log_average(np.arange(1, 10**6 + 1), x, cos_test([1.0]))
    assert r["value"] == pytest.approx(math.exp(-0.5), rel=0.15)


def test_lil_scale_forms():
    assert lil_scale(1000) == pytest.approx(math.sqrt(2000 * math.log(math.log(1000))))
    assert lil_scale(10**6, "critical") == pytest.approx(math.sqrt(2e6 * math.log(1e6) * math.log(math.log(math.log(1e6)))))


def test_lil_track_simple_walk():
    c = WalkConfig(1, MemorySchedule.constant(0.5), horizon=10**5, checkpoints=tuple(sorted(set(np.geomspace(100, 1e5, 60).astype(int)))), replicates=200, seed=1)
    b = simulate_batch(c)
    r = lil_track(b.checkpoints, b.T, 1.0)
    assert not r["flag"]
    assert r["batch_max_ratio"] >= r["median_ratio"]
    with pytest.raises(ValueError):
        lil_track(np.array([1, 2, 3]), b.T[:, :3, :], 1.0)


def test_brownian_sup_prob_series_agree():
    small = brownian_sup_prob([1.0])[0]
    assert small == pytest.approx(0.370777, abs=1e-6)
    assert brownian_sup_prob([10.0])[0] == pytest.approx(1.0, abs=1e-12)
    # both series branches agree where they meet
    a = brownian_sup_prob([1.0 - 1e-12])[0]
    b = brownian_sup_prob([1.0 + 1e-12])[0]
    assert a == pytest.approx(b, abs=1e-9)
    assert brownian_sup_prob([2.0], T=4.0)[0] == pytest.approx(small, abs=1e-12)


def test_small_ball_bm_vs_series():
    est = small_ball_log_prob(SmallBallProcess(), [1.0, 3.0], trials=2**16, grid=2**12, seed=3, bridge=True)
    p = est.prob
    assert abs(p[0] - 0.370777) < 4 * est.se[0] * p[0]
    assert est.log_prob[1] > -0.01


def test_small_ball_I_reduces_to_bm():
    eps = [0.6, 0.8, 1.0]
    s = 1 / math.sqrt(2)
    bm = small_ball_log_prob(SmallBallProcess(), eps, trials=2**16, grid=2**10, seed=1)
    mix = small_ball_log_prob(SmallBallProcess(0.0, 0.0, s, s), eps, trials=2**16, grid=2**10, seed=2)
    se = np.hypot(bm.se, mix.se)
    assert np.all(np.abs(bm.log_prob - mix.log_prob) < 4 * se)


def test_small_ball_grid_monotone():
    proc = SmallBallProcess(0.0, 0.2, 0.0, 1.0)
    eps = [0.5, 0.7, 1.0]
    fine = small_ball_log_prob(proc, eps, trials=2**14, grid=2**10, seed=5)
    coarse = small_ball_log_prob(proc, eps, trials=2**14, grid=2**10, seed=5, stride=4)
    assert np.all(coarse.hits >= fine.hits)


def test_small_ball_zero_hits_flag():
    est = small_ball_log_prob(SmallBallProcess(), [0.05, 1.0], trials=2**12, grid=2**8, seed=0)
    assert est.upper_bound[0] and est.log_prob[0] == pytest.approx(math.log(3 / est.trials))
    assert not est.upper_bound[1]


def test_small_ball_worker_invariance():
    proc = SmallBallProcess(0.1, 0.3, 0.5, 0.8, d=2)
    a = small_ball_log_prob(proc, [0.8, 1.2], trials=2**13, grid=2**9, seed=4, block=2**10)
    b = small_ball_log_prob(proc, [0.8, 1.2], trials=2**13, grid=2**9, seed=4, block=2**10, workers=3)
    assert np.array_equal(a.log_prob, b.log_prob) and np.array_equal(a.hits, b.hits)


def test_fit_planted_constant():
    eps = np.array([0.3, 0.45, 0.6, 0.9])
    r = fit_small_ball_constant(epsilon=eps, log_prob=-2.5 / eps**2, intercept=False)
    assert r["constant"] == pytest.approx(2.5, rel=1e-12) and r["residual"] < 1e-12
    r = fit_small_ball_constant(epsilon=eps, log_prob=0.4 - 0.7 * eps ** (-2 / 3), exponent=2 / 3)
    assert r["constant"] == pytest.approx(0.7, rel=1e-10) and r["intercept"] == pytest.approx(0.4)


def test_fit_exact_series():
    eps = np.array([0.25, 0.35, 0.5])
    r = fit_small_ball_constant(epsilon=eps, log_prob=np.log(brownian_sup_prob(eps)))
    assert abs(r["constant"] - PI2_8) < 0.02 * PI2_8
    # doubling the diffusion coefficient doubles the constant
    r2 = fit_small_ball_constant(epsilon=eps, log_prob=np.log(brownian_sup_prob(eps / math.sqrt(2))))
    assert r2["constant"] == pytest.approx(2 * r["constant"], rel=1e-9)


def test_fit_precondition():
    eps = np.array([0.3, 0.4, 0.5])
    with pytest.raises(ValueError):
        fit_small_ball_constant(epsilon=eps, log_prob=np.log(brownian_sup_prob(eps)))
    with pytest.raises(ValueError):
        fit_small_ball_constant(epsilon=[0.2, 0.5], log_prob=[-1.0, -2.0])
