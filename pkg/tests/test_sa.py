import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erwsa.model import MemorySchedule, StepSizeModel, WalkConfig
from erwsa.sa import SaDivergence, SaSpec, erw_jacobian, erw_sa_spec, reconstruction_error, run_sa, rpw_sa_spec
from erwsa.theory import rpw_mean_sequence
from erwsa.walkers import RpwConfig, simulate_rpw, simulate_walk


def zero(k, theta, st):
    return np.zeros_like(theta)


def test_deterministic_telescoping():
    spec = SaSpec(1, [1.0], h=lambda x: x, gamma=lambda k: 1.0 / (k + 1), noise=zero, residual=zero)
    traj = run_sa(spec, 50)
    assert traj.theta[0, 0] == pytest.approx(0.5)
    assert traj.theta[1, 0] == pytest.approx(1 / 3)
    assert np.allclose(traj.theta[:, 0], 1 / (np.arange(1, 51) + 1), rtol=1e-12)


def test_exact_telescoping():
    spec = SaSpec(1, [1], h=lambda x: x, gamma=lambda k: Fraction(1, k + 1), noise=lambda k, t, s: np.array([Fraction(0)], dtype=object), residual=lambda k, t, s: np.array([Fraction(0)], dtype=object))
    traj = run_sa(spec, 30, exact=True)
    assert traj.theta[-1, 0] == Fraction(1, 31)


def test_pure_noise_martingale():
    def noise(k, theta, rng):
        return np.array([1.0 if rng.random() < 0.5 else -1.0])

    spec = SaSpec(1, [0.0], h=lambda x: 0 * x, gamma=lambda k: 1.0 / k, noise=noise, residual=zero)
    finals = np.array([run_sa(spec, 200, seed=s, checkpoints=[200]).theta[0, 0] for s in range(2000)])
    assert abs(finals.mean()) < 4 * finals.std() / math.sqrt(finals.size)


def test_divergence_reported():
    spec = SaSpec(1, [1.0], h=lambda x: -1e300 * x, gamma=lambda k: 1.0, noise=zero, residual=zero)
    with pytest.raises(SaDivergence) as info, np.errstate(over="ignore"):
        run_sa(spec, 10)
    assert info.value.step >= 1


def test_step_sequence_checked():
    spec = SaSpec(1, [1.0], h=lambda x: x, gamma=lambda k: float(k), noise=zero, residual=zero)
    with pytest.raises(ValueError):
        run_sa(spec, 5)


def test_jacobian_layout():
    H = erw_jacobian(0.2, 2.0, 1)
    assert np.allclose(H, [[0.8, -0.4], [0.0, 1.0]])
    H2 = erw_jacobian(0.2, 2.0, 2)
    assert H2.shape == (4, 4) and np.allclose(H2[:2, 2:], -0.4 * np.eye(2))
    # h is linear with this matrix in row convention: h(theta) = theta H
    spec = erw_sa_spec(WalkConfig(2, MemorySchedule.constant(0.55), StepSizeModel.constant(2.0), horizon=10))
    th = np.array([0.3, -0.2, 1.1, 0.7])
    assert np.allclose(spec.h(th), th @ spec.jacobian)


def test_uniform_memory_gives_identity_field():
    spec = erw_sa_spec(WalkConfig(2, MemorySchedule.constant(0.25), horizon=10))
    th = np.array([0.3, -0.2, 0.1, 0.9])
    assert np.allclose(spec.h(th)[:2], th[:2])


@pytest.mark.parametrize(
    "d,p,steps,first",
    [
        (1, 0.6, StepSizeModel.constant(1.0), "uniform"),
        (1, 0.9, StepSizeModel.constant(1.0), "memory"),
        (2, 0.5, StepSizeModel.two_point(0.0, 2.0, 0.5), "uniform"),
        (3, 0.1, StepSizeModel.constant(3.0), "uniform"),
    ],
)
def test_erw_adapter_bit_exact(d, p, steps, first):
    n = 1000
    c = WalkConfig(d, MemorySchedule.constant(p), steps, horizon=n, checkpoints=tuple(range(1, n + 1)), seed=17, first_step=first)
    path = simulate_walk(c, replicate=3)
    traj = run_sa(erw_sa_spec(c, replicate=3, exact=True), n, seed=17, exact=True)
    for i in range(n):
        for j in range(d):
            assert traj.theta[i, j] == Fraction(int(path.S[i, j]), i + 1)
            assert traj.theta[i, d + j] * (i + 1) == Fraction(float(path.T[i, j]))


def test_erw_adapter_varying_schedule_exact():
    n = 600
    s = MemorySchedule.tabulated(list(np.linspace(0.9, 0.6, 300)), 0.6)
    c = WalkConfig(1, s, horizon=n, checkpoints=tuple(range(1, n + 1)), seed=2)
    path = simulate_walk(c)
    traj = run_sa(erw_sa_spec(c, exact=True), n, seed=2, exact=True)
    assert all(traj.theta[i, 0] == Fraction(int(path.S[i, 0]), i + 1) for i in range(n))


def test_erw_adapter_float_reconstruction():
    n = 2000
    c = WalkConfig(2, MemorySchedule.power_law(0.7, 0.2, 0.5), StepSizeModel.gaussian(1.0, 0.5), horizon=n, checkpoints=tuple(range(1, n + 1)), seed=4)
    traj = run_sa(erw_sa_spec(c), n, seed=4, record_all=True)
    assert reconstruction_error(traj) < 1e-12
    path = simulate_walk(c)
    assert np.max(np.abs(traj.theta[:, :2] - path.S / np.arange(1, n + 1)[:, None])) < 1e-10


@pytest.mark.parametrize("W0,B0", [(0, 0), (1, 1), (3, 0)])
def test_rpw_adapter_bit_exact(W0, B0):
    n = 1000
    c = RpwConfig(0.9, 0.7, W0, B0, 0.5, n, 8, 1)
    path = simulate_rpw(c, range(1, n + 1))
    EW = rpw_mean_sequence(n, c, exact=True)
    traj = run_sa(rpw_sa_spec(c, exact=True), n, seed=8, exact=True)
    assert all(traj.theta[i, 0] == (int(path.W[i]) - EW[i + 1]) / (i + 1) for i in range(n))


def test_rpw_adapter_field_and_residual():
    spec = rpw_sa_spec(RpwConfig(0.9, 0.7, 1, 1, 0.5, 10, 0, 1))
    assert spec.h(np.array([2.0]))[0] == pytest.approx(0.8)
    spec0 = rpw_sa_spec(RpwConfig(0.9, 0.7, 0, 0, 1.0, 10, 0, 1))
    st_ = spec0.init_state(0)
    assert all(spec0.residual(k, np.zeros(1), st_)[0] == 0 for k in range(2, 10))


def test_rpw_adapter_needs_theory_ready():
    with pytest.raises(ValueError):
        rpw_sa_spec(RpwConfig(1.0, 0.5, 1, 1, 0.5, 10, 0, 1))


def test_noise_is_centered():
    n = 50
    c = WalkConfig(1, MemorySchedule.constant(0.8), horizon=n, checkpoints=(n,))
    sums = np.array([run_sa(erw_sa_spec(c, replicate=r), n, seed=1, checkpoints=[n]).M[0] for r in range(3000)])
    se = sums.std(axis=0) / math.sqrt(sums.shape[0])
    assert np.all(np.abs(sums.mean(axis=0)) < 4 * se)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 10**6), st.integers(1, 3))
def test_adapter_equivalence_property(p, seed, d):
    n = 150
    c = WalkConfig(d, MemorySchedule.constant(p), horizon=n, checkpoints=tuple(range(1, n + 1)), seed=seed)
    path = simulate_walk(c)
    traj = run_sa(erw_sa_spec(c, exact=True), n, seed=seed, exact=True)
    assert all(traj.theta[i, j] * (i + 1) == int(path.S[i, j]) for i in range(n) for j in range(d))
