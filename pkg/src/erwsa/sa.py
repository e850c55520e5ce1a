"""Generic stochastic-approximation recursion and its walk/urn instances.

    theta_{k} = theta_{k-1} - g_k h(theta_{k-1}) + g_k (dM_k + r_k),  k = 1, 2, ...

At step k the residual r_k is evaluated on the pre-step state (it is
F_{k-1}-measurable) and then ``noise`` advances the random state and returns
the martingale increment dM_k.  The adapters drive their state with the step
functions of :mod:`erwsa.walkers` on the same random streams as the compiled
simulators, so both code paths see identical draws.

``exact=True`` runs the recursion in rational arithmetic; that is what makes
"theta_n equals S_n / n" an identity rather than an approximation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable

import numpy as np

from . import theory
from .model import WalkConfig
from .streams import STEP_SIZE, replicate_stream
from .walkers import RpwConfig, UrnState, WalkState, erw_step, rpw_step


class SaDivergence(FloatingPointError):
    def __init__(self, step: int, theta):
        self.step, self.theta = step, theta
        super().__init__(f"non-finite iterate at step {step}; last finite theta = {theta!r}")


@dataclass(frozen=True)
class SaSpec:
    """One stochastic-approximation algorithm.

    ``h(theta)``, ``gamma(k)``, ``residual(k, theta, state)`` and
    ``noise(k, theta, state)`` must accept object arrays of Fractions when
    the spec is run with ``exact=True``.  ``init_state(seed)`` builds the
    random state for one trajectory.
    """

    dim: int
    theta0: Any
    h: Callable
    gamma: Callable[[int], Any]
    noise: Callable
    residual: Callable
    init_state: Callable[[int], Any] = lambda seed: np.random.default_rng(seed)
    jacobian: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


@dataclass
class SaTrajectory:
    checkpoints: np.ndarray
    theta: np.ndarray
    M: np.ndarray
    residual_abs: np.ndarray
    state: Any = None
    steps: dict | None = None


def _zeros(dim, exact):
    return np.array([Fraction(0)] * dim, dtype=object) if exact else np.zeros(dim)


def run_sa(spec: SaSpec, horizon: int, seed: int = 0, checkpoints=None, exact: bool = False, record_all: bool = False) -> SaTrajectory:
    """Iterate ``spec`` for ``horizon`` steps and record theta at ``checkpoints``.

    ``record_all`` keeps every (theta, g, h, dM, r) for reconstruction checks.
    Raises :class:`SaDivergence` on a non-finite iterate and ValueError when
    the step sequence is not positive and nonincreasing.
    """
    ck = np.arange(1, horizon + 1) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if ck.size == 0 or np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > horizon:
        raise ValueError("checkpoints must be strictly increasing within [1, horizon]")
    state = spec.init_state(seed)
    theta = np.array(spec.theta0, dtype=object if exact else float).reshape(spec.dim)
    if exact:
        theta = np.array([Fraction(x) for x in theta], dtype=object)
    M = _zeros(spec.dim, exact)
    rsum = 0.0
    dtype = object if exact else float
    th_out = np.empty((ck.size, spec.dim), dtype=dtype)
    m_out = np.empty((ck.size, spec.dim), dtype=dtype)
    r_out = np.empty(ck.size)
    rec = {"theta": [theta.copy()], "gamma": [], "h": [], "dM": [], "r": []} if record_all else None
    prev_g = None
    nxt = 0
    for k in range(1, horizon + 1):
        g = spec.gamma(k)
        if not g > 0 or (prev_g is not None and g > prev_g):
            raise ValueError(f"step sequence must be positive and nonincreasing (step {k}: {g})")
        prev_g = g
        hv = spec.h(theta)
        r = spec.residual(k, theta, state)
        dM = spec.noise(k, theta, state)
        new = theta - g * hv + g * (dM + r)
        if not exact and not np.all(np.isfinite(new)):
            raise SaDivergence(k, theta.copy())
        if rec is not None:
            for key, val in (("gamma", g), ("h", hv), ("dM", dM), ("r", r)):
                rec[key].append(val)
            rec["theta"].append(new.copy())
        theta = new
        M = M + dM
        rsum += float(np.sum(np.abs(np.asarray(r, dtype=float))))
        if k == ck[nxt]:
            th_out[nxt], m_out[nxt], r_out[nxt] = theta, M, rsum
            nxt += 1
            if nxt == ck.size:
                break
    return SaTrajectory(ck, th_out, m_out, r_out, state, rec)


def reconstruction_error(traj: SaTrajectory) -> float:
    """max over steps of |theta_k - theta_{k-1} + g h - g (dM + r)| (needs ``record_all``)."""
    s = traj.steps
    if s is None:
        raise ValueError("trajectory was run without record_all")
    worst = 0.0
    for k in range(len(s["gamma"])):
        g = s["gamma"][k]
        res = s["theta"][k + 1] - s["theta"][k] + g * s["h"][k] - g * (s["dM"][k] + s["r"][k])
        worst = max(worst, float(np.max(np.abs(np.asarray(res, dtype=float)))))
    return worst


def _harmonic(exact):
    return (lambda k: Fraction(1, k)) if exact else (lambda k: 1.0 / k)


# --------------------------------------------------------------------------
# walk adapter


@dataclass
class _ErwState:
    walk: WalkState
    z: np.ndarray


def erw_jacobian(rho, mu_Z: float, d: int) -> np.ndarray:
    """H with h(x, y) = (x, y) H: [[1 - rho, -rho mu_Z], [0, 1]] kron I_d."""
    return np.kron(np.array([[1 - float(rho), -float(rho) * mu_Z], [0.0, 1.0]]), np.eye(d))


def erw_sa_spec(config: WalkConfig, replicate: int = 0, exact: bool = False) -> SaSpec:
    """theta_n = (S_n / n, T_n / n) as a stochastic-approximation algorithm.

    h(x, y) = ((1 - rho) x, y - rho mu_Z x) with g_k = 1/k; a varying schedule
    contributes r_k = ((rho_k - rho) x, mu_Z (rho_k - rho) x).  ``seed`` in
    :func:`run_sa` is the walk's master seed; ``replicate`` selects the stream.
    """
    d = config.d
    conv = Fraction if exact else float
    pvals = config.schedule.values(config.horizon)
    if exact:
        pfrac = [Fraction(x) for x in pvals]
        rho_k = [(2 * d * p - 1) / (2 * d - 1) for p in pfrac]
        rho = Fraction(config.schedule.limit) if isinstance(config.schedule.limit, Fraction) else Fraction(float(config.schedule.limit))
        rho = (2 * d * rho - 1) / (2 * d - 1)
    else:
        rho_k = list(config.schedule.rho_values(config.horizon, d))
        rho = float(config.rho)
    mu = conv(config.steps.mean)
    memory_start = config.first_step == "memory"

    def split(theta):
        return theta[:d], theta[d:]

    def h(theta):
        x, y = split(theta)
        return np.concatenate([(1 - rho) * x, y - rho * mu * x])

    def mean_step(k, st):
        """E[sigma_k | F_{k-1}] as a d-vector."""
        if k == 1:
            if memory_start:
                return np.array([2 * (pfrac[1] if exact else pvals[1]) - 1], dtype=object if exact else float)
            return _zeros(d, exact)
        S = np.array([conv(int(s)) for s in st.walk.S], dtype=object) if exact else st.walk.S.astype(float)
        return rho_k[k] * S / (k - 1)

    def _state_x(k, st):
        if exact:
            return np.array([Fraction(int(s), k - 1) for s in st.walk.S], dtype=object)
        return st.walk.S / (k - 1)

    def noise(k, theta, st):
        m = mean_step(k, st)
        z = st.z[k - 1]
        before = st.walk.S.copy()
        erw_step(st.walk, pvals[k], z)
        sigma = st.walk.S - before
        sig = np.array([conv(int(s)) for s in sigma], dtype=object) if exact else sigma.astype(float)
        zz = conv(z)
        return np.concatenate([sig - m, sig * zz - mu * m])

    def init_state(seed):
        rng = replicate_stream(seed, replicate)
        if config.steps.is_constant:
            z = np.full(config.horizon, config.steps.mean)
        else:
            z = config.steps.sample(replicate_stream(seed, replicate, STEP_SIZE), config.horizon)
        return _ErwState(WalkState(d, rng, memory_start=memory_start), z)

    def residual(k, theta, st):
        if k == 1:
            m = mean_step(1, st)
            return np.concatenate([m, mu * m])
        x = _state_x(k, st)
        gap = rho_k[k] - rho
        return np.concatenate([gap * x, mu * gap * x])

    return SaSpec(
        dim=2 * d,
        theta0=_zeros(2 * d, exact),
        h=h,
        gamma=_harmonic(exact),
        noise=noise,
        residual=residual,
        init_state=init_state,
        jacobian=erw_jacobian(rho, float(mu), d),
        meta={"kind": "erw", "rho": float(rho), "mu_Z": float(mu), "d": d},
    )


# --------------------------------------------------------------------------
# urn adapter


def rpw_sa_spec(config: RpwConfig, replicate: int = 0, exact: bool = False) -> SaSpec:
    """theta_n = (W_n - E W_n) / n as a one-dimensional algorithm.

    h(x) = (1 - rho) x, g_k = 1/k, and
    r_k = -rho alpha0 (W_{k-1} - E W_{k-1}) / ((k-1)(alpha0 + k - 1)) for k >= 2.
    The exact means come from :func:`erwsa.theory.rpw_mean_sequence`.
    """
    if not config.theory_ready():
        raise ValueError("the urn recursion needs q_A q_B != 0")
    conv = Fraction if exact else float
    pA, pB, p0 = conv(config.pA), conv(config.pB), conv(config.p0)
    qB = 1 - pB
    rho = pA + pB - 1
    a0 = config.alpha0
    EW = theory.rpw_mean_sequence(config.horizon, config, exact=exact)

    def h(theta):
        return (1 - rho) * theta

    def residual(k, theta, st):
        if k == 1 or a0 == 0:
            return _zeros(1, exact)
        dev = conv(st.W) - EW[k - 1]
        return np.array([-rho * a0 * dev / ((k - 1) * (a0 + k - 1))], dtype=object if exact else float)

    def noise(k, theta, st):
        white_prob = p0 if st.total == 0 else Fraction(st.W, st.total) if exact else st.W / st.total
        mean = white_prob * pA + (1 - white_prob) * qB
        before = st.W
        rpw_step(st, config)
        return np.array([conv(st.W - before) - mean], dtype=object if exact else float)

    def init_state(seed):
        return UrnState(replicate_stream(seed, replicate), int(config.W0), config.alpha0)

    return SaSpec(
        dim=1,
        theta0=_zeros(1, exact),
        h=h,
        gamma=_harmonic(exact),
        noise=noise,
        residual=residual,
        init_state=init_state,
        jacobian=np.array([[1 - float(rho)]]),
        meta={"kind": "rpw", "rho": float(rho), "alpha0": a0},
    )
