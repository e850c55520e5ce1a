"""Estimators and verification procedures."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy.special import kolmogorov, ndtr

from . import theory
from .gaussian import diffusive_coefficients
from .model import MemorySchedule, classify_rho
from .streams import block_stream, chunks

# --------------------------------------------------------------------------
# streaming moments


class MomentAccumulator:
    """Count, mean vector and centered second-moment matrix; mergeable (Chan et al.)."""

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    def add(self, samples) -> "MomentAccumulator":
        """Add one d-vector or a (m, d) batch of rows."""
        x = np.asarray(samples, dtype=float)
        x = x.reshape(-1, self.dim) if x.ndim != 1 or self.dim == 1 else x.reshape(1, self.dim)
        if x.shape[0] == 0:
            return self
        other = MomentAccumulator(self.dim)
        other.count = x.shape[0]
        other.mean = x.mean(axis=0)
        c = x - other.mean
        other.m2 = c.T @ c
        return self.merge(other)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        n = self.count + other.count
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return self
        delta = other.mean - self.mean
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / n)
        self.mean = self.mean + delta * (other.count / n)
        self.count = n
        return self

    def copy(self) -> "MomentAccumulator":
        out = MomentAccumulator(self.dim)
        out.count, out.mean, out.m2 = self.count, self.mean.copy(), self.m2.copy()
        return out

    def finalize(self) -> dict:
        if self.count < 2:
            raise ValueError("need at least two samples for a covariance")
        return {"count": self.count, "mean": self.mean.copy(), "covariance": self.m2 / (self.count - 1)}


def accumulate(acc: MomentAccumulator, sample) -> MomentAccumulator:
    return acc.add(sample)


def merge(a: MomentAccumulator, b: MomentAccumulator) -> MomentAccumulator:
    """New accumulator equal to a followed by b; the inputs are unchanged."""
    return a.copy().merge(b)


def finalize(acc: MomentAccumulator) -> dict:
    return acc.finalize()


def tree_reduce(accs: list) -> MomentAccumulator:
    """Pairwise reduction in index order; deterministic for a fixed list."""
    if not accs:
        raise ValueError("nothing to reduce")
    layer = [a.copy() for a in accs]
    while len(layer) > 1:
        layer = [merge(layer[i], layer[i + 1]) if i + 1 < len(layer) else layer[i] for i in range(0, len(layer), 2)]
    return layer[0]


# --------------------------------------------------------------------------
# Kolmogorov-Smirnov against a centered normal


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    n: int


def ks_normal(samples, variance: float, lattice: float | None = None, seed: int = 0) -> KsResult:
    """D = sup |F_emp - Phi(./sqrt(variance))| with the asymptotic Kolmogorov p-value.

    For lattice-valued data pass the lattice spacing: each sample is then
    spread uniformly over its cell (seeded by ``seed``), which removes the
    atoms a continuous reference law can never match.
    """
    if variance <= 0:
        raise ValueError("variance must be positive")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    if lattice is not None:
        rng = np.random.default_rng(seed)
        x = x + lattice * (rng.random(x.size) - 0.5)
    x = np.sort(x)
    n = x.size
    F = ndtr(x / math.sqrt(variance))
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    return KsResult(D, float(kolmogorov(math.sqrt(n) * D)), n)


# --------------------------------------------------------------------------
# superdiffusive limit


@dataclass
class XiEstimate:
    samples: np.ndarray
    mean: np.ndarray
    second_moment: np.ndarray
    se_mean: np.ndarray
    se_second: np.ndarray
    n: int
    normalization: str
    scale: float
    rate: dict
    T_samples: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _superdiffusive_rho(schedule: MemorySchedule, d: int) -> float:
    rho = schedule.rho(d)
    if classify_rho(rho) != "superdiffusive":
        raise ValueError("xi estimation needs a superdiffusive schedule (rho > 1/2)")
    return float(rho)


def xi_scale(n: int, schedule: MemorySchedule, d: int, normalization: str = "gamma") -> float:
    """Divisor turning S_n into an estimate of xi.

    ``"power"``: n^rho.  ``"gamma"``: gamma_{2,n-1} / C0 with C0 = lim gamma_{2,m-1}/m^rho,
    i.e. xi_hat = C0 * eta_n with the martingale eta_n = S_n / gamma_{2,n-1}.
    """
    rho = _superdiffusive_rho(schedule, d)
    if normalization == "power":
        return n**rho
    if normalization != "gamma":
        raise ValueError("normalization must be 'gamma' or 'power'")
    if schedule.is_constant:
        g = theory.gamma_product_closed(2, n - 1, rho) if n > 2 else 1.0
        return g / theory.c0_constant(rho)
    rv = schedule.rho_values(max(n, 2**20), d)
    g = theory.gamma_product(2, n - 1, rv)
    far = rv.size - 1
    c0 = theory.gamma_product(2, far - 1, rv) / far**rho
    return g / c0


def estimate_xi(S_n, n: int, schedule: MemorySchedule, d: int, normalization: str = "gamma", T_n=None, mu_Z: float = 1.0) -> XiEstimate:
    """Per-path xi estimates from S_n (shape (R, d)); optional T_n gives mu_Z xi."""
    S = np.asarray(S_n, dtype=float).reshape(-1, d)
    scale = xi_scale(n, schedule, d, normalization)
    xi = S / scale
    R = xi.shape[0]
    m2 = (xi**2).mean(axis=0)
    out = XiEstimate(
        samples=xi,
        mean=xi.mean(axis=0),
        second_moment=m2,
        se_mean=xi.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(d, np.nan),
        se_second=(xi**2).std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.full(d, np.nan),
        n=n,
        normalization=normalization,
        scale=scale,
        rate=theory.rate_bound(n, schedule, d),
    )
    if T_n is not None:
        out.T_samples = np.asarray(T_n, dtype=float).reshape(-1, d) / scale
        out.meta["mu_Z"] = mu_Z
    return out


# --------------------------------------------------------------------------
# almost-sure CLT


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function with its declared sup-norm bound."""

    __test__ = False  # not a pytest class

    f: Callable[[np.ndarray], np.ndarray]
    bound: float
    name: str = "f"

    def __post_init__(self):
        if self.bound is None or not math.isfinite(self.bound):
            raise ValueError("only bounded test functions are supported")


def cos_test(u) -> TestFunction:
    u = np.asarray(u, dtype=float)
    return TestFunction(lambda x: np.cos(x @ u), 1.0, f"cos(<x,{u.tolist()}>)")


def gaussian_cos_expectation(u, cov) -> float:
    """E cos(<X, u>) = exp(-u' cov u / 2) for X ~ N(0, cov)."""
    u = np.asarray(u, dtype=float)
    return math.exp(-0.5 * float(u @ np.asarray(cov) @ u))


def gaussian_expectation_mc(f: TestFunction, cov, draws: int = 10**6, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(np.asarray(cov) + 1e-15 * np.eye(len(cov)))
    x = rng.standard_normal((draws, len(cov))) @ L.T
    v = f.f(x)
    return {"value": float(v.mean()), "se": float(v.std(ddof=1) / math.sqrt(draws))}


def as_clt_log_average(times, values, f: TestFunction, regime: str = "diffusive", horizon: int | None = None) -> dict:
    """Logarithmic average of f(values_k / norm_k) along one path.

    diffusive: (1/log n) sum_{k<=n} f(x_k/sqrt k)/k;
    critical:  (1/log log n) sum_{2<=k<=n} f(x_k/sqrt(k log k))/(k log k).
    Every k in 1..n gets its exact weight; f is evaluated at the nearest
    recorded time at or below k (times must start at 1), and the weight
    carried by unrecorded k is reported with the bias bound 2 * bound * weight.
    """
    t = np.asarray(times, dtype=np.int64)
    x = np.asarray(values, dtype=float)
    x = x.reshape(t.size, -1)
    n = int(horizon or t[-1])
    if t[0] != 1 and regime == "diffusive":
        raise ValueError("recorded times must start at k = 1")
    k = np.arange(1, n + 1, dtype=float)
    if regime == "diffusive":
        w = 1 / k
        norm = np.sqrt(t)
        total = math.log(n)
    elif regime == "critical":
        w = np.zeros(n)
        w[1:] = 1 / (k[1:] * np.log(k[1:]))
        norm = np.sqrt(np.maximum(t * np.log(np.maximum(t, 2)), 1e-300))
        total = math.log(math.log(n))
    else:
        raise ValueError("regime must be 'diffusive' or 'critical'")
    fv = np.asarray(f.f(x / norm[:, None]), dtype=float)
    if np.any(np.abs(fv) > f.bound * (1 + 1e-12)):
        raise ValueError("test function exceeds its declared bound")
    # weight of each recorded time: all k from it up to the next recorded time
    owner = np.searchsorted(t, np.arange(1, n + 1), side="right") - 1
    valid = owner >= 0
    wsum = np.bincount(owner[valid], weights=w[valid], minlength=t.size)
    value = float(np.dot(wsum, fv) / total)
    recorded = np.zeros(n, dtype=bool)
    recorded[t[t <= n] - 1] = True
    unrec = float(w[~recorded].sum() / total)
    return {"value": value, "unrecorded_weight": unrec, "bias_bound": 2 * f.bound * unrec, "normalizer": total, "n": n}


# --------------------------------------------------------------------------
# law of the iterated logarithm diagnostics


def lil_scale(n, regime: str = "diffusive") -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if regime == "critical":
        return np.sqrt(2 * n * np.log(n) * np.log(np.log(np.log(n))))
    return np.sqrt(2 * n * np.log(np.log(n)))


def lil_track(times, values, constant: float, regime: str = "diffusive", center=None, start: int = 100) -> dict:
    """Running maxima of ||x_n|| / phi(n) over checkpoints n >= ``start``.

    ``values`` has shape (R, K, d).  ``center`` (same shape) is subtracted
    first, e.g. mu_Z n^rho xi_hat in the superdiffusive case.  This is a
    diagnostic: the median per-path ratio to ``constant`` is flagged when it
    falls outside [0.3, 1.5].  The batch maximum grows with the number of
    paths (extreme-value effect) and is reported, not judged.
    """
    t = np.asarray(times)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[None]
    if center is not None:
        v = v - np.asarray(center, dtype=float).reshape(v.shape)
    keep = t >= start
    if keep.sum() < 10:
        raise ValueError("need at least 10 checkpoints at or beyond n = start")
    r = np.linalg.norm(v[:, keep, :], axis=2) / lil_scale(t[keep], regime)
    per_path = r.max(axis=1)
    med = float(np.median(per_path)) / constant
    return {
        "per_path_max": per_path,
        "batch_max": float(per_path.max()),
        "median_ratio": med,
        "batch_max_ratio": float(per_path.max()) / constant,
        "flag": not (0.3 <= med <= 1.5),
        "constant": constant,
    }


# --------------------------------------------------------------------------
# small-ball probabilities


def brownian_sup_prob(eps, T: float = 1.0) -> np.ndarray:
    """P(sup_{t<=T} |B_t| < eps) by the eigenfunction series (small eps/sqrt T)
    or the alternating reflection sum (large eps/sqrt T)."""
    e = np.atleast_1d(np.asarray(eps, dtype=float)) / math.sqrt(T)
    out = np.empty_like(e)
    for i, a in enumerate(e):
        if a <= 1.0:
            k = np.arange(0, 60)
            out[i] = 4 / math.pi * np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * math.pi**2 / (8 * a * a)))
        else:
            k = np.arange(-40, 41)
            out[i] = np.sum((-1.0) ** np.abs(k) * (ndtr((2 * k + 1) * a) - ndtr((2 * k - 1) * a)))
    return out


@dataclass(frozen=True)
class SmallBallProcess:
    """I(t) = sigma1 G^(rho1) + sigma2 G^(rho2) on [0, 1] in dimension d.

    ``integrated=True`` replaces the process by t^-alpha int_0^t I(s) ds.
    Standard Brownian motion is the default.
    """

    rho1: float = 0.0
    rho2: float = 0.0
    sigma1: float = 1.0
    sigma2: float = 0.0
    d: int = 1
    integrated: bool = False
    alpha: float = 0.0

    def __post_init__(self):
        if not (self.rho1 < 0.5 and self.rho2 < 0.5):
            raise ValueError("exponents must be < 1/2")

    @property
    def diffusion(self) -> float:
        return self.sigma1**2 + self.sigma2**2


@dataclass
class SmallBallEstimate:
    epsilon: np.ndarray
    log_prob: np.ndarray
    se: np.ndarray
    prob: np.ndarray
    hits: np.ndarray
    trials: int
    grid: int
    upper_bound: np.ndarray
    meta: dict = field(default_factory=dict)


@numba.njit(cache=True)
def _small_ball_block(rng, ntrial, N, d, coef1, sd1, coef2, sd2, s1, s2, use2, integ, tscale, dt, eps, bridge, bvar, stride, sum_w, sum_w2, hits):
    E = eps.size
    g1 = np.zeros(d)
    g2 = np.zeros(d)
    acc = np.zeros(d)
    prev = np.zeros(d)
    w = np.ones(E)
    for _ in range(ntrial):
        for c in range(d):
            g1[c] = 0.0
            g2[c] = 0.0
            acc[c] = 0.0
            prev[c] = 0.0
        for j in range(E):
            w[j] = 1.0
        lo = 0
        yprev = 0.0
        until_check = stride
        for k in range(N):
            r2 = 0.0
            for c in range(d):
                g1[c] = coef1[k] * g1[c] + sd1[k] * rng.standard_normal()
                v = s1 * g1[c]
                if use2:
                    g2[c] = coef2[k] * g2[c] + sd2[k] * rng.standard_normal()
                    v += s2 * g2[c]
                if integ:
                    acc[c] += 0.5 * (prev[c] + v) * dt[k]
                    prev[c] = v
                    y = tscale[k] * acc[c]
                else:
                    y = v
                r2 += y * y
            until_check -= 1
            if until_check:
                continue
            until_check = stride
            r = math.sqrt(r2)
            while lo < E and r >= eps[lo]:
                w[lo] = 0.0
                lo += 1
            if lo == E:
                break
            if bridge:
                # d = 1: probability the bridge between checked points leaves (-eps, eps)
                y = g1[0] * s1 + (g2[0] * s2 if use2 else 0.0)
                for j in range(lo, E):
                    a = eps[j]
                    up = 2.0 * (a - yprev) * (a - y) / bvar
                    dn = 2.0 * (a + yprev) * (a + y) / bvar
                    if up > 40.0 and dn > 40.0:
                        break  # negligible here and for every larger eps
                    pc = math.exp(-up) + math.exp(-dn)
                    w[j] *= max(0.0, 1.0 - pc)
                yprev = y
        for j in range(lo, E):
            sum_w[j] += w[j]
            sum_w2[j] += w[j] * w[j]
            hits[j] += 1


@numba.njit(cache=True)
def _small_ball_scalar(rng, ntrial, N, coef, sd, scale, eps, stride, sum_w, sum_w2, hits):
    """Fast path of :func:`_small_ball_block`: d = 1, one component, no integral, no bridge."""
    E = eps.size
    for _ in range(ntrial):
        g = 0.0
        lo = 0
        until_check = stride
        for k in range(N):
            g = coef[k] * g + sd[k] * rng.standard_normal()
            until_check -= 1
            if until_check:
                continue
            until_check = stride
            r = abs(scale * g)
            while lo < E and r >= eps[lo]:
                lo += 1
            if lo == E:
                break
        for j in range(lo, E):
            sum_w[j] += 1.0
            sum_w2[j] += 1.0
            hits[j] += 1


def _grid_inputs(proc: SmallBallProcess, N: int):
    t = np.arange(1, N + 1) / N
    c1, s1 = diffusive_coefficients(proc.rho1, t)
    c2, s2 = diffusive_coefficients(proc.rho2, t)
    dt = np.full(N, 1.0 / N)
    tscale = t ** (-proc.alpha) if proc.integrated else np.ones(N)
    return c1, s1, c2, s2, dt, tscale


def _small_ball_run(args, a, b):
    proc, N, eps, bridge, stride, seed, block = args
    c1, sd1, c2, sd2, dt, tscale = _grid_inputs(proc, N)
    E = eps.size
    # per-block sums, reduced later in block order so the result ignores the worker split
    sw, sw2, hits = np.zeros((b - a, E)), np.zeros((b - a, E)), np.zeros((b - a, E), dtype=np.int64)
    bvar = proc.diffusion * stride / N
    for i, blk in enumerate(range(a, b)):
        rng = block_stream(seed, blk, tag=7)
        if proc.d == 1 and not proc.integrated and not bridge and proc.sigma2 == 0.0:
            _small_ball_scalar(rng, block, N, c1, sd1, proc.sigma1, eps, stride, sw[i], sw2[i], hits[i])
            continue
        _small_ball_block(rng, block, N, proc.d, c1, sd1, c2, sd2, proc.sigma1, proc.sigma2, proc.sigma2 != 0.0, proc.integrated, tscale, dt, eps, bridge, bvar, stride, sw[i], sw2[i], hits[i])
    return sw, sw2, hits


def _ordered_sum(rows: np.ndarray) -> np.ndarray:
    out = np.zeros(rows.shape[1])
    for r in rows:
        out += r
    return out


def small_ball_log_prob(
    proc: SmallBallProcess,
    epsilon,
    trials: int,
    grid: int = 2**12,
    seed: int = 0,
    bridge: bool = False,
    stride: int = 1,
    block: int = 2**14,
    workers: int = 1,
) -> SmallBallEstimate:
    """Estimate log P(sup_{t in grid} ||X(t)|| < eps) for each eps.

    Paths are simulated once on the uniform grid of ``grid`` points and
    abandoned as soon as they leave the largest ball.  ``stride`` checks the
    sup only at every stride-th point of the same path (so coarser checking
    can only raise the estimate).  ``bridge`` (d = 1, non-integrated) weights
    each surviving path by the Brownian-bridge probability of staying inside
    between checked points.  With zero hits the entry is the rule-of-three
    95% upper bound log(3/trials) and ``upper_bound`` is set.
    """
    eps = np.sort(np.atleast_1d(np.asarray(epsilon, dtype=float)))
    if np.any(eps <= 0):
        raise ValueError("epsilon must be positive")
    if bridge and (proc.d != 1 or proc.integrated):
        raise ValueError("bridge correction is implemented for one-dimensional, non-integrated processes")
    if grid % stride:
        raise ValueError("stride must divide the grid size")
    nblocks = -(-trials // block)
    total = nblocks * block
    args = (proc, grid, eps, bridge, stride, seed, block)
    spans = chunks(nblocks, max(1, -(-nblocks // max(1, workers))))
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_small_ball_run, [args] * len(spans), [s[0] for s in spans], [s[1] for s in spans]))
    else:
        parts = [_small_ball_run(args, a, b) for a, b in spans]
    sw = _ordered_sum(np.concatenate([p[0] for p in parts]))
    sw2 = _ordered_sum(np.concatenate([p[1] for p in parts]))
    hits = np.concatenate([p[2] for p in parts]).sum(axis=0)
    p = sw / total
    zero = hits == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        var_w = np.maximum(sw2 / total - p * p, 0.0)
        se = np.where(zero, np.nan, np.sqrt(var_w / total) / p)
        logp = np.where(zero, math.log(3 / total), np.log(np.where(zero, 1.0, p)))
    return SmallBallEstimate(eps, logp, se, p, hits, total, grid, zero, {"stride": stride, "bridge": bridge, "process": proc})


def fit_small_ball_constant(estimate: SmallBallEstimate | None = None, exponent: float = 2.0, intercept: bool = True, epsilon=None, log_prob=None, se=None) -> dict:
    """Weighted least squares of log P = a - c eps^(-exponent); returns c.

    Either pass a :class:`SmallBallEstimate` (weights 1/se^2) or explicit
    ``epsilon``/``log_prob`` (optional ``se``).  Needs >= 3 distinct eps
    spanning a factor >= 2.
    """
    if estimate is not None:
        ok = ~estimate.upper_bound
        eps, y, s = estimate.epsilon[ok], estimate.log_prob[ok], estimate.se[ok]
    else:
        eps = np.asarray(epsilon, dtype=float)
        y = np.asarray(log_prob, dtype=float)
        s = None if se is None else np.asarray(se, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if np.unique(eps).size < 3 or eps.max() / eps.min() < 2:
        raise ValueError("need at least 3 distinct epsilon values spanning a factor of 2")
    x = -(eps ** (-exponent))
    A = np.column_stack([x, np.ones_like(x)]) if intercept else x[:, None]
    w = np.ones_like(y) if s is None or not np.all(np.isfinite(s)) or np.any(s <= 0) else 1 / s
    coef, *_ = np.linalg.lstsq(A * w[:, None], y * w, rcond=None)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValueError("degenerate design")
    fitted = A @ coef
    resid = y - fitted
    cov = None
    if s is not None and np.all(np.isfinite(s)) and np.all(s > 0):
        cov = np.linalg.inv((A * w[:, None] ** 2).T @ A)
    return {
        "constant": float(coef[0]),
        "intercept": float(coef[1]) if intercept else 0.0,
        "residual": float(np.sqrt(np.mean(resid**2))),
        "constant_se": float(math.sqrt(cov[0, 0])) if cov is not None else None,
        "exponent": exponent,
    }
