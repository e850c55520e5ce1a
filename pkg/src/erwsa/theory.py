"""Closed-form limit constants.

Covariances are stored as a 2x2 ``base`` with the full matrix equal to
``kron(base, I_d) / d``, coordinates ordered (first block, second block).
Regime branches are selected by ``rho``; the critical case (rho = 1/2) has
its own formulas and must be requested with ``critical=True``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .model import MemorySchedule, classify_rho, rho_from_p

KAPPA1_BOUNDS = (3 / 8, (2 * math.pi) ** (2 / 3) * 3 / 8)


@dataclass(frozen=True)
class BlockCovariance:
    base: np.ndarray
    d: int
    labels: tuple = ("S", "T")
    regime: str = ""

    def __post_init__(self):
        b = np.asarray(self.base, dtype=float)
        if b.shape != (2, 2) or not np.allclose(b, b.T, rtol=0, atol=1e-14):
            raise ValueError("base must be a symmetric 2x2 matrix")
        if np.linalg.eigvalsh(b).min() < -1e-12:
            raise ValueError("base must be positive semidefinite")
        object.__setattr__(self, "base", b)

    def full(self) -> np.ndarray:
        """The 2d x 2d matrix kron(base, I_d) / d."""
        return np.kron(self.base, np.eye(self.d)) / self.d

    def entry(self, a: str, b: str) -> float:
        """Per-coordinate entry, e.g. ``entry("T", "T")`` = base[1, 1] / d."""
        i, j = self.labels.index(a), self.labels.index(b)
        return float(self.base[i, j]) / self.d


def _gap(rho, critical: bool):
    """|1 - 2 rho| with the regime it implies; rejects rho = 1/2 off the critical branch."""
    regime = classify_rho(rho)
    if critical:
        if regime != "critical":
            raise ValueError(f"critical branch requested but rho = {rho} != 1/2")
        return None, regime
    if regime == "critical":
        raise ValueError("rho = 1/2 has no diffusive/superdiffusive formula; pass critical=True")
    rho = float(rho)
    return (1 - 2 * rho if regime == "diffusive" else 2 * rho - 1), regime


def cov_TS(rho, mu_Z: float, sigma_Z: float, d: int, critical: bool = False) -> BlockCovariance:
    """Limit covariance of (S_n, T_n) under the regime's normalization."""
    a, regime = _gap(rho, critical)
    mu, s2 = float(mu_Z), float(sigma_Z) ** 2
    if critical:
        base = [[1.0, mu], [mu, mu * mu]]
    else:
        base = [[1 / a, mu / a], [mu / a, s2 + mu * mu / a]]
    return BlockCovariance(np.array(base), d, ("S", "T"), regime)


def cov_TC(rho, mu_Z: float, sigma_Z: float, d: int, critical: bool = False) -> BlockCovariance:
    """Limit covariance of (T_n, C_n) under the regime's normalization."""
    a, regime = _gap(rho, critical)
    mu, s2 = float(mu_Z), float(sigma_Z) ** 2
    if critical:
        base = mu * mu * np.array([[1.0, 2 / 3], [2 / 3, 4 / 9]])
    else:
        r = float(rho)
        b = 2 - r if regime == "diffusive" else 1 + r
        tt = s2 + mu * mu / a
        tc = s2 / 2 + mu * mu / (a * b)
        cc = s2 / 3 + 2 * mu * mu / (3 * a * b)
        base = np.array([[tt, tc], [tc, cc]])
    return BlockCovariance(base, d, ("T", "C"), regime)


def lil_constants(rho, mu_Z: float, sigma_Z: float, d: int, critical: bool = False) -> dict:
    """Almost-sure limsup constants of ||T_n|| and ||C_n|| under the LIL normalization."""
    tc = cov_TC(rho, mu_Z, sigma_Z, d, critical)
    return {
        "lil_T": math.sqrt(tc.entry("T", "T")),
        "lil_C": math.sqrt(tc.entry("C", "C")),
        "regime": tc.regime,
    }


# --------------------------------------------------------------------------
# Bessel zeros


def _bessel_reduced(x: float, nu: float) -> Decimal:
    """Gamma(nu+1) (2/x)^nu J_nu(x) by its ascending series, in 60-digit decimal.

    The series is entire and has the sign of J_nu on x > 0; high precision
    absorbs the cancellation for x up to about 40.
    """
    with localcontext() as ctx:
        ctx.prec = 60
        q = -(Decimal(x) ** 2) / 4
        nu1 = Decimal(nu) + 1
        term = Decimal(1)
        total = Decimal(1)
        tiny = Decimal(10) ** -45
        for k in range(1, 400):
            term = term * q / (k * (nu1 + k - 1))
            total += term
            if k > x and abs(term) < tiny:
                break
        return +total


def bessel_smallest_zero(nu: float, tol: float = 1e-13) -> float:
    """Smallest positive zero j_nu of the Bessel function J_nu, nu >= -1/2."""
    if nu < -0.5:
        raise ValueError("nu must be >= -1/2")
    f = lambda x: _bessel_reduced(x, nu)
    step = 0.25
    lo, flo = step / 2, f(step / 2)
    hi = None
    x = lo
    while x < 48.0:
        x2 = x + step
        fx2 = f(x2)
        if (fx2 < 0) != (flo < 0):
            hi = x2
            break
        x, flo = x2, fx2
        lo = x
    if hi is None:
        raise RuntimeError(f"no sign change of J_{nu} found below 48")
    sign_lo = flo < 0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == sign_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ChungConstants:
    d: int
    nu: float
    j_nu: float
    kappa: float | tuple
    EZ2: float
    chung_T: float
    chung_C: float | tuple


def kappa_bracket(d: int) -> tuple:
    """Proven bracket for the integrated-Brownian small-ball constant in dimension d."""
    lo, hi = KAPPA1_BOUNDS
    return (lo, hi) if d == 1 else (lo, d ** (4 / 3) * hi)


def chung_constants(d: int, EZ2: float, kappa=None) -> ChungConstants:
    """Chung-LIL constants of T_n and C_n; ``kappa`` defaults to the proven bracket."""
    if EZ2 <= 0:
        raise ValueError("E Z^2 must be positive")
    if d < 1:
        raise ValueError("d must be >= 1")
    nu = (d - 2) / 2
    j = bessel_smallest_zero(nu)
    chung_T = j * math.sqrt(EZ2 / (2 * d))
    cfun = lambda k: (3 * k) ** 1.5 * math.sqrt(EZ2 / d)
    if kappa is None:
        kappa = kappa_bracket(d)
    if isinstance(kappa, tuple):
        lo, hi = kappa
        if not 0 < lo <= hi:
            raise ValueError("kappa interval must be nonempty and positive")
        chung_C = (cfun(lo), cfun(hi))
    else:
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        chung_C = cfun(float(kappa))
    return ChungConstants(d, nu, j, kappa, float(EZ2), chung_T, chung_C)


# --------------------------------------------------------------------------
# gamma products and the superdiffusive limit


def _rho_lookup(rho):
    """Map a constant, a callable i -> rho_i, or an array indexed by i, to a callable."""
    if callable(rho):
        return rho
    if np.ndim(rho) == 0:
        r = float(rho)
        return lambda i: r
    arr = np.asarray(rho, dtype=float)
    return lambda i: float(arr[i])


def schedule_rho(schedule: MemorySchedule, d: int, n: int) -> np.ndarray:
    """Array with ``out[i] = rho_i`` for i <= n (``out[0]`` is the limit)."""
    return schedule.rho_values(n, d)


def gamma_product(m: int, n: int, rho, method: str = "auto") -> float:
    """gamma_{m,n} = prod_{i=m}^{n} (1 + rho_{i+1}/i); the empty product (n = m - 1) is 1.

    ``rho`` is a constant, a callable i -> rho_i, or an array with
    ``rho[i] = rho_i``.  ``method="auto"`` multiplies directly for n <= 1e4
    and sums logarithms above that.
    """
    if m < 1 or n < m - 1:
        raise ValueError("need 1 <= m <= n + 1")
    if n == m - 1:
        return 1.0
    if method == "auto":
        method = "direct" if n <= 10**4 else "log"
    i = np.arange(m, n + 1)
    if np.ndim(rho) == 0 and not callable(rho):
        r = np.full(i.size, float(rho))
    elif callable(rho):
        r = np.array([rho(k + 1) for k in i], dtype=float)
    else:
        r = np.asarray(rho, dtype=float)[i + 1]
    if method == "direct":
        out = 1.0
        for f in 1 + r / i:
            out *= f
        return out
    if method == "log":
        return math.exp(math.fsum(np.log1p(r / i)))
    raise ValueError(f"unknown method {method!r}")


def gamma_product_closed(m: int, n: int, rho: float) -> float:
    """Log-Gamma form Gamma(n+1+rho) Gamma(m) / (Gamma(n+1) Gamma(m+rho)) for constant rho."""
    rho = float(rho)
    return math.exp(math.lgamma(n + 1 + rho) + math.lgamma(m) - math.lgamma(n + 1) - math.lgamma(m + rho))


def gamma_sequence(n: int, rho) -> np.ndarray:
    """``out[k] = gamma_{2,k-1}`` for k = 1..n (``out[0]`` unused, set to 1)."""
    out = np.ones(n + 1)
    if n < 3:
        return out
    i = np.arange(2, n)
    if np.ndim(rho) == 0 and not callable(rho):
        r = np.full(i.size, float(rho))
    elif callable(rho):
        r = np.array([rho(k + 1) for k in i], dtype=float)
    else:
        r = np.asarray(rho, dtype=float)[i + 1]
    out[3:] = np.exp(np.cumsum(np.log1p(r / i)))
    return out


def c0_constant(rho: float) -> float:
    """lim gamma_{2,n-1} / n^rho = 1 / Gamma(2 + rho) for constant rho."""
    return 1 / math.gamma(2 + float(rho))


def xi_second_moment(rho, d: int) -> float:
    """Per-coordinate E[xi^2] = 1 / (d (2 rho - 1) Gamma(2 rho)), constant schedule."""
    if classify_rho(rho) != "superdiffusive":
        raise ValueError("xi exists only in the superdiffusive regime (rho > 1/2)")
    r = float(rho)
    return 1 / (d * (2 * r - 1) * math.gamma(2 * r))


def xi_moments(rho, d: int) -> dict:
    return {"mean": 0.0, "second_moment": xi_second_moment(rho, d)}


def xi_constant_general(schedule: MemorySchedule, d: int, n: int = 2**18) -> dict:
    """C with E[xi xi'] = (C/d) I_d for a general schedule.

    Iterates e_{k+1} = (1 + 2 rho_{k+1}/k) e_k + 1/d (e_k is the
    per-coordinate E S_k^2) and extrapolates e_k / k^{2 rho} with the
    known leading correction k^{1 - 2 rho}.  The truncation error is the gap
    between extrapolations at n/2 and n.
    """
    rho = float(schedule.rho(d))
    if rho <= 0.5:
        raise ValueError("needs a superdiffusive limit")
    rv = schedule.rho_values(n, d)
    k = np.arange(1, n)
    growth = 1 + 2 * rv[2:] / k
    e = np.empty(n + 1)
    e[1] = 1.0 / d
    for i in range(1, n):
        e[i + 1] = growth[i - 1] * e[i] + 1.0 / d
    f = lambda m: e[m] / m ** (2 * rho)
    q = 2.0 ** (1 - 2 * rho)
    rich = lambda m: (f(m) - q * f(m // 2)) / (1 - q)
    est, prev = rich(n), rich(n // 2)
    return {"C": d * est, "per_coordinate": est, "error": d * abs(est - prev), "horizon": n}


def rate_bound(n: int, schedule: MemorySchedule, d: int, tail: int | None = None) -> dict:
    """n^{1/2 - rho} + |sum_{i >= n} (rho_i - rho)/i|, the tail truncated at ``tail``."""
    rho = float(schedule.rho(d))
    tail = tail or 64 * n
    rv = schedule.rho_values(tail, d)
    i = np.arange(n, tail + 1)
    s = float(np.sum((rv[n : tail + 1] - rho) / i))
    return {"value": n ** (0.5 - rho) + abs(s), "tail_sum": s, "tail_horizon": tail}


# --------------------------------------------------------------------------
# play-the-winner urn


def _rpw_params(config, exact: bool):
    conv = (lambda x: Fraction(x)) if exact else float
    pA, pB, p0 = conv(config.pA), conv(config.pB), conv(config.p0)
    qA, qB = 1 - pA, 1 - pB
    if qA + qB == 0:
        raise ValueError("mean formulas need q_A + q_B > 0")
    return pA, pB, p0, qA, qB, pA + pB - 1, qB / (qA + qB)


def rpw_first_mean(config, exact: bool = False):
    pA, pB, p0, qA, qB, rho, v = _rpw_params(config, exact)
    a0 = config.alpha0
    if a0 > 0:
        return config.W0 + rho * Fraction(config.W0) / a0 + qB if exact else config.W0 + rho * config.W0 / a0 + qB
    return p0 * pA + (1 - p0) * qB


def rpw_mean(n: int, config, exact: bool = False):
    """E W_n via the product formula; ``exact=True`` returns a Fraction."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return Fraction(config.W0) if exact else float(config.W0)
    pA, pB, p0, qA, qB, rho, v = _rpw_params(config, exact)
    a0 = config.alpha0
    ew1 = rpw_first_mean(config, exact)
    if exact:
        prod = Fraction(1)
        for k in range(1, n):
            prod *= 1 + rho / (a0 + k)
    elif n <= 10**4:
        prod = 1.0
        for k in range(1, n):
            prod *= 1 + rho / (a0 + k)
    else:
        k = np.arange(1, n)
        prod = math.exp(math.fsum(np.log1p(rho / (a0 + k))))
    return (a0 + n) * v + prod * (ew1 - (a0 + 1) * v)


def rpw_mean_sequence(n: int, config, exact: bool = False) -> list | np.ndarray:
    """E W_k for k = 0..n by the one-step conditional-mean recursion."""
    pA, pB, p0, qA, qB, rho, v = _rpw_params(config, exact)
    a0 = config.alpha0
    out = [Fraction(config.W0) if exact else float(config.W0)]
    if n >= 1:
        out.append(rpw_first_mean(config, exact))
    for k in range(2, n + 1):
        w = out[-1]
        out.append(w + rho * w / (a0 + k - 1) + qB)
    return out if exact else np.array(out)


@dataclass(frozen=True)
class RpwClt:
    regime: str
    variance: float | None
    normalization: str


def rpw_clt_variance(pA: float, pB: float) -> RpwClt:
    """Limit variance of (W_n - n v) under sqrt(n) or sqrt(n log n); None if superdiffusive."""
    qA, qB = 1 - pA, 1 - pB
    if qA * qB == 0:
        raise ValueError("CLT variance needs q_A q_B != 0")
    s = qA + qB
    regime = classify_rho(Fraction(pA) + Fraction(pB) - 1 if isinstance(pA, Fraction) else pA + pB - 1)
    if regime == "diffusive":
        return RpwClt(regime, qA * qB / (s * s * (2 * s - 1)), "sqrt(n)")
    if regime == "critical":
        return RpwClt(regime, qA * qB / (s * s), "sqrt(n log n)")
    return RpwClt(regime, None, f"n^{pA + pB - 1:g}")


def erw_summary(p, d: int, mu_Z: float, sigma_Z: float) -> dict:
    """All regime constants for a constant-p walk, as used by the ``theory`` command."""
    rho = rho_from_p(p, d)
    regime = classify_rho(rho)
    crit = regime == "critical"
    ts = cov_TS(rho, mu_Z, sigma_Z, d, critical=crit)
    tc = cov_TC(rho, mu_Z, sigma_Z, d, critical=crit)
    out = {
        "rho": float(rho),
        "regime": regime,
        "variance_S": ts.entry("S", "S"),
        "variance_T": ts.entry("T", "T"),
        "cov_ST": ts.entry("S", "T"),
        "variance_C": tc.entry("C", "C"),
        "cov_TC": tc.entry("T", "C"),
        **{k: v for k, v in lil_constants(rho, mu_Z, sigma_Z, d, critical=crit).items() if k != "regime"},
    }
    if regime == "superdiffusive":
        out["xi_second_moment"] = xi_second_moment(rho, d)
    return out
