"""Domain types and regime arithmetic shared by every other module.

Memory parameters may be given as floats or as exact ratios
(``fractions.Fraction`` or strings such as ``"3/4"``).  Exact ratios keep the
critical-regime test exact; floats are compared with a 1e-12 tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Callable, Sequence

import numpy as np

CRITICAL_TOL = 1e-12

Number = float | Fraction


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}field '{field}': {message}")


def as_number(p) -> Number:
    """Coerce ``p`` to a Fraction when given as a ratio string or int, else float."""
    if isinstance(p, Fraction):
        return p
    if isinstance(p, str):
        return Fraction(p.strip())
    if isinstance(p, (int, np.integer)) and not isinstance(p, bool):
        return Fraction(int(p))
    if isinstance(p, Real):
        return float(p)
    raise TypeError(f"not a number: {p!r}")


def _check_dimension(d) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    return int(d)


def rho_from_p(p, d: int) -> Number:
    """Drift coefficient (2dp - 1)/(2d - 1) of the conditional step mean.

    Exact (a Fraction) for rational input.  Float input is evaluated with one
    correctly rounded division of integers; the float ``critical_p(d)`` maps
    to exactly 0.5.
    """
    d = _check_dimension(d)
    p = as_number(p)
    if not 0 <= p <= 1:
        raise ValueError(f"memory parameter must lie in [0, 1], got {p}")
    if isinstance(p, Fraction):
        return (2 * d * p - 1) / (2 * d - 1)
    if p == critical_p(d):
        # the correctly rounded p_d stands for the critical parameter itself
        return 0.5
    num, den = p.as_integer_ratio()
    return (2 * d * num - den) / ((2 * d - 1) * den)


def critical_p(d: int) -> float:
    """Memory parameter (2d+1)/(4d) separating diffusive from superdiffusive."""
    d = _check_dimension(d)
    return (2 * d + 1) / (4 * d)


def critical_p_exact(d: int) -> Fraction:
    d = _check_dimension(d)
    return Fraction(2 * d + 1, 4 * d)


# --------------------------------------------------------------------------
# memory schedules


@dataclass(frozen=True)
class PowerRule:
    """p_i = clip(p + amplitude * i**(-exponent), 0, 1); picklable for worker pools."""

    p: float
    amplitude: float
    exponent: float

    def __call__(self, i: int) -> float:
        return min(1.0, max(0.0, self.p + self.amplitude * i ** (-self.exponent)))


@dataclass(frozen=True)
class MemorySchedule:
    """Per-step memory parameters p_1, p_2, ... with limit ``limit``.

    ``kind`` is one of ``constant``, ``tabulated`` (explicit values, the limit
    is used past the end of the table) or ``rule`` (``rule(i)`` gives p_i).
    ``decay`` optionally records the claimed rate exponent of
    ``|mean(p_1..p_n) - p|``.
    """

    kind: str
    limit: Number
    table: tuple = ()
    rule: Callable[[int], float] | None = field(default=None, compare=False)
    decay: float | None = None

    def __post_init__(self):
        if self.kind not in ("constant", "tabulated", "rule"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not 0 <= self.limit <= 1:
            raise ValueError(f"limit p must lie in [0, 1], got {self.limit}")
        if self.kind == "tabulated":
            vals = np.asarray(self.table, dtype=float)
            if vals.size == 0:
                raise ValueError("tabulated schedule needs at least one value")
            if np.any((vals < 0) | (vals > 1)) or not np.all(np.isfinite(vals)):
                raise ValueError("tabulated memory parameters must lie in [0, 1]")
        if self.kind == "rule" and self.rule is None:
            raise ValueError("rule-based schedule needs a rule")

    @classmethod
    def constant(cls, p) -> "MemorySchedule":
        return cls("constant", as_number(p))

    @classmethod
    def tabulated(cls, values: Sequence[float], limit) -> "MemorySchedule":
        return cls("tabulated", as_number(limit), table=tuple(float(v) for v in values))

    @classmethod
    def from_rule(cls, rule: Callable[[int], float], limit, decay: float | None = None):
        return cls("rule", as_number(limit), rule=rule, decay=decay)

    @classmethod
    def power_law(cls, p, amplitude: float, exponent: float) -> "MemorySchedule":
        """p_i = clip(p + amplitude * i**(-exponent), 0, 1)."""
        p = as_number(p)
        return cls("rule", p, rule=PowerRule(float(p), float(amplitude), float(exponent)), decay=float(exponent))

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def p_at(self, i: int) -> Number:
        """Memory parameter used at step ``i`` (1-based)."""
        if i < 1:
            raise ValueError("steps are numbered from 1")
        if self.kind == "constant":
            return self.limit
        if self.kind == "tabulated":
            return self.table[i - 1] if i <= len(self.table) else self.limit
        v = self.rule(i)
        if not 0 <= v <= 1:
            raise ValueError(f"rule produced p_{i} = {v} outside [0, 1]")
        return v

    def values(self, n: int) -> np.ndarray:
        """Array ``out`` of length n + 1 with ``out[i] = p_i`` (``out[0]`` unused)."""
        out = np.empty(n + 1)
        out[0] = float(self.limit)
        if self.kind == "constant":
            out[1:] = float(self.limit)
        elif self.kind == "tabulated":
            k = min(n, len(self.table))
            out[1 : k + 1] = self.table[:k]
            out[k + 1 :] = float(self.limit)
        else:
            out[1:] = [self.p_at(i) for i in range(1, n + 1)]
        return out

    def rho(self, d: int) -> Number:
        return rho_from_p(self.limit, d)

    def rho_values(self, n: int, d: int) -> np.ndarray:
        d = _check_dimension(d)
        return (2 * d * self.values(n) - 1) / (2 * d - 1)

    def average_gap(self, n: int) -> dict:
        """Empirical decay of |mean(p_1..p_m) - p| at log-spaced m <= n.

        The fitted ``exponent`` is the slope of -log gap against log m; it is
        reported, not enforced.
        """
        vals = self.values(n)[1:]
        m = np.arange(1, n + 1)
        gap = np.abs(np.cumsum(vals) / m - float(self.limit))
        grid = np.unique(np.geomspace(1, n, num=min(n, 40)).astype(int))
        g = gap[grid - 1]
        ok = g > 0
        exponent = None
        if ok.sum() >= 3:
            slope = np.polyfit(np.log(grid[ok]), np.log(g[ok]), 1)[0]
            exponent = float(-slope)
        return {"m": grid.tolist(), "gap": g.tolist(), "exponent": exponent}


# --------------------------------------------------------------------------
# step sizes

_LAWS = {"constant": 1, "two-point": 3, "gaussian": 2, "uniform": 2}


@dataclass(frozen=True)
class StepSizeModel:
    """Law of the i.i.d. step sizes Z_i.

    Parameters by law: ``constant(c)``, ``two-point(a, b, q)`` (Z = a with
    probability q, else b), ``gaussian(mean, var)``, ``uniform(a, b)``.
    """

    law: str
    params: tuple

    def __post_init__(self):
        if self.law not in _LAWS:
            raise ValueError(f"unknown step-size law {self.law!r}")
        if len(self.params) != _LAWS[self.law]:
            raise ValueError(f"{self.law} takes {_LAWS[self.law]} parameters, got {len(self.params)}")
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        if self.law == "two-point" and not 0 <= self.params[2] <= 1:
            raise ValueError("two-point probability must lie in [0, 1]")
        if self.law == "gaussian" and self.params[1] < 0:
            raise ValueError("gaussian variance must be >= 0")
        if self.law == "uniform" and not self.params[0] < self.params[1]:
            raise ValueError("uniform law needs a < b")

    @classmethod
    def constant(cls, c: float = 1.0):
        return cls("constant", (c,))

    @classmethod
    def two_point(cls, a: float, b: float, q: float):
        return cls("two-point", (a, b, q))

    @classmethod
    def gaussian(cls, mean: float, var: float):
        return cls("gaussian", (mean, var))

    @classmethod
    def uniform(cls, a: float, b: float):
        return cls("uniform", (a, b))

    @classmethod
    def parse(cls, text: str) -> "StepSizeModel":
        """Parse ``law:p1,p2,...`` such as ``constant:1`` or ``two-point:0,2,0.5``."""
        law, _, rest = text.partition(":")
        law = law.strip().replace("_", "-")
        try:
            params = tuple(float(x) for x in rest.split(",")) if rest.strip() else ()
        except ValueError:
            raise ValueError(f"bad step-size parameters in {text!r}") from None
        return cls(law, params)

    def __str__(self):
        return f"{self.law}:" + ",".join(repr(x) for x in self.params)

    @property
    def is_constant(self) -> bool:
        return self.law == "constant"

    @property
    def mean(self) -> float:
        p = self.params
        if self.law == "constant":
            return p[0]
        if self.law == "two-point":
            return p[2] * p[0] + (1 - p[2]) * p[1]
        if self.law == "gaussian":
            return p[0]
        return (p[0] + p[1]) / 2

    @property
    def variance(self) -> float:
        p = self.params
        if self.law == "constant":
            return 0.0
        if self.law == "two-point":
            return p[2] * (1 - p[2]) * (p[0] - p[1]) ** 2
        if self.law == "gaussian":
            return p[1]
        return (p[1] - p[0]) ** 2 / 12

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2

    @property
    def has_higher_moment(self) -> bool:
        # every supported law has moments of all orders
        return True

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        p = self.params
        if self.law == "constant":
            return np.full(size, p[0])
        if self.law == "two-point":
            return np.where(rng.random(size) < p[2], p[0], p[1])
        if self.law == "gaussian":
            return rng.normal(p[0], math.sqrt(p[1]), size)
        return rng.uniform(p[0], p[1], size)


# --------------------------------------------------------------------------
# walk configuration and regimes


def geometric_checkpoints(n: int, k: int = 40) -> tuple:
    """Distinct times floor(n**(j/k)), j = 0..k, always ending at n."""
    pts = np.unique(np.floor(np.power(float(n), np.arange(k + 1) / k)).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= n)]
    if pts[-1] != n:
        pts = np.append(pts, n)
    return tuple(int(x) for x in pts)


@dataclass(frozen=True)
class WalkConfig:
    """One ERW experiment.

    ``first_step`` is ``"uniform"`` (each of the 2d directions with
    probability 1/(2d)) or ``"memory"`` (d = 1 only: +1 with probability p_1,
    the classical one-dimensional start).
    """

    d: int
    schedule: MemorySchedule
    steps: StepSizeModel = StepSizeModel.constant(1.0)
    horizon: int = 1000
    checkpoints: tuple = ()
    seed: int = 0
    replicates: int = 1
    first_step: str = "uniform"

    def __post_init__(self):
        _check_dimension(self.d)
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        cps = self.checkpoints or geometric_checkpoints(self.horizon)
        cps = tuple(int(c) for c in cps)
        if not cps:
            raise ValueError("checkpoints must be nonempty")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if cps[0] < 1 or cps[-1] > self.horizon:
            raise ValueError("checkpoints must lie in [1, horizon]")
        object.__setattr__(self, "checkpoints", cps)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.first_step not in ("uniform", "memory"):
            raise ValueError("first_step must be 'uniform' or 'memory'")
        if self.first_step == "memory" and self.d != 1:
            raise ValueError("first_step='memory' is only defined for d = 1")

    @property
    def rho(self) -> Number:
        return self.schedule.rho(self.d)

    def replace(self, **changes) -> "WalkConfig":
        import dataclasses

        if "horizon" in changes and "checkpoints" not in changes:
            changes["checkpoints"] = ()
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class RegimeReport:
    rho: Number
    regime: str
    critical_p: float
    normalization: str

    def scale(self, n) -> np.ndarray:
        """Numerical value of the normalization at time(s) n."""
        n = np.asarray(n, dtype=float)
        if self.regime == "diffusive":
            return np.sqrt(n)
        if self.regime == "critical":
            return np.sqrt(n * np.log(n))
        return n ** float(self.rho)


def classify_rho(rho: Number) -> str:
    if isinstance(rho, Fraction):
        half_gap = rho - Fraction(1, 2)
        if half_gap == 0:
            return "critical"
        return "diffusive" if half_gap < 0 else "superdiffusive"
    if abs(rho - 0.5) <= CRITICAL_TOL:
        return "critical"
    return "diffusive" if rho < 0.5 else "superdiffusive"


def regime_classify(schedule: MemorySchedule, d: int) -> RegimeReport:
    """Regime of the walk, decided by the limit memory parameter."""
    rho = schedule.rho(d)
    regime = classify_rho(rho)
    norm = {"diffusive": "sqrt(n)", "critical": "sqrt(n log n)"}.get(regime, f"n^{float(rho):g}")
    return RegimeReport(rho=rho, regime=regime, critical_p=critical_p(d), normalization=norm)
