"""Exact samplers for the Gaussian limit processes and path integration.

All samplers draw the exact finite-dimensional law on the requested times
(no Euler steps).  Values have shape (size, K, d) for K times, or (K, d)
when ``size`` is None.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class GaussianGrid:
    times: np.ndarray
    values: np.ndarray
    tag: str
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_csv(self, path, sample: int = 0) -> None:
        """Write ``time, v_1..v_d`` rows for one sample path."""
        vals = self.values if self.values.ndim == 2 else self.values[sample]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time"] + [f"v_{k + 1}" for k in range(vals.shape[1])])
            for t, row in zip(self.times, vals):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])


def _times(times, lower: float = 0.0, strict: bool = True) -> np.ndarray:
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0 or np.any(np.diff(t) <= 0):
        raise ValueError("times must be nonempty and strictly increasing")
    if (strict and t[0] <= lower) or (not strict and t[0] < lower):
        raise ValueError(f"times must be {'>' if strict else '>='} {lower}")
    return t


def _normals(rng, size, K, d):
    shape = (K, d) if size is None else (size, K, d)
    return rng.standard_normal(shape)


def _walk_from(coef, sd, eps):
    """x_0 = sd_0 e_0, x_k = coef_k x_{k-1} + sd_k e_k along the time axis."""
    ax = eps.ndim - 2
    shape = [1] * eps.ndim
    shape[ax] = -1
    if np.all(coef == 1):
        return np.cumsum(np.reshape(sd, shape) * eps, axis=ax)
    out = np.empty_like(eps)
    idx = lambda k: (slice(None),) * ax + (k,)
    out[idx(0)] = sd[0] * eps[idx(0)]
    for k in range(1, eps.shape[ax]):
        out[idx(k)] = coef[k] * out[idx(k - 1)] + sd[k] * eps[idx(k)]
    return out


def diffusive_coefficients(rho: float, t: np.ndarray):
    """Copy coefficients and innovation standard deviations of the exact recursion."""
    a = 1 - 2 * rho
    coef = np.ones_like(t)
    coef[1:] = (t[1:] / t[:-1]) ** rho
    var = np.empty_like(t)
    var[0] = t[0] / a
    var[1:] = t[1:] ** (2 * rho) * (t[1:] ** a - t[:-1] ** a) / a
    return coef, np.sqrt(var)


def sample_G_diffusive(rho: float, times, d: int, rng: np.random.Generator, size: int | None = None) -> GaussianGrid:
    """G_t = t^rho int_0^t s^-rho dB(s), rho < 1/2; Cov(G_s, G_t) = (st)^rho s^(1-2rho)/(1-2rho) for s <= t."""
    if not rho < 0.5:
        raise ValueError("the diffusive limit process needs rho < 1/2")
    t = _times(times)
    coef, sd = diffusive_coefficients(rho, t)
    vals = _walk_from(coef, sd, _normals(rng, size, t.size, d))
    return GaussianGrid(t, vals, "G_diffusive", {"rho": rho, "d": d})


def sample_G_hat(times, d: int, rng: np.random.Generator, size: int | None = None) -> GaussianGrid:
    """sqrt(t) B(log t) for t >= 1 (the critical limit process, zero at t = 1)."""
    t = _times(times, 1.0, strict=False)
    s = np.log(t)
    ds = np.diff(np.concatenate([[0.0], s]))
    B = _walk_from(np.ones_like(t), np.sqrt(ds), _normals(rng, size, t.size, d))
    vals = np.sqrt(t)[:, None] * B
    return GaussianGrid(t, vals, "G_hat", {"d": d})


def sample_G_super(rho: float, times, d: int, rng: np.random.Generator, size: int | None = None) -> GaussianGrid:
    """t^(1-rho)/sqrt(2rho-1) B(t^(2rho-1)), rho > 1/2; Cov(G_s, G_t) = (st)^rho t^(1-2rho)/(2rho-1) for s <= t."""
    if not rho > 0.5:
        raise ValueError("the superdiffusive limit process needs rho > 1/2")
    t = _times(times)
    s = t ** (2 * rho - 1)
    ds = np.diff(np.concatenate([[0.0], s]))
    B = _walk_from(np.ones_like(t), np.sqrt(ds), _normals(rng, size, t.size, d))
    vals = (t ** (1 - rho) / math.sqrt(2 * rho - 1))[:, None] * B
    return GaussianGrid(t, vals, "G_super", {"rho": rho, "d": d})


def sample_brownian(times, d: int, rng: np.random.Generator, size: int | None = None) -> GaussianGrid:
    g = sample_G_diffusive(0.0, times, d, rng, size)
    g.tag = "BM"
    return g


def sample_I(rho1: float, rho2: float, sigma1: float, sigma2: float, times, d: int, rng: np.random.Generator, size: int | None = None) -> GaussianGrid:
    """sigma1 G^(rho1) + sigma2 G^(rho2) from independent children ``rng.spawn(2)``."""
    if not (rho1 < 0.5 and rho2 < 0.5):
        raise ValueError("both exponents must be < 1/2")
    r1, r2 = rng.spawn(2)
    g1 = sample_G_diffusive(rho1, times, d, r1, size)
    g2 = sample_G_diffusive(rho2, times, d, r2, size)
    vals = sigma1 * g1.values + sigma2 * g2.values
    return GaussianGrid(g1.times, vals, "I", {"rho1": rho1, "rho2": rho2, "sigma1": sigma1, "sigma2": sigma2, "d": d})


def mixture_variance(rho1, rho2, sigma1, sigma2, t=1.0) -> float:
    return t * (sigma1**2 / (1 - 2 * rho1) + sigma2**2 / (1 - 2 * rho2))


def integrate_path(grid: GaussianGrid, origin: float = 0.0) -> GaussianGrid:
    """Cumulative trapezoid integral from ``origin``, the process taken as 0 there
    and linear up to the first grid time.  ``meta['max_dt2']`` is the O(max dt^2)
    scale of the discretization error."""
    t = grid.times
    if t.size < 2:
        raise ValueError("need at least two grid points")
    if t[0] < origin:
        raise ValueError("first grid time precedes the origin")
    v = grid.values
    ax = v.ndim - 2
    tt = np.concatenate([[origin], t])
    dt = np.diff(tt)
    zero = np.zeros_like(np.take(v, [0], axis=ax))
    vv = np.concatenate([zero, v], axis=ax)
    lo = np.take(vv, np.arange(t.size), axis=ax)
    hi = np.take(vv, np.arange(1, t.size + 1), axis=ax)
    shape = [1] * v.ndim
    shape[ax] = t.size
    pieces = 0.5 * (lo + hi) * dt.reshape(shape)
    out = np.cumsum(pieces, axis=ax)
    meta = {"origin": origin, "max_dt2": float(dt.max() ** 2), "rule": "trapezoid"}
    return GaussianGrid(t, out, f"integrated({grid.tag})", dict(grid.params), meta)
