"""Forward simulators for the multi-dimensional elephant random walk and the
randomized play-the-winner urn.

The compiled simulators in :mod:`erwsa._kernels` and the step functions here
consume the same uniforms in the same order, so a path can be replayed one
step at a time (see :mod:`erwsa.sa`).
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import WalkConfig
from .streams import STEP_SIZE, chunks, replicate_stream, replicate_streams

CHUNK = 512


def direction_vector(code: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=np.int64)
    v[code >> 1] = -1 if code & 1 else 1
    return v


# --------------------------------------------------------------------------
# ERW


@dataclass
class WalkState:
    """Mutable state of one walk; ``counts[c]`` is the number of past steps in direction c."""

    d: int
    rng: np.random.Generator
    n: int = 0
    counts: np.ndarray = None
    S: np.ndarray = None
    T: np.ndarray = None
    T_cumsum: np.ndarray = None
    last: int = -1
    memory_start: bool = False

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(2 * self.d, dtype=np.int64)
            self.S = np.zeros(self.d, dtype=np.int64)
            self.T = np.zeros(self.d)
            self.T_cumsum = np.zeros(self.d)

    def copy(self, rng: np.random.Generator | None = None) -> "WalkState":
        return WalkState(
            self.d,
            rng if rng is not None else self.rng,
            self.n,
            self.counts.copy(),
            self.S.copy(),
            self.T.copy(),
            self.T_cumsum.copy(),
            self.last,
            self.memory_start,
        )

    @property
    def C(self) -> np.ndarray:
        return self.T_cumsum / self.n


def _select_direction(counts: np.ndarray, j: int) -> int:
    acc = 0
    for c, k in enumerate(counts):
        acc += k
        if j < acc:
            return c
    raise AssertionError("selection index beyond the step count")


def erw_step(state: WalkState, p_next: float, z: float = 1.0) -> WalkState:
    """Advance ``state`` by one step with memory parameter ``p_next`` and step size ``z``.

    Consumes uniforms from ``state.rng`` exactly as the compiled simulator
    does.  At n = 0, ``p_next`` is only used by the d = 1 "memory" start.
    """
    d, m, rng = state.d, state.n, state.rng
    nd = 2 * d
    u = rng.random()
    if m == 0:
        code = (0 if u < p_next else 1) if state.memory_start else min(int(u * nd), nd - 1)
    else:
        c = _select_direction(state.counts, min(int(u * m), m - 1))
        if rng.random() < p_next:
            code = c
        elif nd == 2:
            code = 1 - c
        else:
            r = min(int(rng.random() * (nd - 1)), nd - 2)
            code = r if r < c else r + 1
    state.counts[code] += 1
    axis, sign = code >> 1, (-1 if code & 1 else 1)
    state.S[axis] += sign
    state.T[axis] += sign * z
    state.T_cumsum += state.T
    state.n = m + 1
    state.last = code
    assert np.abs(state.S).sum() <= state.n and state.counts.sum() == state.n
    return state


@dataclass
class WalkPath:
    """Checkpointed values of one path.  ``W``/``NA`` are set for urn paths."""

    checkpoints: np.ndarray
    S: np.ndarray | None = None
    T: np.ndarray | None = None
    C: np.ndarray | None = None
    W: np.ndarray | None = None
    NA: np.ndarray | None = None


@dataclass
class WalkBatch:
    """Checkpointed values of many replicates; arrays have shape (R, K, d) or (R, K)."""

    checkpoints: np.ndarray
    S: np.ndarray | None = None
    T: np.ndarray | None = None
    C: np.ndarray | None = None
    W: np.ndarray | None = None
    NA: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def replicates(self) -> int:
        arr = self.S if self.S is not None else self.W
        return arr.shape[0]

    def path(self, r: int) -> WalkPath:
        pick = lambda a: None if a is None else a[r]
        return WalkPath(self.checkpoints, pick(self.S), pick(self.T), pick(self.C), pick(self.W), pick(self.NA))


def _walk_inputs(config: WalkConfig):
    pvals = config.schedule.values(config.horizon)
    ck = np.asarray(config.checkpoints, dtype=np.int64)
    zconst = np.full(config.horizon, config.steps.mean) if config.steps.is_constant else None
    return pvals, ck, zconst


def _walk_range(config: WalkConfig, start: int, stop: int, inputs=None):
    pvals, ck, zconst = inputs if inputs is not None else _walk_inputs(config)
    d, K, R = config.d, len(ck), stop - start
    S = np.empty((R, K, d), dtype=np.int64)
    T = np.empty((R, K, d))
    C = np.empty((R, K, d))
    mem = config.first_step == "memory"
    for i, r in enumerate(range(start, stop)):
        dir_rng = replicate_stream(config.seed, r)
        if zconst is not None:
            z = zconst
        else:
            z = config.steps.sample(replicate_stream(config.seed, r, STEP_SIZE), config.horizon)
        _kernels.erw_path(dir_rng, d, pvals, z, mem, ck, S[i], T[i], C[i])
    return S, T, C


def simulate_walk(config: WalkConfig, replicate: int = 0) -> WalkPath:
    """One path of the walk described by ``config`` (replicate index ``replicate``)."""
    S, T, C = _walk_range(config, replicate, replicate + 1)
    return WalkPath(np.asarray(config.checkpoints), S[0], T[0], C[0])


def _run_chunks(fn, config, total, workers):
    spans = chunks(total, CHUNK)
    if workers is None or workers <= 1 or len(spans) == 1:
        return [fn(config, a, b) for a, b in spans]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, config, a, b) for a, b in spans]
        return [f.result() for f in futs]


def _walk_chunk(config, a, b):
    return _walk_range(config, a, b)


def simulate_batch(config: WalkConfig, workers: int = 1) -> WalkBatch:
    """All ``config.replicates`` paths.  Output does not depend on ``workers``."""
    if workers and workers > 1:
        parts = _run_chunks(_walk_chunk, config, config.replicates, workers)
    else:
        inputs = _walk_inputs(config)
        parts = [_walk_range(config, a, b, inputs) for a, b in chunks(config.replicates, CHUNK)]
    S, T, C = (np.concatenate([p[i] for p in parts]) for i in range(3))
    return WalkBatch(np.asarray(config.checkpoints), S, T, C, meta={"kind": "erw"})


def simulate_walk_history(config: WalkConfig, replicate: int = 0) -> WalkPath:
    """Reference simulator that keeps the full step history.

    The remembered step is ``history[order[j]]`` where ``order`` enumerates the
    past steps direction by direction (a fixed relabelling of the uniformly
    chosen time), so with shared draws it must reproduce
    :func:`simulate_walk` exactly.  Quadratic cost; for validation only.
    """
    d, nd = config.d, 2 * config.d
    rng, z_rng = replicate_streams(config.seed, replicate)
    z = np.full(config.horizon, config.steps.mean) if config.steps.is_constant else config.steps.sample(z_rng, config.horizon)
    pvals = config.schedule.values(config.horizon)
    history = []
    steps = np.zeros((config.horizon, d))
    for m in range(config.horizon):
        u = rng.random()
        if m == 0:
            if config.first_step == "memory":
                code = 0 if u < pvals[1] else 1
            else:
                code = min(int(u * nd), nd - 1)
        else:
            order = np.argsort(np.asarray(history), kind="stable")
            c = history[order[min(int(u * m), m - 1)]]
            if rng.random() < pvals[m + 1]:
                code = c
            elif nd == 2:
                code = 1 - c
            else:
                r = min(int(rng.random() * (nd - 1)), nd - 2)
                code = r if r < c else r + 1
        history.append(code)
        steps[m] = direction_vector(code, d)
    S_all = np.cumsum(steps, axis=0)
    T_all = np.cumsum(steps * z[:, None], axis=0)
    C_all = np.cumsum(T_all, axis=0) / np.arange(1, config.horizon + 1)[:, None]
    idx = np.asarray(config.checkpoints) - 1
    return WalkPath(np.asarray(config.checkpoints), S_all[idx].astype(np.int64), T_all[idx], C_all[idx])


# --------------------------------------------------------------------------
# randomized play-the-winner urn


@dataclass(frozen=True)
class RpwConfig:
    pA: float
    pB: float
    W0: int = 0
    B0: int = 0
    p0: float = 1.0
    horizon: int = 1000
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        for name in ("pA", "pB", "p0"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.W0 < 0 or self.B0 < 0 or int(self.W0) != self.W0 or int(self.B0) != self.B0:
            raise ValueError("initial ball counts must be nonnegative integers")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def qA(self):
        return 1 - self.pA

    @property
    def qB(self):
        return 1 - self.pB

    @property
    def alpha0(self) -> int:
        return int(self.W0 + self.B0)

    @property
    def rho(self) -> float:
        return self.pA + self.pB - 1

    @property
    def v(self) -> float:
        """Limit proportion q_B / (q_A + q_B) of white balls."""
        return self.qB / (self.qA + self.qB)

    def theory_ready(self) -> bool:
        return self.qA * self.qB != 0


@dataclass
class UrnState:
    rng: np.random.Generator
    W: int
    total: int
    n: int = 0
    NA: int = 0


def rpw_step(state: UrnState, cfg: RpwConfig) -> UrnState:
    """One patient: draw a ball, observe the response, add the generated ball."""
    u = state.rng.random()
    white = (u < cfg.p0) if state.total == 0 else (u * state.total < state.W)
    success = state.rng.random() < (cfg.pA if white else cfg.pB)
    state.NA += white
    state.W += white == success
    state.total += 1
    state.n += 1
    return state


def _rpw_range(cfg: RpwConfig, ck: np.ndarray, start: int, stop: int):
    R, K = stop - start, len(ck)
    W = np.empty((R, K), dtype=np.int64)
    NA = np.empty((R, K), dtype=np.int64)
    for i, r in enumerate(range(start, stop)):
        rng = replicate_stream(cfg.seed, r)
        _kernels.rpw_path(rng, cfg.pA, cfg.pB, int(cfg.W0), int(cfg.B0), cfg.p0, ck, W[i], NA[i])
    return W, NA


def _check_ck(checkpoints, horizon):
    ck = np.asarray(checkpoints if checkpoints is not None else [horizon], dtype=np.int64)
    if ck.size == 0 or np.any(np.diff(ck) <= 0) or ck[0] < 1:
        raise ValueError("checkpoints must be nonempty, positive and strictly increasing")
    return ck


def simulate_rpw(config: RpwConfig, checkpoints=None, replicate: int = 0) -> WalkPath:
    """One urn path; W_n nondecreasing with 0/1 increments; also records N_nA."""
    ck = _check_ck(checkpoints, config.horizon)
    W, NA = _rpw_range(config, ck, replicate, replicate + 1)
    return WalkPath(ck, W=W[0], NA=NA[0])


def _rpw_chunk(args, a, b):
    cfg, ck = args
    return _rpw_range(cfg, ck, a, b)


def simulate_rpw_batch(config: RpwConfig, checkpoints=None, workers: int = 1) -> WalkBatch:
    ck = _check_ck(checkpoints, config.horizon)
    parts = _run_chunks(_rpw_chunk, (config, ck), config.replicates, workers)
    W = np.concatenate([p[0] for p in parts])
    NA = np.concatenate([p[1] for p in parts])
    return WalkBatch(ck, W=W, NA=NA, meta={"kind": "rpw"})


class MappingWarning(UserWarning):
    """The urn-to-walk identity in law needs W0 = B0 = 0 and p0 = 1."""


def rpw_as_biased_erw(W, n=None, config: RpwConfig | None = None) -> np.ndarray:
    """S~_n = 2 W_n - n for a white-ball series (times ``n`` default to 1, 2, ...)."""
    W = np.asarray(W, dtype=np.int64)
    if n is None:
        n = np.arange(1, W.shape[-1] + 1)
    if config is not None and not (config.W0 == 0 and config.B0 == 0 and config.p0 == 1):
        warnings.warn(
            "S~ = 2W - n has the biased-walk law only when W0 = B0 = 0 and p0 = 1",
            MappingWarning,
            stacklevel=2,
        )
    return 2 * W - np.asarray(n, dtype=np.int64)
