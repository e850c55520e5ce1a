"""Compiled inner loops for the walk and urn simulators.

Draw protocol (shared with the pure-Python ``erw_step``/``rpw_step`` and with
the stochastic-approximation adapters, which must reproduce paths bit for
bit):

ERW, step 1:   one uniform u; direction index floor(u * 2d) ("uniform" start)
               or +1 iff u < p_1 ("memory" start, d = 1).
ERW, step m+1: u_select -> past step j = floor(u_select * m), located in the
               direction-major enumeration of the 2d direction counts;
               u_keep   -> keep that direction iff u_keep < p_{m+1};
               u_target -> only when switching and 2d - 1 > 1: index
               floor(u_target * (2d - 1)) among the other directions.
Urn, step n:   u_ball -> white iff u_ball * (alpha0 + n - 1) < W_{n-1}
               (u_ball < p0 while the urn is empty);
               u_resp -> success iff u_resp < p_A (white) or p_B (black).

Direction codes: 2k is +e_k, 2k + 1 is -e_k.
"""
from __future__ import annotations

import numba
import numpy as np


@numba.njit(cache=True)
def erw_path(rng, d, pvals, zvals, memory_start, ck, S_out, T_out, C_out):
    """Simulate one walk to ``ck[-1]`` and write S, T, C at checkpoint times ``ck``.

    ``pvals[i]`` is p_i, ``zvals[i - 1]`` is Z_i.
    """
    nd = 2 * d
    counts = np.zeros(nd, dtype=np.int64)
    S = np.zeros(d, dtype=np.int64)
    T = np.zeros(d)
    Tsum = np.zeros(d)
    horizon = ck[-1]
    nxt = 0
    code = 0
    for m in range(horizon):
        u = rng.random()
        if m == 0:
            if memory_start:
                code = 0 if u < pvals[1] else 1
            else:
                code = int(u * nd)
                if code >= nd:
                    code = nd - 1
        else:
            j = int(u * m)
            if j >= m:
                j = m - 1
            # branchless lookup of the direction holding the j-th past step
            acc = 0
            c = 0
            for k in range(nd - 1):
                acc += counts[k]
                c += j >= acc
            keep = rng.random() < pvals[m + 1]
            if nd == 2:
                code = c ^ (1 - keep)
            elif keep:
                code = c
            else:
                r = int(rng.random() * (nd - 1))
                if r >= nd - 1:
                    r = nd - 2
                code = r + (r >= c)
        counts[code] += 1
        axis = code >> 1
        sign = 1 - 2 * (code & 1)
        S[axis] += sign
        T[axis] += sign * zvals[m]
        for k in range(d):
            Tsum[k] += T[k]
        if m + 1 == ck[nxt]:
            n = m + 1
            for k in range(d):
                S_out[nxt, k] = S[k]
                T_out[nxt, k] = T[k]
                C_out[nxt, k] = Tsum[k] / n
            nxt += 1


@numba.njit(cache=True)
def rpw_path(rng, pA, pB, W0, B0, p0, ck, W_out, NA_out):
    """Simulate one urn to ``ck[-1]``; record W_n and N_nA at checkpoint times."""
    W = W0
    total = W0 + B0
    NA = 0
    nxt = 0
    horizon = ck[-1]
    for m in range(horizon):
        u = rng.random()
        if total == 0:
            white = u < p0
        else:
            white = u * total < W
        success = rng.random() < (pA if white else pB)
        if white:
            NA += 1
        if white == success:
            W += 1
        total += 1
        if m + 1 == ck[nxt]:
            W_out[nxt] = W
            NA_out[nxt] = NA
            nxt += 1
