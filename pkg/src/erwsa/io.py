"""CSV and binary batch formats.

CSV (walks): replicate, checkpoint, S_1..S_d, T_1..T_d, C_1..C_d
CSV (urns):  replicate, checkpoint, W, N_A

Binary batch (little-endian):
    offset 0   4s   magic b"ERWB"
           4   u2   version (1)
           6   u2   d (0 for urn batches)
           8   u4   flags: bit 0 = walk arrays present, bit 1 = urn arrays present
          12   u8   replicates R
          20   u8   checkpoints K
          28   i8[K]        checkpoint times
          then, if bit 0: S i8[R,K,d], T f8[R,K,d], C f8[R,K,d]
          then, if bit 1: W i8[R,K], N_A i8[R,K]
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .walkers import WalkBatch

MAGIC = b"ERWB"
VERSION = 1
_HEADER = struct.Struct("<4sHHIQQ")
WALK, URN = 1, 2


def write_batch_csv(path, batch: WalkBatch) -> None:
    K = batch.checkpoints.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if batch.S is not None:
            d = batch.S.shape[2]
            w.writerow(["replicate", "checkpoint"] + [f"{a}_{k + 1}" for a in "STC" for k in range(d)])
            for r in range(batch.S.shape[0]):
                for i in range(K):
                    row = [r, int(batch.checkpoints[i])]
                    row += [int(x) for x in batch.S[r, i]]
                    row += [repr(float(x)) for x in batch.T[r, i]]
                    row += [repr(float(x)) for x in batch.C[r, i]]
                    w.writerow(row)
        else:
            w.writerow(["replicate", "checkpoint", "W", "N_A"])
            for r in range(batch.W.shape[0]):
                for i in range(K):
                    w.writerow([r, int(batch.checkpoints[i]), int(batch.W[r, i]), int(batch.NA[r, i])])


def read_batch_csv(path) -> WalkBatch:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    rep = np.array([int(r[0]) for r in body])
    ck_all = np.array([int(r[1]) for r in body])
    R = rep.max() + 1 if body else 0
    K = len(body) // R if R else 0
    ck = ck_all[:K]
    if head[2] == "W":
        W = np.array([int(r[2]) for r in body]).reshape(R, K)
        NA = np.array([int(r[3]) for r in body]).reshape(R, K)
        return WalkBatch(ck, W=W, NA=NA)
    d = (len(head) - 2) // 3
    vals = np.array([[float(x) for x in r[2:]] for r in body]).reshape(R, K, 3 * d)
    return WalkBatch(ck, S=vals[..., :d].astype(np.int64), T=vals[..., d : 2 * d], C=vals[..., 2 * d :])


def write_batch_binary(path, batch: WalkBatch) -> None:
    flags = (WALK if batch.S is not None else 0) | (URN if batch.W is not None else 0)
    R = batch.S.shape[0] if batch.S is not None else batch.W.shape[0]
    d = batch.S.shape[2] if batch.S is not None else 0
    K = batch.checkpoints.size
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, d, flags, R, K))
        fh.write(np.asarray(batch.checkpoints, dtype="<i8").tobytes())
        if flags & WALK:
            fh.write(np.asarray(batch.S, dtype="<i8").tobytes())
            fh.write(np.asarray(batch.T, dtype="<f8").tobytes())
            fh.write(np.asarray(batch.C, dtype="<f8").tobytes())
        if flags & URN:
            fh.write(np.asarray(batch.W, dtype="<i8").tobytes())
            fh.write(np.asarray(batch.NA, dtype="<i8").tobytes())


def read_batch_binary(path) -> WalkBatch:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, flags, R, K = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not an ERWB batch file")
    if version != VERSION:
        raise ValueError(f"unsupported batch format version {version}")
    off = _HEADER.size

    def take(dtype, shape):
        nonlocal off
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype=dtype, count=n, offset=off).reshape(shape)
        off += n * 8
        return arr.astype(dtype[1:] if dtype[0] == "<" else dtype)

    ck = take("<i8", (K,))
    out = WalkBatch(ck)
    if flags & WALK:
        out.S, out.T, out.C = take("<i8", (R, K, d)), take("<f8", (R, K, d)), take("<f8", (R, K, d))
    if flags & URN:
        out.W, out.NA = take("<i8", (R, K)), take("<i8", (R, K))
    return out
