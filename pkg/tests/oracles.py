"""Independent brute-force references used to check the streaming code paths.

Coordinates are materialized as dense arrays (T, M, N, 2) with a validity mask
(T, M, N); every argmin is taken by exhaustive enumeration over candidate
keys, never by reusing library helpers.
"""

import itertools
import math

import numpy as np


def first_frame_pick(pts, ok):
    """pts: (M, 2), ok: (M,). Returns index of the chosen estimator or None."""
    idx = [i for i in range(len(ok)) if ok[i]]
    if not idx:
        return None
    if len(idx) == 1:
        return idx[0]
    scored = []
    for i, j in itertools.permutations(idx, 2):
        d = math.sqrt((pts[i, 0] - pts[j, 0]) ** 2 + (pts[i, 1] - pts[j, 1]) ** 2)
        scored.append((d, min(i, j), max(i, j)))
    return min(scored)[1]


def tracking_pick(pts, ok, prev):
    idx = [i for i in range(len(ok)) if ok[i]]
    if not idx:
        return None
    scored = [
        (math.sqrt((pts[i, 0] - prev[0]) ** 2 + (pts[i, 1] - prev[1]) ** 2), i) for i in idx
    ]
    return min(scored)[1]


def oracle_aggregate(coords, mask, gamma=0.18, eps=1e-12):
    """Returns a list of (t, positions (N,2), valid (N,), src (N,), C, retained).

    src holds the estimator index (0-based), -1 when carried forward and
    None when never resolved. Frames before the first resolvable joint are
    skipped.
    """
    T, M, N, _ = coords.shape
    out = []
    prev_pos = None
    prev_ok = np.zeros(N, dtype=bool)
    started = False
    for t in range(T):
        if not started and not mask[t].any():
            continue
        started = True
        pos = np.zeros((N, 2))
        ok = np.zeros(N, dtype=bool)
        src = [None] * N
        for v in range(N):
            if prev_ok[v]:
                k = tracking_pick(coords[t, :, v], mask[t, :, v], prev_pos[v])
                if k is None:
                    pos[v], ok[v], src[v] = prev_pos[v], True, -1
                else:
                    pos[v], ok[v], src[v] = coords[t, k, v], True, k
            else:
                k = first_frame_pick(coords[t, :, v], mask[t, :, v])
                if k is not None:
                    pos[v], ok[v], src[v] = coords[t, k, v], True, k
        c = oracle_confidence(pos, ok, src, coords[t], mask[t], eps)
        out.append((t, pos, ok, src, c, c >= gamma))
        prev_pos, prev_ok = pos, ok
    return out


def oracle_confidence(pos, ok, src, props, pmask, eps=1e-12):
    """exp(-mean normalized disagreement); 0 when undefined."""
    N = len(pos)
    if N < 3 or not (ok[0] and ok[1] and ok[2]):
        return 0.0
    neck = (pos[1] + pos[2]) / 2.0
    dn = float(np.linalg.norm(pos[0] - neck))
    terms = []
    for v in range(N):
        if not ok[v] or src[v] in (None, -1):
            continue
        for k in range(props.shape[0]):
            if pmask[k, v]:
                terms.append(float(np.linalg.norm(pos[v] - props[k, v])) / (dn + eps))
    if not terms:
        return 0.0
    c = math.exp(-float(np.mean(terms)))
    return c if c > 0 else np.finfo(float).tiny


def random_instance(rng, max_T=5, max_N=4, M=3, grid=6, p_missing=0.3, p_absent=0.15):
    T = int(rng.integers(1, max_T + 1))
    N = int(rng.integers(1, max_N + 1))
    coords = rng.integers(0, grid, size=(T, M, N, 2)).astype(float)
    mask = rng.random((T, M, N)) >= p_missing
    absent = rng.random((T, M)) < p_absent
    mask &= ~absent[:, :, None]
    return coords, mask
