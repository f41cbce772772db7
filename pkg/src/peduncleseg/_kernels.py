"""Hot numeric kernels with two interchangeable backends.

The numba backend JIT-compiles the loop implementations below; the numpy
backend is a vectorized translation of the same arithmetic.  Selection:
numba is used when importable unless ``PEDUNCLESEG_DISABLE_NUMBA=1`` is set,
in which case the numpy path runs.  ``benchmarks/bench_backends.py`` times
the two against each other.

All kernels accumulate integer histogram counts / fixed-order float sums so
results do not depend on thread count or batch size.
"""

from __future__ import annotations

import math
import os

import numpy as np

DISABLE_ENV = "PEDUNCLESEG_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay importable
    numba = None
    HAVE_NUMBA = False

_disabled = os.environ.get(DISABLE_ENV, "").strip().lower() in {"1", "true", "yes"}
BACKEND = "numba" if (HAVE_NUMBA and not _disabled) else "numpy"

if HAVE_NUMBA:
    prange = numba.prange
else:
    prange = range

NBINS = 11
ALPHA_SCALE = NBINS / 2.0          # alpha, phi over [-1, 1]
THETA_SCALE = NBINS / (2.0 * math.pi)  # theta over [-pi, pi]
DEGENERATE_CROSS_SQ = 1e-24        # ||U x u|| < 1e-12

KERNEL_LINEAR = 0
KERNEL_RBF = 1


# ---------------------------------------------------------------------------
# loop sources (compiled by numba; kept as plain python for readability)
# ---------------------------------------------------------------------------

def _pfh_histograms_loops(xyz, normals, valid, nbr_idx, nbr_off, queries,
                          counts, pair_counts):
    nq = queries.shape[0]
    for qi in prange(nq):
        q = queries[qi]
        if not valid[q]:
            continue
        lo = nbr_off[q]
        hi = nbr_off[q + 1]
        # valid members of the influence region (query included)
        k = 0
        for t in range(lo, hi):
            if valid[nbr_idx[t]]:
                k += 1
        if k < 2:
            continue
        members = np.empty(k, dtype=np.int64)
        k = 0
        for t in range(lo, hi):
            p = nbr_idx[t]
            if valid[p]:
                members[k] = p
                k += 1
        npairs = 0
        for a in range(k):
            i = members[a]
            pix = xyz[i, 0]
            piy = xyz[i, 1]
            piz = xyz[i, 2]
            nix = normals[i, 0]
            niy = normals[i, 1]
            niz = normals[i, 2]
            for b in range(a + 1, k):
                j = members[b]
                dx = xyz[j, 0] - pix
                dy = xyz[j, 1] - piy
                dz = xyz[j, 2] - piz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 == 0.0:
                    continue
                d = math.sqrt(d2)
                ux = dx / d
                uy = dy / d
                uz = dz / d
                njx = normals[j, 0]
                njy = normals[j, 1]
                njz = normals[j, 2]
                dot_i = nix * ux + niy * uy + niz * uz
                dot_j = njx * ux + njy * uy + njz * uz
                # source: the endpoint whose normal is closer to the line
                if abs(dot_i) >= abs(dot_j):
                    sx, sy, sz = nix, niy, niz
                    tx, ty, tz = njx, njy, njz
                    usx, usy, usz = ux, uy, uz
                else:
                    sx, sy, sz = njx, njy, njz
                    tx, ty, tz = nix, niy, niz
                    usx, usy, usz = -ux, -uy, -uz
                cx = sy * usz - sz * usy
                cy = sz * usx - sx * usz
                cz = sx * usy - sy * usx
                c2 = cx * cx + cy * cy + cz * cz
                if c2 < DEGENERATE_CROSS_SQ:
                    continue
                cn = math.sqrt(c2)
                vx = cx / cn
                vy = cy / cn
                vz = cz / cn
                wx = sy * vz - sz * vy
                wy = sz * vx - sx * vz
                wz = sx * vy - sy * vx
                alpha = vx * tx + vy * ty + vz * tz
                phi = sx * usx + sy * usy + sz * usz
                theta = math.atan2(wx * tx + wy * ty + wz * tz,
                                   sx * tx + sy * ty + sz * tz)
                ba = int(math.floor((alpha + 1.0) * ALPHA_SCALE))
                if ba < 0:
                    ba = 0
                elif ba > NBINS - 1:
                    ba = NBINS - 1
                bp = int(math.floor((phi + 1.0) * ALPHA_SCALE))
                if bp < 0:
                    bp = 0
                elif bp > NBINS - 1:
                    bp = NBINS - 1
                bt = int(math.floor((theta + math.pi) * THETA_SCALE))
                if bt < 0:
                    bt = 0
                elif bt > NBINS - 1:
                    bt = NBINS - 1
                counts[qi, ba] += 1
                counts[qi, NBINS + bp] += 1
                counts[qi, 2 * NBINS + bt] += 1
                npairs += 1
        pair_counts[qi] = npairs
    return counts, pair_counts


def _neighborhood_moments_loops(xyz, nbr_idx, nbr_off, counts, means, covs):
    n = nbr_off.shape[0] - 1
    for i in prange(n):
        lo = nbr_off[i]
        hi = nbr_off[i + 1]
        k = hi - lo
        counts[i] = k
        if k == 0:
            continue
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for t in range(lo, hi):
            p = nbr_idx[t]
            sx += xyz[p, 0]
            sy += xyz[p, 1]
            sz += xyz[p, 2]
        mx = sx / k
        my = sy / k
        mz = sz / k
        means[i, 0] = mx
        means[i, 1] = my
        means[i, 2] = mz
        cxx = 0.0
        cxy = 0.0
        cxz = 0.0
        cyy = 0.0
        cyz = 0.0
        czz = 0.0
        for t in range(lo, hi):
            p = nbr_idx[t]
            dx = xyz[p, 0] - mx
            dy = xyz[p, 1] - my
            dz = xyz[p, 2] - mz
            cxx += dx * dx
            cxy += dx * dy
            cxz += dx * dz
            cyy += dy * dy
            cyz += dy * dz
            czz += dz * dz
        covs[i, 0, 0] = cxx / k
        covs[i, 0, 1] = cxy / k
        covs[i, 0, 2] = cxz / k
        covs[i, 1, 0] = cxy / k
        covs[i, 1, 1] = cyy / k
        covs[i, 1, 2] = cyz / k
        covs[i, 2, 0] = cxz / k
        covs[i, 2, 1] = cyz / k
        covs[i, 2, 2] = czz / k
    return counts, means, covs


def _decision_values_loops(x, sv, coef, bias, kind, gamma, out):
    m = x.shape[0]
    ns = sv.shape[0]
    dim = x.shape[1]
    for r in range(m):
        acc = bias
        if kind == KERNEL_LINEAR:
            for s in range(ns):
                dot = 0.0
                for c in range(dim):
                    dot += sv[s, c] * x[r, c]
                acc += coef[s] * dot
        else:
            for s in range(ns):
                dist2 = 0.0
                for c in range(dim):
                    diff = sv[s, c] - x[r, c]
                    dist2 += diff * diff
                acc += coef[s] * math.exp(-gamma * dist2)
        out[r] = acc
    return out


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------

_PAIR_BATCH = 2_000_000
_triu_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _triu(k):
    cached = _triu_cache.get(k)
    if cached is None:
        cached = np.triu_indices(k, 1)
        _triu_cache[k] = cached
    return cached


def _bin_pairs_numpy(i_arr, j_arr, q_arr, xyz, normals, counts, pair_counts):
    dx = xyz[j_arr, 0] - xyz[i_arr, 0]
    dy = xyz[j_arr, 1] - xyz[i_arr, 1]
    dz = xyz[j_arr, 2] - xyz[i_arr, 2]
    d2 = dx * dx + dy * dy + dz * dz
    keep = d2 > 0.0
    if not np.all(keep):
        i_arr, j_arr, q_arr = i_arr[keep], j_arr[keep], q_arr[keep]
        dx, dy, dz, d2 = dx[keep], dy[keep], dz[keep], d2[keep]
    d = np.sqrt(d2)
    ux, uy, uz = dx / d, dy / d, dz / d
    nix, niy, niz = normals[i_arr, 0], normals[i_arr, 1], normals[i_arr, 2]
    njx, njy, njz = normals[j_arr, 0], normals[j_arr, 1], normals[j_arr, 2]
    dot_i = nix * ux + niy * uy + niz * uz
    dot_j = njx * ux + njy * uy + njz * uz
    swap = np.abs(dot_i) < np.abs(dot_j)
    sx = np.where(swap, njx, nix)
    sy = np.where(swap, njy, niy)
    sz = np.where(swap, njz, niz)
    tx = np.where(swap, nix, njx)
    ty = np.where(swap, niy, njy)
    tz = np.where(swap, niz, njz)
    sign = np.where(swap, -1.0, 1.0)
    usx, usy, usz = sign * ux, sign * uy, sign * uz
    cx = sy * usz - sz * usy
    cy = sz * usx - sx * usz
    cz = sx * usy - sy * usx
    c2 = cx * cx + cy * cy + cz * cz
    keep = c2 >= DEGENERATE_CROSS_SQ
    if not np.all(keep):
        q_arr = q_arr[keep]
        sx, sy, sz = sx[keep], sy[keep], sz[keep]
        tx, ty, tz = tx[keep], ty[keep], tz[keep]
        usx, usy, usz = usx[keep], usy[keep], usz[keep]
        cx, cy, cz, c2 = cx[keep], cy[keep], cz[keep], c2[keep]
    if q_arr.size == 0:
        return
    cn = np.sqrt(c2)
    vx, vy, vz = cx / cn, cy / cn, cz / cn
    wx = sy * vz - sz * vy
    wy = sz * vx - sx * vz
    wz = sx * vy - sy * vx
    alpha = vx * tx + vy * ty + vz * tz
    phi = sx * usx + sy * usy + sz * usz
    theta = np.arctan2(wx * tx + wy * ty + wz * tz, sx * tx + sy * ty + sz * tz)
    ba = np.clip(np.floor((alpha + 1.0) * ALPHA_SCALE).astype(np.int64), 0, NBINS - 1)
    bp = np.clip(np.floor((phi + 1.0) * ALPHA_SCALE).astype(np.int64), 0, NBINS - 1)
    bt = np.clip(np.floor((theta + math.pi) * THETA_SCALE).astype(np.int64), 0, NBINS - 1)
    np.add.at(counts, (q_arr, ba), 1)
    np.add.at(counts, (q_arr, NBINS + bp), 1)
    np.add.at(counts, (q_arr, 2 * NBINS + bt), 1)
    np.add.at(pair_counts, q_arr, 1)


def _pfh_histograms_numpy(xyz, normals, valid, nbr_idx, nbr_off, queries,
                          counts, pair_counts):
    pend_i, pend_j, pend_q = [], [], []
    pending = 0
    for qi in range(queries.shape[0]):
        q = queries[qi]
        if not valid[q]:
            continue
        members = nbr_idx[nbr_off[q]:nbr_off[q + 1]]
        members = members[valid[members]]
        k = members.size
        if k < 2:
            continue
        iu, ju = _triu(k)
        pend_i.append(members[iu])
        pend_j.append(members[ju])
        pend_q.append(np.full(iu.size, qi, dtype=np.int64))
        pending += iu.size
        if pending >= _PAIR_BATCH:
            _bin_pairs_numpy(np.concatenate(pend_i), np.concatenate(pend_j),
                             np.concatenate(pend_q), xyz, normals, counts,
                             pair_counts)
            pend_i, pend_j, pend_q = [], [], []
            pending = 0
    if pending:
        _bin_pairs_numpy(np.concatenate(pend_i), np.concatenate(pend_j),
                         np.concatenate(pend_q), xyz, normals, counts,
                         pair_counts)
    return counts, pair_counts


_MOMENT_BATCH = 1_000_000


def _neighborhood_moments_numpy(xyz, nbr_idx, nbr_off, counts, means, covs):
    n = nbr_off.shape[0] - 1
    seg_counts = np.diff(nbr_off)
    counts[:] = seg_counts
    start = 0
    while start < n:
        stop = start
        total = 0
        while stop < n and (total == 0 or total + seg_counts[stop] <= _MOMENT_BATCH):
            total += seg_counts[stop]
            stop += 1
        lo = nbr_off[start]
        hi = nbr_off[stop]
        nb = xyz[nbr_idx[lo:hi]]
        offs = (nbr_off[start:stop] - lo).astype(np.intp)
        cnt = seg_counts[start:stop]
        sums = np.add.reduceat(nb, offs, axis=0)
        mu = sums / cnt[:, None]
        means[start:stop] = mu
        centered = nb - np.repeat(mu, cnt, axis=0)
        prods = np.empty((centered.shape[0], 6))
        prods[:, 0] = centered[:, 0] * centered[:, 0]
        prods[:, 1] = centered[:, 0] * centered[:, 1]
        prods[:, 2] = centered[:, 0] * centered[:, 2]
        prods[:, 3] = centered[:, 1] * centered[:, 1]
        prods[:, 4] = centered[:, 1] * centered[:, 2]
        prods[:, 5] = centered[:, 2] * centered[:, 2]
        acc = np.add.reduceat(prods, offs, axis=0) / cnt[:, None]
        covs[start:stop, 0, 0] = acc[:, 0]
        covs[start:stop, 0, 1] = acc[:, 1]
        covs[start:stop, 0, 2] = acc[:, 2]
        covs[start:stop, 1, 0] = acc[:, 1]
        covs[start:stop, 1, 1] = acc[:, 3]
        covs[start:stop, 1, 2] = acc[:, 4]
        covs[start:stop, 2, 0] = acc[:, 2]
        covs[start:stop, 2, 1] = acc[:, 4]
        covs[start:stop, 2, 2] = acc[:, 5]
        start = stop
    return counts, means, covs


def _decision_values_numpy(x, sv, coef, bias, kind, gamma, out):
    # row-at-a-time so results cannot depend on how callers chunk the input
    for r in range(x.shape[0]):
        if kind == KERNEL_LINEAR:
            kv = sv @ x[r]
        else:
            diff = sv - x[r]
            kv = np.exp(-gamma * (diff * diff).sum(axis=1))
        out[r] = coef @ kv + bias
    return out


# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

if HAVE_NUMBA:
    _pfh_histograms_numba = numba.njit(cache=True, parallel=True)(_pfh_histograms_loops)
    _neighborhood_moments_numba = numba.njit(cache=True, parallel=True)(
        _neighborhood_moments_loops)
    _decision_values_numba = numba.njit(cache=True, nogil=True)(_decision_values_loops)
else:  # pragma: no cover
    _pfh_histograms_numba = None
    _neighborhood_moments_numba = None
    _decision_values_numba = None

if BACKEND == "numba":
    _pfh_histograms = _pfh_histograms_numba
    _neighborhood_moments = _neighborhood_moments_numba
    _decision_values = _decision_values_numba
else:
    _pfh_histograms = _pfh_histograms_numpy
    _neighborhood_moments = _neighborhood_moments_numpy
    _decision_values = _decision_values_numpy


def pfh_pair_histograms(xyz, normals, valid, nbr_idx, nbr_off, queries, *,
                        impl=None):
    """Per-query raw 33-bin pair counts plus pair totals.

    ``queries`` selects which points get histograms; neighbour lists are the
    CSR arrays from the spatial index (self included).  Points flagged
    invalid contribute to nothing.
    """
    nq = queries.shape[0]
    counts = np.zeros((nq, 3 * NBINS), dtype=np.int64)
    pair_counts = np.zeros(nq, dtype=np.int64)
    fn = impl if impl is not None else _pfh_histograms
    fn(np.ascontiguousarray(xyz), np.ascontiguousarray(normals),
       np.ascontiguousarray(valid), np.ascontiguousarray(nbr_idx),
       np.ascontiguousarray(nbr_off), np.ascontiguousarray(queries),
       counts, pair_counts)
    return counts, pair_counts


def neighborhood_moments(xyz, nbr_idx, nbr_off, *, impl=None):
    """Counts, means and 3x3 covariances of each CSR neighbourhood."""
    n = nbr_off.shape[0] - 1
    counts = np.zeros(n, dtype=np.int64)
    means = np.zeros((n, 3))
    covs = np.zeros((n, 3, 3))
    fn = impl if impl is not None else _neighborhood_moments
    fn(np.ascontiguousarray(xyz), np.ascontiguousarray(nbr_idx),
       np.ascontiguousarray(nbr_off), counts, means, covs)
    return counts, means, covs


def decision_values(x, sv, coef, bias, kind, gamma, *, impl=None):
    """Signed kernel-expansion scores, one per row of ``x``.

    Fixed per-row accumulation order: scores are bit-identical no matter how
    the rows are split across workers.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    fn = impl if impl is not None else _decision_values
    fn(x, np.ascontiguousarray(sv, dtype=np.float64),
       np.ascontiguousarray(coef, dtype=np.float64), float(bias), int(kind),
       float(gamma), out)
    return out
