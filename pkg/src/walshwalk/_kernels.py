"""Compiled inner loops for path simulation and cycle harvesting.

Randomness comes from a counter-based SplitMix64 sequence: uniform number
``k`` of a stream with key ``K`` is ``mix(K + (k + 1) * GOLDEN)``.  Every
kernel takes the key and a starting counter and returns the counter it
stopped at, so a path is a pure function of ``(tables, init, key)``.

Table layout (labels are 0-based here, 1-based in the public API):

* ``jv[i, :jn[i]]`` / ``jc[i, :jn[i]]``: jump values and cumulative probs of ray ``i``.
* ``ky, kj, kc, kn``: critical kernel rows indexed ``[i, x - kmin[i]]`` over
  targets ``(ky, kj)``.  ``kn == 0`` marks a missing row.
* ``ext_kind[i]``: 0 none, 1 reuse lowest row, 2 affine-cap, 3 mirror.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

EXT_NONE, EXT_REUSE, EXT_AFFINE, EXT_MIRROR = 0, 1, 2, 3
ERR_MISSING_ROW = 1


@njit(cache=True)
def uniform(key, ctr):
    z = key + (ctr + np.uint64(1)) * GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    z = z ^ (z >> _S31)
    return float(z >> _S11) * _INV53


@njit(cache=True)
def uniforms(key, ctr0, n):
    out = np.empty(n)
    for k in range(n):
        out[k] = uniform(key, ctr0 + np.uint64(k))
    return out


@njit(cache=True)
def _pick(cdf, n, u):
    for a in range(n - 1):
        if u < cdf[a]:
            return a
    return n - 1


@njit(cache=True)
def critical_step(x, i, u, ky, kj, kc, kn, kmin, ext_kind, ext_a, ext_b, ext_cap, ext_shift):
    """Target of a critical move from ``(x, i)``; returns (y, j, err)."""
    row = x - kmin[i]
    if row >= 0:
        n = kn[i, row]
        if n == 0:
            return 0, 0, ERR_MISSING_ROW
        a = _pick(kc[i, row], n, u)
        return ky[i, row, a], kj[i, row, a], 0
    kind = ext_kind[i]
    if kind == EXT_REUSE:
        n = kn[i, 0]
        if n == 0:
            return 0, 0, ERR_MISSING_ROW
        a = _pick(kc[i, 0], n, u)
        return ky[i, 0, a], kj[i, 0, a], 0
    if kind == EXT_AFFINE:
        y = math.ceil(ext_a[i] + ext_b[i] * (-x))
        cap = ext_cap[i]
        if y > cap:
            y = cap
        if y < 1:
            y = 1
        return np.int64(y), i, 0
    if kind == EXT_MIRROR:
        return -x - ext_shift[i], 1 - i, 0
    return 0, 0, ERR_MISSING_ROW


@njit(cache=True, nogil=True)
def simulate_axis(steps, r0, l0, key, jv, jc, jn, ky, kj, kc, kn, kmin,
                  ext_kind, ext_a, ext_b, ext_cap, ext_shift):
    R = np.empty(steps + 1, np.int32)
    L = np.empty(steps + 1, np.int8)
    R[0] = r0
    L[0] = l0
    r = np.int64(r0)
    i = np.int64(l0)
    for k in range(steps):
        u = uniform(key, np.uint64(k))
        if r > 0:
            r += jv[i, _pick(jc[i], jn[i], u)]
        else:
            y, j, err = critical_step(r, i, u, ky, kj, kc, kn, kmin,
                                      ext_kind, ext_a, ext_b, ext_cap, ext_shift)
            if err != 0:
                return R[: k + 1], L[: k + 1], err, r, i
            r = y
            i = j
        R[k + 1] = r
        L[k + 1] = i
    return R, L, 0, r, i


@njit(cache=True, nogil=True)
def simulate_membrane(steps, x0, key, d, pv, pc, pn, mv, mc, mn, tv, tc, tn):
    """Membrane walk; ``tv[x + d]`` holds targets of the membrane kernel at ``x``."""
    X = np.empty(steps + 1, np.int32)
    X[0] = x0
    x = np.int64(x0)
    for k in range(steps):
        u = uniform(key, np.uint64(k))
        if x > d:
            x += pv[_pick(pc, pn, u)]
        elif x < -d:
            x += mv[_pick(mc, mn, u)]
        else:
            row = x + d
            x = tv[row, _pick(tc[row], tn[row], u)]
        X[k + 1] = x
    return X


@njit(cache=True)
def membrane_times(X, d):
    """Exit/entrance indices of a membrane path (sigma_1.., tau_0..)."""
    n = X.shape[0]
    sig = np.empty(n, np.int64)
    tau = np.empty(n, np.int64)
    ns = 0
    nt = 0
    k = 0
    # tau_0 = first k >= 0 with |X(k)| > d
    while k < n and abs(X[k]) <= d:
        k += 1
    if k >= n:
        return sig[:0], tau[:0]
    tau[nt] = k
    nt += 1
    while True:
        k += 1
        while k < n:
            a = X[k - 1]
            b = X[k]
            if (a > d and b <= d) or (a < -d and b >= -d):
                break
            k += 1
        if k >= n:
            break
        sig[ns] = k
        ns += 1
        while k < n and abs(X[k]) <= d:
            k += 1
        if k >= n:
            break
        tau[nt] = k
        nt += 1
    return sig[:ns], tau[:nt]


@njit(cache=True, nogil=True)
def simulate_spider(steps, r0, l0, key, jv, jc, jn, oy, oj, oc, on_,
                    ky, kj, kc, kn, kmin, ext_kind, ext_a, ext_b, ext_cap, ext_shift):
    """Spider walk; radius 0 is the origin (label stored as -1).

    Overshoot rows are indexed by the attempted landing point ``z < 0``;
    a target radius of 0 sends the walk to the origin.  Each step uses
    uniforms ``2k`` and ``2k + 1``.
    """
    R = np.empty(steps + 1, np.int32)
    L = np.empty(steps + 1, np.int8)
    sig = np.empty(steps, np.int64)
    zs = np.empty(steps, np.int64)
    ns = 0
    R[0] = r0
    L[0] = l0
    r = np.int64(r0)
    i = np.int64(l0)
    for k in range(steps):
        u = uniform(key, np.uint64(2 * k))
        if r <= 0:
            a = _pick(oc, on_, u)
            r = oy[a]
            i = oj[a]
        else:
            z = r + jv[i, _pick(jc[i], jn[i], u)]
            if z > 0:
                r = z
            else:
                sig[ns] = k
                zs[ns] = z
                ns += 1
                if z == 0:
                    r = 0
                    i = -1
                else:
                    u2 = uniform(key, np.uint64(2 * k + 1))
                    y, j, err = critical_step(z, i, u2, ky, kj, kc, kn, kmin,
                                              ext_kind, ext_a, ext_b, ext_cap, ext_shift)
                    if err != 0:
                        return R[: k + 1], L[: k + 1], sig[:ns], zs[:ns], err, z, i
                    if y <= 0:
                        r = 0
                        i = -1
                    else:
                        r = y
                        i = j
        R[k + 1] = r
        L[k + 1] = i
    return R, L, sig[:ns], zs[:ns], 0, 0, 0


# ---------------------------------------------------------------------------
# cycle harvesting for the embedded chains


@njit(cache=True)
def _excursion(r, i, key, ctr, level, jv, jc, jn, hv, hc, hn):
    """Run ray ``i`` from ``r > 0`` until the radius is <= 0; returns (exit, ctr).

    Below ``level`` the walk is stepped; from a height above ``level`` the
    exit point is drawn exactly as ``r - (H_1 + ... + H_N)``, with ``H``
    the strict descending ladder height of the ray.
    """
    while r > 0:
        if level > 0 and r > level:
            while r > 0:
                r -= hv[i, _pick(hc[i], hn[i], uniform(key, ctr))]
                ctr += np.uint64(1)
            return r, ctr
        r += jv[i, _pick(jc[i], jn[i], uniform(key, ctr))]
        ctr += np.uint64(1)
    return r, ctr


@njit(cache=True, nogil=True)
def harvest_axis(n_cycles, budget, r0, l0, key, level, jv, jc, jn, hv, hc, hn,
                 ky, kj, kc, kn, kmin, ext_kind, ext_a, ext_b, ext_cap, ext_shift):
    """Entrance/exit states of ``n_cycles`` consecutive excursions.

    Returns entrance radii/labels (length n+1), exit radii/labels (length n),
    the number of completed cycles and an error code.  Harvesting stops early
    once more than ``budget`` uniforms have been used.  Exit ``k`` ends the
    excursion started at entrance ``k`` and entrance ``k + 1`` follows exit
    ``k`` by one critical move.
    """
    er = np.empty(n_cycles + 1, np.int64)
    el = np.empty(n_cycles + 1, np.int64)
    xr = np.empty(n_cycles, np.int64)
    xl = np.empty(n_cycles, np.int64)
    ctr = np.uint64(0)
    r = np.int64(r0)
    i = np.int64(l0)
    while r <= 0:
        y, j, err = critical_step(r, i, uniform(key, ctr), ky, kj, kc, kn, kmin,
                                  ext_kind, ext_a, ext_b, ext_cap, ext_shift)
        ctr += np.uint64(1)
        if err != 0:
            return er, el, xr, xl, 0, err
        r = y
        i = j
    er[0] = r
    el[0] = i
    for c in range(n_cycles):
        if ctr > budget:
            return er, el, xr, xl, c, 0
        r, ctr = _excursion(r, i, key, ctr, level, jv, jc, jn, hv, hc, hn)
        xr[c] = r
        xl[c] = i
        y, j, err = critical_step(r, i, uniform(key, ctr), ky, kj, kc, kn, kmin,
                                  ext_kind, ext_a, ext_b, ext_cap, ext_shift)
        ctr += np.uint64(1)
        if err != 0:
            return er, el, xr, xl, c, err
        r = y
        i = j
        er[c + 1] = r
        el[c + 1] = i
    return er, el, xr, xl, n_cycles, 0


@njit(cache=True, nogil=True)
def harvest_spider(n_cycles, budget, r0, l0, key, level, jv, jc, jn, hv, hc, hn, oy, oj, oc, on_,
                   ky, kj, kc, kn, kmin, ext_kind, ext_a, ext_b, ext_cap, ext_shift):
    """Spider analogue of :func:`harvest_axis`; exits are attempted landings ``z <= 0``."""
    er = np.empty(n_cycles + 1, np.int64)
    el = np.empty(n_cycles + 1, np.int64)
    xr = np.empty(n_cycles, np.int64)
    xl = np.empty(n_cycles, np.int64)
    ctr = np.uint64(0)
    r = np.int64(r0)
    i = np.int64(l0)
    c = -1
    while c < n_cycles:
        # r <= 0 means the walk is at the origin
        while r <= 0:
            a = _pick(oc, on_, uniform(key, ctr))
            ctr += np.uint64(1)
            r = oy[a]
            i = oj[a]
        c += 1
        er[c] = r
        el[c] = i
        if c == n_cycles or ctr > budget:
            break
        z, ctr = _excursion(r, i, key, ctr, level, jv, jc, jn, hv, hc, hn)
        xr[c] = z
        xl[c] = i
        if z == 0:
            r = 0
        else:
            y, j, err = critical_step(z, i, uniform(key, ctr), ky, kj, kc, kn, kmin,
                                      ext_kind, ext_a, ext_b, ext_cap, ext_shift)
            ctr += np.uint64(1)
            if err != 0:
                return er, el, xr, xl, c, err
            r = y
            i = j
    return er, el, xr, xl, c, 0


@njit(cache=True, nogil=True)
def harvest_membrane(n_cycles, budget, x0, key, level, d, pv, pc, pn, mv, mc, mn,
                     hpv, hpc, hpn, hmv, hmc, hmn, tv, tc, tn):
    """Entrance values X(tau_k) (n+1) and exit values X(sigma_{k+1}) (n).

    The ladder tables ``hp*`` / ``hm*`` belong to the radii ``X - d`` on the
    right and ``-X - d`` on the left.
    """
    ent = np.empty(n_cycles + 1, np.int64)
    ext = np.empty(n_cycles, np.int64)
    ctr = np.uint64(0)
    x = np.int64(x0)
    while abs(x) <= d:
        row = x + d
        x = tv[row, _pick(tc[row], tn[row], uniform(key, ctr))]
        ctr += np.uint64(1)
    ent[0] = x
    for c in range(n_cycles):
        if ctr > budget:
            return ent, ext, c
        if x > d:
            r = x - d
            while r > 0:
                if level > 0 and r > level:
                    while r > 0:
                        r -= hpv[_pick(hpc, hpn, uniform(key, ctr))]
                        ctr += np.uint64(1)
                    break
                r += pv[_pick(pc, pn, uniform(key, ctr))]
                ctr += np.uint64(1)
            x = r + d
        else:
            r = -x - d
            while r > 0:
                if level > 0 and r > level:
                    while r > 0:
                        r -= hmv[_pick(hmc, hmn, uniform(key, ctr))]
                        ctr += np.uint64(1)
                    break
                r -= mv[_pick(mc, mn, uniform(key, ctr))]
                ctr += np.uint64(1)
            x = -r - d
        ext[c] = x
        while abs(x) <= d:
            row = x + d
            x = tv[row, _pick(tc[row], tn[row], uniform(key, ctr))]
            ctr += np.uint64(1)
        ent[c + 1] = x
    return ent, ext, n_cycles
