"""Hartigan's dip statistic of unimodality.

The core is the greatest-convex-minorant / least-concave-majorant iteration of
Hartigan & Hartigan (1985), AS 217, in the corrected form distributed with the
R ``diptest`` package. It works in units of ``2n * dip`` and divides at the end.

References
----------
Hartigan, J. A. and Hartigan, P. M. "The dip test of unimodality."
Annals of Statistics 13 (1985): 70-84.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit


class DipResult(NamedTuple):
    dip: float
    modal_interval: tuple[float, float]


@njit(cache=True)
def _dip_sorted(x):
    n = x.shape[0]
    low = 0
    high = n - 1
    dip = 1.0

    mn = np.zeros(n, dtype=np.int64)
    for j in range(1, n):
        mn[j] = j - 1
        while True:
            mnj = mn[j]
            mnmnj = mn[mnj]
            if mnj == 0 or (x[j] - x[mnj]) * (mnj - mnmnj) < (x[mnj] - x[mnmnj]) * (j - mnj):
                break
            mn[j] = mnmnj

    mj = np.zeros(n, dtype=np.int64)
    mj[n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        mj[k] = k + 1
        while True:
            mjk = mj[k]
            mjmjk = mj[mjk]
            if mjk == n - 1 or (x[k] - x[mjk]) * (mjk - mjmjk) < (x[mjk] - x[mjmjk]) * (k - mjk):
                break
            mj[k] = mjmjk

    gcm = np.zeros(n + 1, dtype=np.int64)
    lcm = np.zeros(n + 1, dtype=np.int64)
    while True:
        gcm[0] = high
        i = 0
        while gcm[i] > low:
            gcm[i + 1] = mn[gcm[i]]
            i += 1
        ig = i
        l_gcm = i
        ix = ig - 1

        lcm[0] = low
        i = 0
        while lcm[i] < high:
            lcm[i + 1] = mj[lcm[i]]
            i += 1
        ih = i
        l_lcm = i
        iv = 1

        d = 0.0
        if l_gcm != 1 or l_lcm != 1:
            while True:
                gcmix = gcm[ix]
                lcmiv = lcm[iv]
                if gcmix > lcmiv:
                    gcmil = gcm[ix + 1]
                    dx = (lcmiv - gcmil + 1) - (x[lcmiv] - x[gcmil]) * (gcmix - gcmil) / (x[gcmix] - x[gcmil])
                    iv += 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv - 1
                else:
                    lcmivl = lcm[iv - 1]
                    dx = (x[gcmix] - x[lcmivl]) * (lcmiv - lcmivl) / (x[lcmiv] - x[lcmivl]) - (gcmix - lcmivl - 1)
                    ix -= 1
                    if dx >= d:
                        d = dx
                        ig = ix + 1
                        ih = iv
                if ix < 0:
                    ix = 0
                if iv > l_lcm:
                    iv = l_lcm
                if gcm[ix] == lcm[iv]:
                    break
        if d < dip:
            break

        dip_l = 0.0
        for j in range(ig, l_gcm):
            max_t = 1.0
            jb = gcm[j + 1]
            je = gcm[j]
            if je - jb > 1 and x[je] != x[jb]:
                span = x[je] - x[jb]
                for jj in range(jb, je + 1):
                    # ratio form: no overflow when the span is subnormal
                    t = (jj - jb + 1) - (x[jj] - x[jb]) * (je - jb) / span
                    if max_t < t:
                        max_t = t
            if dip_l < max_t:
                dip_l = max_t

        dip_u = 0.0
        for j in range(ih, l_lcm):
            max_t = 1.0
            jb = lcm[j]
            je = lcm[j + 1]
            if je - jb > 1 and x[je] != x[jb]:
                span = x[je] - x[jb]
                for jj in range(jb, je + 1):
                    t = (x[jj] - x[jb]) * (je - jb) / span - (jj - jb - 1)
                    if max_t < t:
                        max_t = t
            if dip_u < max_t:
                dip_u = max_t

        dip_new = dip_u if dip_u > dip_l else dip_l
        if dip < dip_new:
            dip = dip_new
        if low == gcm[ig] and high == lcm[ih]:
            break
        low = gcm[ig]
        high = lcm[ih]
    return dip / (2 * n), low, high


def dip_statistic(sample, presorted: bool = False) -> DipResult:
    """Dip of a 1-d sample and the modal interval ``(x_low, x_high)`` found by the iteration.

    A constant sample has dip 0; otherwise ``1/(2n) <= dip <= 1/4``.
    """
    x = np.asarray(sample, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("dip of an empty sample is undefined")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains NaN or infinite values")
    if not presorted:
        x = np.sort(x)
    if x[0] == x[-1]:
        return DipResult(0.0, (float(x[0]), float(x[-1])))
    # the dip is scale invariant; halving keeps differences finite near the float range
    z = x * 0.5 if max(-x[0], x[-1]) > 8e307 else x
    d, lo, hi = _dip_sorted(z)
    return DipResult(float(d), (float(x[lo]), float(x[hi])))


def dip(sample) -> float:
    return dip_statistic(sample).dip
