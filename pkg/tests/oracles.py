"""Independent reference computations used only by the test-suite."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog


def dip_lp(sample) -> float:
    """Exact dip for small samples by linear programming over unimodal CDFs.

    For each candidate mode at a distinct sample value, the unimodal CDF is
    described by its values at the sample points (plus the left limit at the
    mode, where an atom is allowed). Convexity left of the mode and concavity
    right of it are linear constraints on secant slopes; the sup-distance to
    the empirical CDF, checked at every value and left limit, is minimised.
    Modes strictly between sample points never do better than a mode at an
    adjacent point, so this enumeration is exhaustive.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    u, counts = np.unique(x, return_counts=True)
    m = len(u)
    if m == 1:
        return 0.0
    ecdf = np.cumsum(counts) / n
    left = np.concatenate([[0.0], ecdf[:-1]])
    best = np.inf
    for k in range(m):
        # variables: a_0..a_{m-1}, L (left limit at u_k), t
        nv = m + 2
        iL, it = m, m + 1
        A, b = [], []

        def row():
            return np.zeros(nv)

        def lim(j):
            return iL if j == k else j

        for j in range(m):
            for var, target in ((j, ecdf[j]), (lim(j), left[j])):
                r = row(); r[var] = 1; r[it] = -1; A.append(r); b.append(target)
                r = row(); r[var] = -1; r[it] = -1; A.append(r); b.append(-target)
        r = row(); r[iL] = 1; r[k] = -1; A.append(r); b.append(0.0)
        # left part: points 0..k-1 then (u_k, L)
        lpts = [(j, j) for j in range(k)] + [(k, iL)]
        for (p, vp), (q, vq), (s, vs) in zip(lpts, lpts[1:], lpts[2:]):
            # slope(p,q) <= slope(q,s)
            r = row()
            r[vq] += 1 / (u[q] - u[p]); r[vp] -= 1 / (u[q] - u[p])
            r[vs] -= 1 / (u[s] - u[q]); r[vq] += 1 / (u[s] - u[q])
            A.append(r); b.append(0.0)
        if len(lpts) >= 2:
            (p, vp), (q, vq) = lpts[0], lpts[1]
            r = row(); r[vp] = 1; r[vq] = -1; A.append(r); b.append(0.0)
        rpts = list(range(k, m))
        for p, q, s in zip(rpts, rpts[1:], rpts[2:]):
            # slope(p,q) >= slope(q,s)
            r = row()
            r[q] -= 1 / (u[q] - u[p]); r[p] += 1 / (u[q] - u[p])
            r[s] += 1 / (u[s] - u[q]); r[q] -= 1 / (u[s] - u[q])
            A.append(r); b.append(0.0)
        if len(rpts) >= 2:
            p, q = rpts[-2], rpts[-1]
            r = row(); r[p] = 1; r[q] = -1; A.append(r); b.append(0.0)
        c = np.zeros(nv); c[it] = 1
        bounds = [(0, 1)] * (m + 1) + [(0, None)]
        res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), bounds=bounds, method="highs")
        if res.status == 0:
            best = min(best, res.fun)
    return float(best)
