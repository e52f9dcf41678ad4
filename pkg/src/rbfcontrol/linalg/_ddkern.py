"""Compiled double-double kernels.

A double-double number is an unevaluated sum ``hi + lo`` with ``|lo| <= ulp(hi)/2``.
Every routine here takes and returns the two float64 components separately.
The error-free transformations follow Dekker / Knuth; ``two_prod`` uses
Veltkamp splitting so the code does not depend on a hardware FMA.
"""

import numpy as np
from numba import guvectorize, njit

_SPLITTER = 134217729.0  # 2**27 + 1


@njit(inline="always", cache=True)
def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(inline="always", cache=True)
def quick_two_sum(a, b):
    s = a + b
    return s, b - (s - a)


@njit(inline="always", cache=True)
def two_prod(a, b):
    p = a * b
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(inline="always", cache=True)
def dd_add(ah, al, bh, bl):
    s, e = two_sum(ah, bh)
    t, f = two_sum(al, bl)
    e += t
    s, e = quick_two_sum(s, e)
    e += f
    return quick_two_sum(s, e)


@njit(inline="always", cache=True)
def dd_mul(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    e += ah * bl + al * bh
    return quick_two_sum(p, e)


@njit(inline="always", cache=True)
def dd_div(ah, al, bh, bl):
    q1 = ah / bh
    ph, pl = dd_mul(q1, 0.0, bh, bl)
    rh, rl = dd_add(ah, al, -ph, -pl)
    q2 = rh / bh
    ph, pl = dd_mul(q2, 0.0, bh, bl)
    rh, rl = dd_add(rh, rl, -ph, -pl)
    q3 = rh / bh
    q1, q2 = quick_two_sum(q1, q2)
    return dd_add(q1, q2, q3, 0.0)


@njit(inline="always", cache=True)
def dd_sqrt(ah, al):
    if ah <= 0.0:
        return 0.0, 0.0
    x = 1.0 / np.sqrt(ah)
    ax = ah * x
    ph, pl = two_prod(ax, ax)
    rh, rl = dd_add(ah, al, -ph, -pl)
    return dd_add(ax, 0.0, rh * (x * 0.5), 0.0)


# ---------------------------------------------------------------- elementwise


@guvectorize(["void(f8,f8,f8,f8,f8[:],f8[:])"], "(),(),(),()->(),()", nopython=True, cache=True)
def g_add(ah, al, bh, bl, oh, ol):
    oh[0], ol[0] = dd_add(ah, al, bh, bl)


@guvectorize(["void(f8,f8,f8,f8,f8[:],f8[:])"], "(),(),(),()->(),()", nopython=True, cache=True)
def g_mul(ah, al, bh, bl, oh, ol):
    oh[0], ol[0] = dd_mul(ah, al, bh, bl)


@guvectorize(["void(f8,f8,f8,f8,f8[:],f8[:])"], "(),(),(),()->(),()", nopython=True, cache=True)
def g_div(ah, al, bh, bl, oh, ol):
    oh[0], ol[0] = dd_div(ah, al, bh, bl)


@guvectorize(["void(f8,f8,f8[:],f8[:])"], "(),()->(),()", nopython=True, cache=True)
def g_sqrt(ah, al, oh, ol):
    oh[0], ol[0] = dd_sqrt(ah, al)


@guvectorize(["void(f8[:],f8[:],f8[:],f8[:])"], "(n),(n)->(),()", nopython=True, cache=True)
def g_sum(ah, al, oh, ol):
    sh = 0.0
    sl = 0.0
    for i in range(ah.shape[0]):
        sh, sl = dd_add(sh, sl, ah[i], al[i])
    oh[0] = sh
    ol[0] = sl


# ------------------------------------------------------------- dense kernels


@njit(cache=True)
def matmul(ah, al, bh, bl):
    n, k = ah.shape
    m = bh.shape[1]
    ch = np.zeros((n, m))
    cl = np.zeros((n, m))
    for i in range(n):
        for p in range(k):
            xh = ah[i, p]
            xl = al[i, p]
            if xh == 0.0 and xl == 0.0:
                continue
            for j in range(m):
                ph, pl = dd_mul(xh, xl, bh[p, j], bl[p, j])
                ch[i, j], cl[i, j] = dd_add(ch[i, j], cl[i, j], ph, pl)
    return ch, cl


@njit(cache=True)
def lu_factor_inplace(ah, al, perm):
    """Partial-pivoted LU in place; returns the first zero-pivot column or -1."""
    n = ah.shape[0]
    for i in range(n):
        perm[i] = i
    for k in range(n):
        p = k
        best = abs(ah[k, k])
        for i in range(k + 1, n):
            v = abs(ah[i, k])
            if v > best:
                best = v
                p = i
        if p != k:
            for j in range(n):
                t = ah[k, j]
                ah[k, j] = ah[p, j]
                ah[p, j] = t
                t = al[k, j]
                al[k, j] = al[p, j]
                al[p, j] = t
            t2 = perm[k]
            perm[k] = perm[p]
            perm[p] = t2
        ph = ah[k, k]
        pl = al[k, k]
        if ph == 0.0 and pl == 0.0:
            return k
        for i in range(k + 1, n):
            lh, ll = dd_div(ah[i, k], al[i, k], ph, pl)
            ah[i, k] = lh
            al[i, k] = ll
            if lh == 0.0 and ll == 0.0:
                continue
            for j in range(k + 1, n):
                mh, ml = dd_mul(lh, ll, ah[k, j], al[k, j])
                ah[i, j], al[i, j] = dd_add(ah[i, j], al[i, j], -mh, -ml)
    return -1


@njit(cache=True)
def lu_solve(luh, lul, perm, bh, bl):
    """Solve (P^T L U) X = B for a 2-D right-hand side."""
    n = luh.shape[0]
    r = bh.shape[1]
    xh = np.empty((n, r))
    xl = np.empty((n, r))
    for i in range(n):
        for j in range(r):
            xh[i, j] = bh[perm[i], j]
            xl[i, j] = bl[perm[i], j]
    for i in range(n):
        for k in range(i):
            lh = luh[i, k]
            ll = lul[i, k]
            if lh == 0.0 and ll == 0.0:
                continue
            for j in range(r):
                mh, ml = dd_mul(lh, ll, xh[k, j], xl[k, j])
                xh[i, j], xl[i, j] = dd_add(xh[i, j], xl[i, j], -mh, -ml)
    for i in range(n - 1, -1, -1):
        for k in range(i + 1, n):
            uh = luh[i, k]
            ul = lul[i, k]
            if uh == 0.0 and ul == 0.0:
                continue
            for j in range(r):
                mh, ml = dd_mul(uh, ul, xh[k, j], xl[k, j])
                xh[i, j], xl[i, j] = dd_add(xh[i, j], xl[i, j], -mh, -ml)
        dh = luh[i, i]
        dl = lul[i, i]
        for j in range(r):
            xh[i, j], xl[i, j] = dd_div(xh[i, j], xl[i, j], dh, dl)
    return xh, xl


@njit(cache=True)
def batch_solve(ah, al, bh, bl):
    """Solve a stack of systems A[b] x[b] = rhs[b]; returns (xh, xl, info)."""
    nb, n, _ = ah.shape
    xh = np.empty((nb, n))
    xl = np.empty((nb, n))
    info = np.full(nb, -1, dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    for b in range(nb):
        wh = ah[b].copy()
        wl = al[b].copy()
        info[b] = lu_factor_inplace(wh, wl, perm)
        if info[b] >= 0:
            xh[b, :] = np.nan
            xl[b, :] = np.nan
            continue
        sh, sl = lu_solve(wh, wl, perm, bh[b].reshape(n, 1), bl[b].reshape(n, 1))
        xh[b, :] = sh[:, 0]
        xl[b, :] = sl[:, 0]
    return xh, xl, info


@njit(cache=True)
def batch_inverse(ah, al):
    nb, n, _ = ah.shape
    oh = np.empty_like(ah)
    ol = np.empty_like(al)
    info = np.full(nb, -1, dtype=np.int64)
    perm = np.empty(n, dtype=np.int64)
    eye = np.eye(n)
    zero = np.zeros((n, n))
    for b in range(nb):
        wh = ah[b].copy()
        wl = al[b].copy()
        info[b] = lu_factor_inplace(wh, wl, perm)
        if info[b] >= 0:
            oh[b] = np.nan
            ol[b] = np.nan
            continue
        sh, sl = lu_solve(wh, wl, perm, eye, zero)
        oh[b] = sh
        ol[b] = sl
    return oh, ol, info


@njit(cache=True)
def batch_matmul(ah, al, bh, bl):
    nb = ah.shape[0]
    ch = np.empty((nb, ah.shape[1], bh.shape[2]))
    cl = np.empty_like(ch)
    for b in range(nb):
        h, l = matmul(ah[b], al[b], bh[b], bl[b])
        ch[b] = h
        cl[b] = l
    return ch, cl


# ------------------------------------------------------------- sparse kernels


# -- exactly rounded products ---------------------------------------------
# Used where a product cancels by many orders of magnitude (explicit inverses
# of ill-conditioned matrices): plain double-double rounding would leave too
# few correct digits.

_MAX_PARTIALS = 80


@njit(inline="always", cache=True)
def _grow(partials, n, x):
    """Add ``x`` to a non-overlapping expansion (Shewchuk); returns its new length."""
    i = 0
    for j in range(n):
        y = partials[j]
        if abs(x) < abs(y):
            x, y = y, x
        hi = x + y
        lo = y - (hi - x)
        if lo != 0.0:
            partials[i] = lo
            i += 1
        x = hi
    partials[i] = x
    return i + 1


@njit(inline="always", cache=True)
def _expansion_to_dd(partials, n):
    sh, sl = 0.0, 0.0
    for j in range(n - 1, -1, -1):
        sh, sl = dd_add(sh, sl, partials[j], 0.0)
    return sh, sl


@njit(cache=True)
def matmul_exact(ah, al, bh, bl):
    """``a @ b`` with every entry the double-double rounding of the exact dot product."""
    n, m = ah.shape
    p = bh.shape[1]
    ch = np.empty((n, p))
    cl = np.empty((n, p))
    partials = np.empty(_MAX_PARTIALS)
    for i in range(n):
        for j in range(p):
            k = 0
            for t in range(m):
                x1, x2 = ah[i, t], al[i, t]
                y1, y2 = bh[t, j], bl[t, j]
                if (x1 == 0.0 and x2 == 0.0) or (y1 == 0.0 and y2 == 0.0):
                    continue
                for u, v in ((x1, y1), (x1, y2), (x2, y1), (x2, y2)):
                    if u == 0.0 or v == 0.0:
                        continue
                    s, e = two_prod(u, v)
                    k = _grow(partials, k, s)
                    if e != 0.0:
                        k = _grow(partials, k, e)
            ch[i, j], cl[i, j] = _expansion_to_dd(partials, k)
    return ch, cl


@njit(cache=True)
def batch_matmul_exact(ah, al, bh, bl):
    nb = ah.shape[0]
    ch = np.empty((nb, ah.shape[1], bh.shape[2]))
    cl = np.empty_like(ch)
    for b in range(nb):
        h, l = matmul_exact(ah[b], al[b], bh[b], bl[b])
        ch[b] = h
        cl[b] = l
    return ch, cl


@njit(cache=True)
def csr_matvec(indptr, indices, dh, dl, xh, xl):
    n = indptr.shape[0] - 1
    yh = np.zeros(n)
    yl = np.zeros(n)
    for i in range(n):
        sh = 0.0
        sl = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            mh, ml = dd_mul(dh[p], dl[p], xh[j], xl[j])
            sh, sl = dd_add(sh, sl, mh, ml)
        yh[i] = sh
        yl[i] = sl
    return yh, yl


@njit(cache=True)
def segment_sum(starts, vh, vl):
    """Sum consecutive segments ``v[starts[i]:starts[i+1]]``; last runs to the end."""
    m = starts.shape[0]
    oh = np.zeros(m)
    ol = np.zeros(m)
    n = vh.shape[0]
    for i in range(m):
        stop = starts[i + 1] if i + 1 < m else n
        sh = 0.0
        sl = 0.0
        for p in range(starts[i], stop):
            sh, sl = dd_add(sh, sl, vh[p], vl[p])
        oh[i] = sh
        ol[i] = sl
    return oh, ol
