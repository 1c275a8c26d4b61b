"""Compiled sampler core.

The collapsed densities only touch each community through per-dimension
normal-equation statistics: with basis rows ``phi`` and scaling ``Delta``,
the Gram form ``(Phi Delta Phi' + I)`` is handled through the Woodbury
identity, so everything reduces to

    M = Delta^{-1} + sum phi phi',   v = sum phi x,   s2 = sum x^2

per (community, dimension), plus the residual sum ``r = sum (x - theta)^2``
on the fixed identity dimension.  All moves update these in O(q^2).

Layout conventions shared by every function here:

    st   = (z, theta, kid, nk, M, v, s2, r)        mutable chain state
    menu = (npow, pows, nknot, knots, qarr,
            dinv, dlogdet, cprior, cprob)          kernel candidates
    tconst[m] and lgam[m] are lgamma tables indexed by community size.

Kernel candidates are encoded per (candidate, dimension) as monomial
exponents followed by cubic truncated-power knots.  Labels are kept dense
in ``0..K-1``; transdimensional moves compact slots by swapping with the
last one.  Move functions return ``accepted`` as -1 on numerical failure,
which the caller turns into an exception.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG2PI = math.log(2.0 * math.pi)

# counter rows
MOVE_Z = 0
MOVE_THETA = 1
MOVE_SPLIT = 2
MOVE_MERGE = 3
MOVE_EMPTY_ADD = 4
MOVE_EMPTY_REMOVE = 5
MOVE_KERNEL = 6
N_MOVES = 7


@njit(cache=True, inline="always")
def _fill_phi(menu, c, j, th, out):
    npow, pows, nknot, knots = menu[0], menu[1], menu[2], menu[3]
    m = npow[c, j]
    for t in range(m):
        out[t] = th ** pows[c, j, t]
    for t in range(nknot[c, j]):
        dt = th - knots[c, j, t]
        out[m + t] = dt * dt * dt if dt > 0.0 else 0.0
    return menu[4][c, j]


@njit(cache=True)
def _chol(a, lo, q, boost):
    for i in range(q):
        for j in range(i + 1):
            s = a[i, j]
            if i == j:
                s += boost
                for t in range(j):
                    s -= lo[i, t] * lo[i, t]
                if s <= 0.0 or not math.isfinite(s):
                    return False
                lo[i, i] = math.sqrt(s)
            else:
                for t in range(j):
                    s -= lo[i, t] * lo[j, t]
                lo[i, j] = s / lo[j, j]
    return True


@njit(cache=True)
def _chol_robust(a, lo, q):
    if _chol(a, lo, q, 0.0):
        return True
    tr = 0.0
    for i in range(q):
        tr += a[i, i]
    boost = 1e-10 * tr / q + 1e-300
    for _ in range(3):
        if _chol(a, lo, q, boost):
            return True
        boost *= 1e4
    return False


@njit(cache=True)
def _pred_dim(x, phiv, q, mkj, vkj, s2kj, m, a0, b0, tconst, lo, y, w):
    """Student-t log predictive of one value on one curve dimension."""
    if not _chol_robust(mkj, lo, q):
        return np.nan
    for i in range(q):
        sv = vkj[i]
        sw = phiv[i]
        for t in range(i):
            sv -= lo[i, t] * y[t]
            sw -= lo[i, t] * w[t]
        y[i] = sv / lo[i, i]
        w[i] = sw / lo[i, i]
    quad_v = 0.0
    mu = 0.0
    xi = 0.0
    for i in range(q):
        quad_v += y[i] * y[i]
        mu += w[i] * y[i]
        xi += w[i] * w[i]
    a = a0 + 0.5 * m
    b = b0 + 0.5 * max(s2kj - quad_v, 0.0)
    scale2 = b / a * (1.0 + xi)
    dx = x - mu
    return (
        tconst[m]
        - 0.5 * math.log(scale2)
        - (a + 0.5) * math.log1p(dx * dx / (2.0 * a * scale2))
    )


@njit(cache=True, inline="always")
def _pred_ident(x, th, rsum, m, a0, b0, tconst):
    a = a0 + 0.5 * m
    scale2 = (b0 + 0.5 * rsum) / a
    dx = x - th
    return (
        tconst[m]
        - 0.5 * math.log(scale2)
        - (a + 0.5) * math.log1p(dx * dx / (2.0 * a * scale2))
    )


@njit(cache=True)
def _node_loglik(X, st, menu, i, k, identity0, a0, b0, tconst, lo, y, w, phibuf):
    """Sum over dimensions of the log predictive of node i in community k."""
    z, theta, kid, nk, M, v, s2, r = st
    d = X.shape[1]
    th = theta[i]
    m = nk[k]
    c = kid[k]
    tot = 0.0
    j0 = 0
    if identity0 == 1:
        tot = _pred_ident(X[i, 0], th, r[k], m, a0, b0, tconst)
        j0 = 1
    for j in range(j0, d):
        q = _fill_phi(menu, c, j, th, phibuf)
        lp = _pred_dim(
            X[i, j], phibuf, q, M[k, j], v[k, j], s2[k, j], m, a0, b0, tconst, lo, y, w
        )
        if math.isnan(lp):
            return np.nan
        tot += lp
    return tot


@njit(cache=True)
def _update_node(X, st, menu, i, k, identity0, sign, phibuf):
    """Add (+1) or remove (-1) node i's contribution to community k's stats."""
    z, theta, kid, nk, M, v, s2, r = st
    d = X.shape[1]
    th = theta[i]
    c = kid[k]
    fs = float(sign)
    j0 = 0
    if identity0 == 1:
        dx = X[i, 0] - th
        r[k] += fs * dx * dx
        j0 = 1
    for j in range(j0, d):
        q = _fill_phi(menu, c, j, th, phibuf)
        x = X[i, j]
        s2[k, j] += fs * x * x
        for a in range(q):
            v[k, j, a] += fs * phibuf[a] * x
            pa = fs * phibuf[a]
            for b in range(q):
                M[k, j, a, b] += pa * phibuf[b]
    nk[k] += sign


@njit(cache=True)
def _rebuild_comm(X, st, menu, k, identity0, phibuf):
    """Recompute community k's statistics from scratch under its kernel."""
    z, theta, kid, nk, M, v, s2, r = st
    n, d = X.shape
    c = kid[k]
    r[k] = 0.0
    j0 = 1 if identity0 == 1 else 0
    for j in range(d):
        s2[k, j] = 0.0
    for j in range(j0, d):
        q = menu[4][c, j]
        for a in range(q):
            v[k, j, a] = 0.0
            for b in range(q):
                M[k, j, a, b] = menu[5][c, j, a, b]
    cnt = 0
    for i in range(n):
        if z[i] == k:
            cnt += 1
            th = theta[i]
            if identity0 == 1:
                dx = X[i, 0] - th
                r[k] += dx * dx
            for j in range(j0, d):
                q = _fill_phi(menu, c, j, th, phibuf)
                x = X[i, j]
                s2[k, j] += x * x
                for a in range(q):
                    v[k, j, a] += phibuf[a] * x
                    for b in range(q):
                        M[k, j, a, b] += phibuf[a] * phibuf[b]
    nk[k] = cnt


@njit(cache=True)
def _init_empty_comm(menu, k, c, d, identity0, M, v, s2, r):
    r[k] = 0.0
    j0 = 1 if identity0 == 1 else 0
    for j in range(d):
        s2[k, j] = 0.0
    for j in range(j0, d):
        q = menu[4][c, j]
        for a in range(q):
            v[k, j, a] = 0.0
            for b in range(q):
                M[k, j, a, b] = menu[5][c, j, a, b]


@njit(cache=True)
def _marginal_kj(st, menu, k, j, identity0, a0, b0, lgam, lo, y):
    """Marginal log likelihood of one (community, dimension) from stored stats."""
    z, theta, kid, nk, M, v, s2, r = st
    m = nk[k]
    if m == 0:
        return 0.0
    a_m = a0 + 0.5 * m
    base = lgam[m] - lgam[0] + a0 * math.log(b0) - 0.5 * m * LOG2PI
    if identity0 == 1 and j == 0:
        return base - a_m * math.log(b0 + 0.5 * r[k])
    c = kid[k]
    q = menu[4][c, j]
    if not _chol_robust(M[k, j], lo, q):
        return np.nan
    logdet_m = 0.0
    quad = 0.0
    for i in range(q):
        logdet_m += 2.0 * math.log(lo[i, i])
        sv = v[k, j, i]
        for t in range(i):
            sv -= lo[i, t] * y[t]
        y[i] = sv / lo[i, i]
        quad += y[i] * y[i]
    b_m = b0 + 0.5 * max(s2[k, j] - quad, 0.0)
    return base - a_m * math.log(b_m) - 0.5 * (menu[6][c, j] + logdet_m)


@njit(cache=True)
def _marginal_comm_stored(st, menu, k, d, identity0, a0, b0, lgam, lo, y):
    tot = 0.0
    for j in range(d):
        ml = _marginal_kj(st, menu, k, j, identity0, a0, b0, lgam, lo, y)
        if math.isnan(ml):
            return np.nan
        tot += ml
    return tot


@njit(cache=True)
def _marginal_comm_cand(
    X, st, menu, ka, kb, cand, identity0, a0, b0, lgam, mbuf, vbuf, lo, y, phibuf
):
    """Marginal of the community ka (optionally merged with kb >= 0) under a
    candidate kernel, recomputing the statistics from scratch."""
    z, theta, kid, nk, M, v, s2, r = st
    n, d = X.shape
    m = nk[ka] + (nk[kb] if kb >= 0 else 0)
    if m == 0:
        return 0.0
    a_m = a0 + 0.5 * m
    base = lgam[m] - lgam[0] + a0 * math.log(b0) - 0.5 * m * LOG2PI
    tot = 0.0
    j0 = 0
    if identity0 == 1:
        rsum = 0.0
        for i in range(n):
            if z[i] == ka or (kb >= 0 and z[i] == kb):
                dx = X[i, 0] - theta[i]
                rsum += dx * dx
        tot += base - a_m * math.log(b0 + 0.5 * rsum)
        j0 = 1
    for j in range(j0, d):
        q = menu[4][cand, j]
        for a in range(q):
            vbuf[a] = 0.0
            for b in range(q):
                mbuf[a, b] = menu[5][cand, j, a, b]
        sxx = 0.0
        for i in range(n):
            if z[i] == ka or (kb >= 0 and z[i] == kb):
                _fill_phi(menu, cand, j, theta[i], phibuf)
                x = X[i, j]
                sxx += x * x
                for a in range(q):
                    vbuf[a] += phibuf[a] * x
                    for b in range(q):
                        mbuf[a, b] += phibuf[a] * phibuf[b]
        if not _chol_robust(mbuf, lo, q):
            return np.nan
        logdet_m = 0.0
        quad = 0.0
        for i in range(q):
            logdet_m += 2.0 * math.log(lo[i, i])
            sv = vbuf[i]
            for t in range(i):
                sv -= lo[i, t] * y[t]
            y[i] = sv / lo[i, i]
            quad += y[i] * y[i]
        b_m = b0 + 0.5 * max(sxx - quad, 0.0)
        tot += base - a_m * math.log(b_m) - 0.5 * (menu[6][cand, j] + logdet_m)
    return tot


@njit(cache=True)
def _log_prior_z_counts(counts, K, n, nu):
    nu_k = nu / K
    tot = math.lgamma(nu) - K * math.lgamma(nu_k) - math.lgamma(n + nu)
    for k in range(K):
        tot += math.lgamma(counts[k] + nu_k)
    return tot


@njit(cache=True, inline="always")
def _draw_cand(menu, rng):
    cprob = menu[8]
    u = rng.random()
    acc = 0.0
    for c in range(cprob.size):
        acc += cprob[c]
        if u <= acc:
            return c
    return cprob.size - 1


@njit(cache=True)
def _gibbs_node(
    X, st, menu, K, i, identity0, a0, b0, nu, tconst, rng, lo, y, w, phibuf, logp
):
    """Resample node i's label from its full conditional.  Returns -1 on
    numerical failure, else 1 if the label changed and 0 otherwise."""
    z = st[0]
    nk = st[3]
    kold = z[i]
    _update_node(X, st, menu, i, kold, identity0, -1, phibuf)
    nu_k = nu / K
    best = -np.inf
    for k in range(K):
        lp = math.log(nk[k] + nu_k) + _node_loglik(
            X, st, menu, i, k, identity0, a0, b0, tconst, lo, y, w, phibuf
        )
        if math.isnan(lp):
            _update_node(X, st, menu, i, kold, identity0, 1, phibuf)
            return -1
        logp[k] = lp
        if lp > best:
            best = lp
    tot = 0.0
    for k in range(K):
        logp[k] = math.exp(logp[k] - best)
        tot += logp[k]
    u = rng.random() * tot
    acc = 0.0
    knew = K - 1
    for k in range(K):
        acc += logp[k]
        if u <= acc:
            knew = k
            break
    z[i] = knew
    _update_node(X, st, menu, i, knew, identity0, 1, phibuf)
    return 1 if knew != kold else 0


@njit(cache=True)
def _theta_node(
    X, st, menu, i, identity0, a0, b0, mu_t, s2_t, s2p, tconst, rng, lo, y, w, phibuf
):
    """Random-walk update of node i's coordinate.  Returns -1 on failure,
    else 1 if accepted and 0 otherwise."""
    z, theta = st[0], st[1]
    k = z[i]
    _update_node(X, st, menu, i, k, identity0, -1, phibuf)
    th_old = theta[i]
    th_new = th_old + math.sqrt(s2p) * rng.standard_normal()
    lp_old = _node_loglik(X, st, menu, i, k, identity0, a0, b0, tconst, lo, y, w, phibuf)
    theta[i] = th_new
    lp_new = _node_loglik(X, st, menu, i, k, identity0, a0, b0, tconst, lo, y, w, phibuf)
    if math.isnan(lp_old) or math.isnan(lp_new):
        theta[i] = th_old
        _update_node(X, st, menu, i, k, identity0, 1, phibuf)
        return -1
    d_old = th_old - mu_t
    d_new = th_new - mu_t
    logr = lp_new - lp_old - 0.5 * (d_new * d_new - d_old * d_old) / s2_t
    accept = logr >= 0.0 or rng.random() < math.exp(logr)
    if not accept:
        theta[i] = th_old
    _update_node(X, st, menu, i, k, identity0, 1, phibuf)
    return 1 if accept else 0


@njit(cache=True)
def _tmp_init(menu, side, cand, d, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc):
    tmpc[side] = cand
    tmpn[side] = 0
    tmpr[side] = 0.0
    j0 = 1 if identity0 == 1 else 0
    for j in range(d):
        tmps2[side, j] = 0.0
    for j in range(j0, d):
        q = menu[4][cand, j]
        for a in range(q):
            tmpv[side, j, a] = 0.0
            for b in range(q):
                tmpM[side, j, a, b] = menu[5][cand, j, a, b]


@njit(cache=True)
def _tmp_add(X, theta, menu, i, side, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf):
    d = X.shape[1]
    th = theta[i]
    cand = tmpc[side]
    j0 = 0
    if identity0 == 1:
        dx = X[i, 0] - th
        tmpr[side] += dx * dx
        j0 = 1
    for j in range(j0, d):
        q = _fill_phi(menu, cand, j, th, phibuf)
        x = X[i, j]
        tmps2[side, j] += x * x
        for a in range(q):
            tmpv[side, j, a] += phibuf[a] * x
            for b in range(q):
                tmpM[side, j, a, b] += phibuf[a] * phibuf[b]
    tmpn[side] += 1


@njit(cache=True)
def _tmp_loglik(
    X, theta, menu, i, side, identity0, a0, b0, tconst,
    tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y, w, phibuf,
):
    d = X.shape[1]
    th = theta[i]
    cand = tmpc[side]
    m = tmpn[side]
    tot = 0.0
    j0 = 0
    if identity0 == 1:
        tot = _pred_ident(X[i, 0], th, tmpr[side], m, a0, b0, tconst)
        j0 = 1
    for j in range(j0, d):
        q = _fill_phi(menu, cand, j, th, phibuf)
        lp = _pred_dim(
            X[i, j], phibuf, q, tmpM[side, j], tmpv[side, j], tmps2[side, j],
            m, a0, b0, tconst, lo, y, w,
        )
        if math.isnan(lp):
            return np.nan
        tot += lp
    return tot


@njit(cache=True)
def _tmp_marginal(
    menu, side, d, identity0, a0, b0, lgam, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y
):
    m = tmpn[side]
    if m == 0:
        return 0.0
    cand = tmpc[side]
    a_m = a0 + 0.5 * m
    base = lgam[m] - lgam[0] + a0 * math.log(b0) - 0.5 * m * LOG2PI
    tot = 0.0
    j0 = 0
    if identity0 == 1:
        tot += base - a_m * math.log(b0 + 0.5 * tmpr[side])
        j0 = 1
    for j in range(j0, d):
        q = menu[4][cand, j]
        if not _chol_robust(tmpM[side, j], lo, q):
            return np.nan
        logdet_m = 0.0
        quad = 0.0
        for i in range(q):
            logdet_m += 2.0 * math.log(lo[i, i])
            sv = tmpv[side, j, i]
            for t in range(i):
                sv -= lo[i, t] * y[t]
            y[i] = sv / lo[i, i]
            quad += y[i] * y[i]
        b_m = b0 + 0.5 * max(tmps2[side, j] - quad, 0.0)
        tot += base - a_m * math.log(b_m) - 0.5 * (menu[6][cand, j] + logdet_m)
    return tot


@njit(cache=True)
def _copy_comm(M, v, s2, r, nk, kid, dst, src, d, qmax):
    kid[dst] = kid[src]
    nk[dst] = nk[src]
    r[dst] = r[src]
    for j in range(d):
        s2[dst, j] = s2[src, j]
        for a in range(qmax):
            v[dst, j, a] = v[src, j, a]
            for b in range(qmax):
                M[dst, j, a, b] = M[src, j, a, b]


@njit(cache=True)
def _swap_comm(M, v, s2, r, nk, kid, a, b, d, qmax):
    kid[a], kid[b] = kid[b], kid[a]
    nk[a], nk[b] = nk[b], nk[a]
    r[a], r[b] = r[b], r[a]
    for j in range(d):
        s2[a, j], s2[b, j] = s2[b, j], s2[a, j]
        for t in range(qmax):
            v[a, j, t], v[b, j, t] = v[b, j, t], v[a, j, t]
            for u in range(qmax):
                M[a, j, t, u], M[b, j, t, u] = M[b, j, t, u], M[a, j, t, u]


@njit(cache=True)
def _split_merge(
    X, st, menu, K, identity0, a0, b0, nu, omega, exch, tconst, lgam, rng, kmax,
    lo, y, w, phibuf, members, sidebuf, nkbuf, mbuf, vbuf,
    tmpM, tmpv, tmps2, tmpr, tmpn, tmpc,
):
    """One split-or-merge attempt.  Returns (K, accepted, move_row).

    With ``exch`` set the acceptance carries the +log(K+1)/-log(K) slot
    terms that make the move exactly balanced for the labelled allocation
    target; without it the ratio is the canonical partition form, which
    damps splits by the label multiplicity."""
    z, theta, kid, nk, M, v, s2, r = st
    n, d = X.shape
    qmax = M.shape[2]
    i = rng.integers(0, n)
    j = rng.integers(0, n - 1)
    if j >= i:
        j += 1

    if z[i] == z[j]:
        # split: i keeps the community and its kernel, j seeds a new one
        # whose kernel is drawn from the candidate prior (that draw cancels
        # against the kernel prior factor in the target).  The new
        # community lands in a uniformly chosen slot out of K+1, which
        # makes a later merge the exact labelled inverse; the 1/(K+1)
        # proposal factor appears as +log(K+1) in the acceptance ratio.
        if K >= kmax:
            return K, 0, MOVE_SPLIT
        corig = z[i]
        cn = _draw_cand(menu, rng)
        _tmp_init(menu, 0, kid[corig], d, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc)
        _tmp_init(menu, 1, cn, d, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc)
        _tmp_add(X, theta, menu, i, 0, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
        _tmp_add(X, theta, menu, j, 1, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
        cnt = 0
        for h in range(n):
            if z[h] == corig and h != i and h != j:
                members[cnt] = h
                cnt += 1
        perm = rng.permutation(cnt)
        log_q = 0.0
        for t in range(cnt):
            h = members[perm[t]]
            lp0 = _tmp_loglik(X, theta, menu, h, 0, identity0, a0, b0, tconst,
                              tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y, w, phibuf)
            lp1 = _tmp_loglik(X, theta, menu, h, 1, identity0, a0, b0, tconst,
                              tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y, w, phibuf)
            if math.isnan(lp0) or math.isnan(lp1):
                return K, -1, MOVE_SPLIT
            mx = lp0 if lp0 > lp1 else lp1
            p0 = math.exp(lp0 - mx)
            p1 = math.exp(lp1 - mx)
            tot = p0 + p1
            if rng.random() * tot < p0:
                side = 0
                log_q += math.log(p0 / tot)
            else:
                side = 1
                log_q += math.log(p1 / tot)
            sidebuf[t] = side
            _tmp_add(X, theta, menu, h, side, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
        ml_new = _tmp_marginal(menu, 0, d, identity0, a0, b0, lgam,
                               tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y) + \
                 _tmp_marginal(menu, 1, d, identity0, a0, b0, lgam,
                               tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y)
        ml_old = _marginal_comm_stored(st, menu, corig, d, identity0, a0, b0, lgam, lo, y)
        if math.isnan(ml_new) or math.isnan(ml_old):
            return K, -1, MOVE_SPLIT
        for k2 in range(K):
            nkbuf[k2] = nk[k2]
        nkbuf[corig] = tmpn[0]
        nkbuf[K] = tmpn[1]
        lpz_new = _log_prior_z_counts(nkbuf[: K + 1], K + 1, n, nu)
        lpz_old = _log_prior_z_counts(nk[:K], K, n, nu)
        log_rev = 0.0 if cn == kid[corig] else -math.log(2.0)
        log_acc = (
            (ml_new - ml_old) + (lpz_new - lpz_old) + math.log1p(-omega)
            + log_rev - log_q
        )
        if exch == 1:
            log_acc += math.log(K + 1.0)
        if log_acc >= 0.0 or rng.random() < math.exp(log_acc):
            z[j] = K
            for t in range(cnt):
                if sidebuf[t] == 1:
                    z[members[perm[t]]] = K
            kid[K] = cn
            for side in range(2):
                dst = corig if side == 0 else K
                nk[dst] = tmpn[side]
                r[dst] = tmpr[side]
                for j2 in range(d):
                    s2[dst, j2] = tmps2[side, j2]
                    for a in range(qmax):
                        v[dst, j2, a] = tmpv[side, j2, a]
                        for b in range(qmax):
                            M[dst, j2, a, b] = tmpM[side, j2, a, b]
            s = rng.integers(0, K + 1)
            if s != K:
                for h in range(n):
                    if z[h] == K:
                        z[h] = -1
                for h in range(n):
                    if z[h] == s:
                        z[h] = K
                for h in range(n):
                    if z[h] == -1:
                        z[h] = s
                _swap_comm(M, v, s2, r, nk, kid, s, K, d, qmax)
            return K + 1, 1, MOVE_SPLIT
        return K, 0, MOVE_SPLIT

    # merge: community of j is absorbed into community of i; the merged
    # kernel is drawn uniformly from the two parents.  The reverse split
    # keeps the absorbing side's kernel, so drawing the other parent's
    # kernel makes the move irreversible and it is rejected outright.
    ka, kb = z[i], z[j]
    if kid[ka] == kid[kb]:
        m_kid = kid[ka]
        log_qk = 0.0
    else:
        log_qk = -math.log(2.0)
        if rng.random() < 0.5:
            m_kid = kid[ka]
        else:
            return K, 0, MOVE_MERGE
    _tmp_init(menu, 0, kid[ka], d, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc)
    _tmp_init(menu, 1, kid[kb], d, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc)
    _tmp_add(X, theta, menu, i, 0, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
    _tmp_add(X, theta, menu, j, 1, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
    cnt = 0
    for h in range(n):
        if (z[h] == ka or z[h] == kb) and h != i and h != j:
            members[cnt] = h
            cnt += 1
    perm = rng.permutation(cnt)
    log_rev = 0.0
    for t in range(cnt):
        h = members[perm[t]]
        lp0 = _tmp_loglik(X, theta, menu, h, 0, identity0, a0, b0, tconst,
                          tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y, w, phibuf)
        lp1 = _tmp_loglik(X, theta, menu, h, 1, identity0, a0, b0, tconst,
                          tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, lo, y, w, phibuf)
        if math.isnan(lp0) or math.isnan(lp1):
            return K, -1, MOVE_MERGE
        mx = lp0 if lp0 > lp1 else lp1
        p0 = math.exp(lp0 - mx)
        p1 = math.exp(lp1 - mx)
        tot = p0 + p1
        side = 0 if z[h] == ka else 1
        log_rev += math.log((p0 if side == 0 else p1) / tot)
        _tmp_add(X, theta, menu, h, side, identity0, tmpM, tmpv, tmps2, tmpr, tmpn, tmpc, phibuf)
    ml_new = _marginal_comm_cand(X, st, menu, ka, kb, m_kid, identity0, a0, b0, lgam,
                                 mbuf, vbuf, lo, y, phibuf)
    ml_old = _marginal_comm_stored(st, menu, ka, d, identity0, a0, b0, lgam, lo, y) + \
             _marginal_comm_stored(st, menu, kb, d, identity0, a0, b0, lgam, lo, y)
    if math.isnan(ml_new) or math.isnan(ml_old):
        return K, -1, MOVE_MERGE
    for k2 in range(K):
        nkbuf[k2] = nk[k2]
    nkbuf[ka] = nk[ka] + nk[kb]
    nkbuf[kb] = nkbuf[K - 1]
    lpz_new = _log_prior_z_counts(nkbuf[: K - 1], K - 1, n, nu)
    lpz_old = _log_prior_z_counts(nk[:K], K, n, nu)
    # the reverse split recreates this labelled state by drawing the right
    # slot out of K, hence the -log(K) proposal term in exchangeable mode
    log_acc = (
        (ml_new - ml_old) + (lpz_new - lpz_old) - math.log1p(-omega)
        + log_rev - log_qk
    )
    if exch == 1:
        log_acc -= math.log(float(K))
    if log_acc >= 0.0 or rng.random() < math.exp(log_acc):
        for h in range(n):
            if z[h] == kb:
                z[h] = ka
        kid[ka] = m_kid
        _rebuild_comm(X, st, menu, ka, identity0, phibuf)
        if kb != K - 1:
            for h in range(n):
                if z[h] == K - 1:
                    z[h] = kb
            _copy_comm(M, v, s2, r, nk, kid, kb, K - 1, d, qmax)
        return K - 1, 1, MOVE_MERGE
    return K, 0, MOVE_MERGE


@njit(cache=True)
def _empty_move(X, st, menu, K, identity0, nu, omega, rng, kmax, nkbuf):
    """Add or remove an empty community at the top slot.

    Removal is only proposed when the top slot is empty, which makes it
    the exact labelled inverse of the add; when the top slot is occupied
    the add is forced, giving the {2, 0.5, 1} proposal-ratio cases.
    Returns (K, accepted, move_row)."""
    z, theta, kid, nk, M, v, s2, r = st
    n, d = X.shape
    top_empty = nk[K - 1] == 0
    add = True
    if top_empty:
        add = rng.random() < 0.5
    if add:
        if K >= kmax:
            return K, 0, MOVE_EMPTY_ADD
        q0 = 1.0 if top_empty else 0.5
        for k2 in range(K):
            nkbuf[k2] = nk[k2]
        nkbuf[K] = 0
        log_acc = (
            _log_prior_z_counts(nkbuf[: K + 1], K + 1, n, nu)
            - _log_prior_z_counts(nk[:K], K, n, nu)
            + math.log1p(-omega)
            + math.log(q0)
        )
        if log_acc >= 0.0 or rng.random() < math.exp(log_acc):
            cn = _draw_cand(menu, rng)
            kid[K] = cn
            nk[K] = 0
            _init_empty_comm(menu, K, cn, d, identity0, M, v, s2, r)
            return K + 1, 1, MOVE_EMPTY_ADD
        return K, 0, MOVE_EMPTY_ADD

    # removing the empty top slot; K >= 2 because the top can only be
    # empty when every node lives in a lower slot
    q0 = 2.0 if nk[K - 2] != 0 else 1.0
    log_acc = (
        _log_prior_z_counts(nk[: K - 1], K - 1, n, nu)
        - _log_prior_z_counts(nk[:K], K, n, nu)
        - math.log1p(-omega)
        + math.log(q0)
    )
    if log_acc >= 0.0 or rng.random() < math.exp(log_acc):
        return K - 1, 1, MOVE_EMPTY_REMOVE
    return K, 0, MOVE_EMPTY_REMOVE


@njit(cache=True)
def _kernel_move(
    X, st, menu, K, k, identity0, a0, b0, lgam, rng, mbuf, vbuf, lo, y, phibuf, wbuf
):
    """Exact Gibbs draw of community k's kernel over the candidate menu.
    Returns -1 on failure, 1 if the kernel changed, 0 otherwise."""
    kid = st[2]
    cprior = menu[7]
    ncand = cprior.size
    best = -np.inf
    for c in range(ncand):
        ml = _marginal_comm_cand(X, st, menu, k, -1, c, identity0, a0, b0, lgam,
                                 mbuf, vbuf, lo, y, phibuf)
        if math.isnan(ml):
            return -1
        wbuf[c] = cprior[c] + ml
        if wbuf[c] > best:
            best = wbuf[c]
    tot = 0.0
    for c in range(ncand):
        wbuf[c] = math.exp(wbuf[c] - best)
        tot += wbuf[c]
    u = rng.random() * tot
    acc = 0.0
    chosen = ncand - 1
    for c in range(ncand):
        acc += wbuf[c]
        if u <= acc:
            chosen = c
            break
    if chosen != kid[k]:
        kid[k] = chosen
        _rebuild_comm(X, st, menu, k, identity0, phibuf)
        return 1
    return 0


@njit(cache=True)
def _joint_score(X, st, menu, K, identity0, a0, b0, mu_t, s2_t, nu, omega, lgam, lo, y):
    z, theta, kid, nk = st[0], st[1], st[2], st[3]
    n, d = X.shape
    tot = 0.0
    for k in range(K):
        ml = _marginal_comm_stored(st, menu, k, d, identity0, a0, b0, lgam, lo, y)
        if math.isnan(ml):
            return np.nan
        tot += ml
    tot += _log_prior_z_counts(nk[:K], K, n, nu)
    for i in range(n):
        dx = theta[i] - mu_t
        tot += -0.5 * (LOG2PI + math.log(s2_t) + dx * dx / s2_t)
    tot += math.log(omega) + (K - 1) * math.log1p(-omega)
    return tot


@njit(cache=True)
def _rebuild_all(X, st, menu, K, identity0, phibuf):
    for k in range(K):
        _rebuild_comm(X, st, menu, k, identity0, phibuf)


@njit(cache=True, nogil=True)
def run_chain(
    X, z, theta, kid, nk, M, v, s2, r, K,
    npow, pows, nknot, knots, qarr, dinv, dlogdet, cprior, cprob,
    identity0, a0, b0, mu_t, s2_t, nu, omega, s2p,
    tconst, lgam,
    n_sweeps, burn_in, thinning,
    p_z, p_theta, p_sm, p_empty, p_kernel, kmoves_on, kernel_moves_on,
    exch, kmax,
    z_store, th_store, kn_store, kid_store, score_store,
    counters, rng, rebuild_every,
):
    """Run the full sweep schedule, storing thinned post-burn-in draws.

    Returns (final K, fail_sweep) where fail_sweep is 0 on success and the
    1-based sweep index of the first numerical failure otherwise.
    """
    n, d = X.shape
    st = (z, theta, kid, nk, M, v, s2, r)
    menu = (npow, pows, nknot, knots, qarr, dinv, dlogdet, cprior, cprob)
    qmax = dinv.shape[2]
    lo = np.empty((qmax, qmax))
    y = np.empty(qmax)
    w = np.empty(qmax)
    phibuf = np.empty(qmax)
    logp = np.empty(kmax)
    members = np.empty(n, dtype=np.int64)
    sidebuf = np.empty(n, dtype=np.int64)
    nkbuf = np.empty(kmax + 1, dtype=np.int64)
    mbuf = np.empty((qmax, qmax))
    vbuf = np.empty(qmax)
    wbuf = np.empty(cprior.size)
    tmpM = np.empty((2, d, qmax, qmax))
    tmpv = np.empty((2, d, qmax))
    tmps2 = np.empty((2, d))
    tmpr = np.empty(2)
    tmpn = np.empty(2, dtype=np.int64)
    tmpc = np.empty(2, dtype=np.int64)

    n_stored = z_store.shape[0]
    sidx = 0
    for sweep in range(1, n_sweeps + 1):
        if p_z >= 1.0 or rng.random() < p_z:
            for i in range(n):
                res = _gibbs_node(X, st, menu, K, i, identity0, a0, b0, nu,
                                  tconst, rng, lo, y, w, phibuf, logp)
                if res < 0:
                    return K, sweep
                counters[MOVE_Z, 0] += res
                counters[MOVE_Z, 1] += 1
        if p_theta > 0.0 and (p_theta >= 1.0 or rng.random() < p_theta):
            for i in range(n):
                res = _theta_node(X, st, menu, i, identity0, a0, b0, mu_t, s2_t,
                                  s2p, tconst, rng, lo, y, w, phibuf)
                if res < 0:
                    return K, sweep
                counters[MOVE_THETA, 0] += res
                counters[MOVE_THETA, 1] += 1
        if kmoves_on == 1:
            if p_sm > 0.0 and (p_sm >= 1.0 or rng.random() < p_sm):
                K, acc, row = _split_merge(
                    X, st, menu, K, identity0, a0, b0, nu, omega, exch,
                    tconst, lgam, rng, kmax, lo, y, w, phibuf, members,
                    sidebuf, nkbuf, mbuf, vbuf,
                    tmpM, tmpv, tmps2, tmpr, tmpn, tmpc,
                )
                if acc < 0:
                    return K, sweep
                counters[row, 0] += acc
                counters[row, 1] += 1
            if p_empty > 0.0 and (p_empty >= 1.0 or rng.random() < p_empty):
                K, acc, row = _empty_move(X, st, menu, K, identity0, nu, omega,
                                          rng, kmax, nkbuf)
                counters[row, 0] += acc
                counters[row, 1] += 1
        if kernel_moves_on == 1 and (p_kernel >= 1.0 or rng.random() < p_kernel):
            for k in range(K):
                ch = _kernel_move(X, st, menu, K, k, identity0, a0, b0, lgam,
                                  rng, mbuf, vbuf, lo, y, phibuf, wbuf)
                if ch < 0:
                    return K, sweep
                counters[MOVE_KERNEL, 0] += ch
                counters[MOVE_KERNEL, 1] += 1
        if rebuild_every > 0 and sweep % rebuild_every == 0:
            _rebuild_all(X, st, menu, K, identity0, phibuf)
        if sweep > burn_in and (sweep - burn_in - 1) % thinning == 0 and sidx < n_stored:
            kn = 0
            for k in range(K):
                if nk[k] > 0:
                    kn += 1
            for i in range(n):
                z_store[sidx, i] = z[i]
                th_store[sidx, i] = theta[i]
            kn_store[sidx] = kn
            for k in range(kid_store.shape[1]):
                kid_store[sidx, k] = np.int16(kid[k]) if k < K else -1
            score_store[sidx] = _joint_score(X, st, menu, K, identity0, a0, b0,
                                             mu_t, s2_t, nu, omega, lgam, lo, y)
            sidx += 1
    return K, 0
