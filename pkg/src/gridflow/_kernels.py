"""Compiled kernels for exhaustive topology enumeration.

These run the linear branch-flow sweep over tens of thousands of candidate
radial topologies, so they are written against flat arrays and compiled with
numba.  The pure-Python front end lives in :mod:`gridflow.reconfig`.
"""
from __future__ import annotations

import numpy as np
from numba import njit

#: sentinel for "no capacity limit" in the cap arrays.
NO_CAP = 1e30


@njit(cache=True)
def filter_radial(combos, theta, from_idx, to_idx, n_bus, n_branch):
    """Mark which open-branch combinations yield a spanning tree.

    ``combos[c, j]`` indexes into ``theta`` (candidate openable branches).
    A combination is kept iff closing every other branch connects all buses
    without a cycle (checked with union-find).
    """
    K, nopen = combos.shape
    ok = np.zeros(K, np.uint8)
    uf = np.empty(n_bus, np.int64)
    isopen = np.zeros(n_branch, np.uint8)
    for c in range(K):
        for j in range(nopen):
            isopen[theta[combos[c, j]]] = 1
        for i in range(n_bus):
            uf[i] = i
        cnt = n_bus
        good = True
        for k in range(n_branch):
            if isopen[k]:
                continue
            a = from_idx[k]
            while uf[a] != a:
                a = uf[a]
            b = to_idx[k]
            while uf[b] != b:
                b = uf[b]
            if a == b:
                good = False
                break
            uf[a] = b
            cnt -= 1
        if good and cnt == 1:
            ok[c] = 1
        for j in range(nopen):
            isopen[theta[combos[c, j]]] = 0
    return ok


@njit(cache=True)
def _sweep(n, isopen, ptr, adj_e, adj_v, r, x, g, h, qc_extra, svc_bus, root,
           v0, tol, maxit, parent, pbr, order, W, fp, fq):
    """Fixed-point sweep of the linear model on one topology.

    Returns the iteration count, -1 if the closed branches do not span all
    buses, or -2 if the iteration fails to converge.  ``fp``/``fq`` hold the
    normalized flow on each bus's parent branch; ``qc_extra`` is a constant
    normalized reactive injection at ``svc_bus``.
    """
    for i in range(n):
        parent[i] = -1
    order[0] = root
    parent[root] = root
    cnt = 1
    head = 0
    while head < cnt:
        u = order[head]
        head += 1
        for a in range(ptr[u], ptr[u + 1]):
            k = adj_e[a]
            if isopen[k]:
                continue
            v = adj_v[a]
            if parent[v] == -1:
                parent[v] = u
                pbr[v] = k
                order[cnt] = v
                cnt += 1
    if cnt < n:
        return -1
    w0 = 2.0 - v0
    for i in range(n):
        W[i] = w0
    for it in range(maxit):
        for i in range(n):
            fp[i] = 0.0
            fq[i] = 0.0
        for oi in range(n - 1, 0, -1):
            i = order[oi]
            ph = g[i] * W[i]
            qh = h[i] * W[i]
            if i == svc_bus:
                qh += qc_extra
            fp[i] -= ph
            fq[i] -= qh
            fp[parent[i]] += fp[i]
            fq[parent[i]] += fq[i]
        dmax = 0.0
        for oi in range(1, n):
            i = order[oi]
            k = pbr[i]
            nw = W[parent[i]] + r[k] * fp[i] + x[k] * fq[i]
            d = abs(nw - W[i])
            if d > dmax:
                dmax = d
            W[i] = nw
        if dmax < tol:
            return it + 1
    return -2


@njit(cache=True)
def evaluate_configs(combos, theta, n, m, ptr, adj_e, adj_v, to_idx,
                     r, x, g, h, closed0, root, v0,
                     alpha_s, beta, gamma,
                     svc_bus, svc_lo, svc_hi,
                     w_lo, w_hi, sind, p_cap, q_cap, i_cap,
                     pf_c, feastol):
    """Evaluate every candidate topology and return the best.

    For each combination the linear model is solved; when an adjustable
    reactive source is present (``svc_bus >= 0``) the state is affine in the
    setpoint, so two solves give the exact sensitivity and the setpoint is
    optimized in closed form over the interval cut out by all constraints.

    Returns ``(best_objective, best_combo_index, best_setpoint, n_feasible)``.
    The first combination attaining the minimum wins, which makes ties
    deterministic (combinations are generated in lexicographic order).
    """
    K, nopen = combos.shape
    best = 1e30
    bestc = -1
    bestq = 0.0
    nfeas = 0
    isopen = np.zeros(m, np.uint8)
    parent = np.zeros(n, np.int64)
    pbr = np.zeros(n, np.int64)
    order = np.zeros(n, np.int64)
    W0 = np.zeros(n)
    fp0 = np.zeros(n)
    fq0 = np.zeros(n)
    W1 = np.zeros(n)
    fp1 = np.zeros(n)
    fq1 = np.zeros(n)
    for c in range(K):
        for j in range(nopen):
            isopen[theta[combos[c, j]]] = 1
        res = _sweep(n, isopen, ptr, adj_e, adj_v, r, x, g, h, 0.0, svc_bus,
                     root, v0, 1e-13, 300, parent, pbr, order, W0, fp0, fq0)
        feasible = res > 0
        qstar = 0.0
        if feasible and svc_bus >= 0:
            probe = svc_hi if abs(svc_hi) > 1e-12 else svc_lo
            if abs(probe) < 1e-12:
                probe = 1.0
            _sweep(n, isopen, ptr, adj_e, adj_v, r, x, g, h, probe, svc_bus,
                   root, v0, 1e-13, 300, parent, pbr, order, W1, fp1, fq1)
            sc = 1.0 / probe
            lo = -1e30
            hi = 1e30
            for oi in range(1, n):
                i = order[oi]
                k = pbr[i]
                jt = to_idx[k]
                dw = (W1[i] - W0[i]) * sc
                # bus voltage window: w_lo <= W0 + q*dw <= w_hi
                if dw > 1e-15:
                    t = (w_hi[i] - W0[i]) / dw
                    if t < hi:
                        hi = t
                    t = (w_lo[i] - W0[i]) / dw
                    if t > lo:
                        lo = t
                elif dw < -1e-15:
                    t = (w_lo[i] - W0[i]) / dw
                    if t < hi:
                        hi = t
                    t = (w_hi[i] - W0[i]) / dw
                    if t > lo:
                        lo = t
                else:
                    if W0[i] < w_lo[i] - feastol or W0[i] > w_hi[i] + feastol:
                        lo = 1.0
                        hi = 0.0
                # angle window: |x fp - r fq| <= (2 - W_to) sin(delta)
                a0 = x[k] * fp0[i] - r[k] * fq0[i] - (2.0 - W0[jt]) * sind[k]
                a1 = x[k] * fp1[i] - r[k] * fq1[i] - (2.0 - W1[jt]) * sind[k]
                da = (a1 - a0) * sc
                if da > 1e-15:
                    if -a0 / da < hi:
                        hi = -a0 / da
                elif da < -1e-15:
                    if -a0 / da > lo:
                        lo = -a0 / da
                elif a0 > feastol:
                    lo = 1.0
                    hi = 0.0
                b0 = -(x[k] * fp0[i] - r[k] * fq0[i]) - (2.0 - W0[jt]) * sind[k]
                b1 = -(x[k] * fp1[i] - r[k] * fq1[i]) - (2.0 - W1[jt]) * sind[k]
                db = (b1 - b0) * sc
                if db > 1e-15:
                    if -b0 / db < hi:
                        hi = -b0 / db
                elif db < -1e-15:
                    if -b0 / db > lo:
                        lo = -b0 / db
                elif b0 > feastol:
                    lo = 1.0
                    hi = 0.0
                # branch capacity windows: |flow| <= cap * W_send
                p = parent[i]
                ws0 = W0[p]
                dws = (W1[p] - W0[p]) * sc
                if p_cap[k] < NO_CAP:
                    # +/- fp - cap*W_send <= 0
                    for sgn in (1.0, -1.0):
                        c0 = sgn * fp0[i] - p_cap[k] * ws0
                        dc = sgn * (fp1[i] - fp0[i]) * sc - p_cap[k] * dws
                        if dc > 1e-15:
                            if -c0 / dc < hi:
                                hi = -c0 / dc
                        elif dc < -1e-15:
                            if -c0 / dc > lo:
                                lo = -c0 / dc
                        elif c0 > feastol:
                            lo = 1.0
                            hi = 0.0
                if q_cap[k] < NO_CAP:
                    for sgn in (1.0, -1.0):
                        c0 = sgn * fq0[i] - q_cap[k] * ws0
                        dc = sgn * (fq1[i] - fq0[i]) * sc - q_cap[k] * dws
                        if dc > 1e-15:
                            if -c0 / dc < hi:
                                hi = -c0 / dc
                        elif dc < -1e-15:
                            if -c0 / dc > lo:
                                lo = -c0 / dc
                        elif c0 > feastol:
                            lo = 1.0
                            hi = 0.0
                # thermal window: fp^2 + fq^2 <= i_cap^2 (quadratic in q)
                if i_cap[k] < NO_CAP:
                    dfp = (fp1[i] - fp0[i]) * sc
                    dfq = (fq1[i] - fq0[i]) * sc
                    qa = dfp * dfp + dfq * dfq
                    qb = 2.0 * (fp0[i] * dfp + fq0[i] * dfq)
                    qc0 = fp0[i] * fp0[i] + fq0[i] * fq0[i] - i_cap[k] * i_cap[k]
                    if qa > 1e-18:
                        disc = qb * qb - 4.0 * qa * qc0
                        if disc < 0.0:
                            lo = 1.0
                            hi = 0.0
                        else:
                            sq = np.sqrt(disc)
                            if (-qb - sq) / (2.0 * qa) > lo:
                                lo = (-qb - sq) / (2.0 * qa)
                            if (-qb + sq) / (2.0 * qa) < hi:
                                hi = (-qb + sq) / (2.0 * qa)
                    else:
                        if abs(qb) > 1e-15:
                            if qb > 0:
                                if -qc0 / qb < hi:
                                    hi = -qc0 / qb
                            else:
                                if -qc0 / qb > lo:
                                    lo = -qc0 / qb
                        elif qc0 > feastol:
                            lo = 1.0
                            hi = 0.0
                # supply power-factor window: fp >= pf_c * |fq| on root branches
                if pf_c >= 0.0 and p == root:
                    for sgn in (1.0, -1.0):
                        c0 = sgn * pf_c * fq0[i] - fp0[i]
                        dc = (sgn * pf_c * (fq1[i] - fq0[i]) - (fp1[i] - fp0[i])) * sc
                        if dc > 1e-15:
                            if -c0 / dc < hi:
                                hi = -c0 / dc
                        elif dc < -1e-15:
                            if -c0 / dc > lo:
                                lo = -c0 / dc
                        elif c0 > feastol:
                            lo = 1.0
                            hi = 0.0
            # source box: svc_lo*W_s <= q <= svc_hi*W_s with W_s affine in q
            ws0 = W0[svc_bus]
            dws = (W1[svc_bus] - W0[svc_bus]) * sc
            cc = 1.0 - svc_hi * dws
            if cc > 1e-15:
                if svc_hi * ws0 / cc < hi:
                    hi = svc_hi * ws0 / cc
            dd = svc_lo * dws - 1.0
            if dd < -1e-15:
                if -svc_lo * ws0 / dd > lo:
                    lo = -svc_lo * ws0 / dd
            if lo > hi:
                feasible = False
            else:
                # objective is quadratic in the setpoint; minimize on [lo, hi]
                A2 = 0.0
                A1 = 0.0
                for oi in range(1, n):
                    i = order[oi]
                    k = pbr[i]
                    dfp = (fp1[i] - fp0[i]) * sc
                    dfq = (fq1[i] - fq0[i]) * sc
                    A2 += alpha_s * r[k] * (dfp * dfp + dfq * dfq)
                    A1 += alpha_s * r[k] * 2.0 * (fp0[i] * dfp + fq0[i] * dfq)
                    dw = (W1[i] - W0[i]) * sc
                    A2 += gamma * dw * dw
                    A1 += gamma * 2.0 * (W0[i] - 1.0) * dw
                if A2 > 1e-18:
                    qstar = -A1 / (2.0 * A2)
                else:
                    qstar = lo if A1 > 0 else hi
                if qstar < lo:
                    qstar = lo
                if qstar > hi:
                    qstar = hi
                _sweep(n, isopen, ptr, adj_e, adj_v, r, x, g, h, qstar, svc_bus,
                       root, v0, 1e-13, 300, parent, pbr, order, W0, fp0, fq0)
        if feasible:
            # final feasibility pass on the solved state
            for oi in range(1, n):
                i = order[oi]
                if W0[i] < w_lo[i] - feastol or W0[i] > w_hi[i] + feastol:
                    feasible = False
                    break
                k = pbr[i]
                jt = to_idx[k]
                if abs(x[k] * fp0[i] - r[k] * fq0[i]) > (2.0 - W0[jt]) * sind[k] + feastol:
                    feasible = False
                    break
                p = parent[i]
                if p_cap[k] < NO_CAP and abs(fp0[i]) > p_cap[k] * W0[p] + feastol:
                    feasible = False
                    break
                if q_cap[k] < NO_CAP and abs(fq0[i]) > q_cap[k] * W0[p] + feastol:
                    feasible = False
                    break
                if i_cap[k] < NO_CAP and fp0[i] ** 2 + fq0[i] ** 2 > i_cap[k] ** 2 + feastol:
                    feasible = False
                    break
                if pf_c >= 0.0 and p == root and pf_c * abs(fq0[i]) - fp0[i] > feastol:
                    feasible = False
                    break
        if feasible:
            nfeas += 1
            loss = 0.0
            dev = (v0 - 1.0) ** 2
            for oi in range(1, n):
                i = order[oi]
                k = pbr[i]
                loss += r[k] * (fp0[i] * fp0[i] + fq0[i] * fq0[i])
                dev += (1.0 - W0[i]) ** 2
            sw = 0
            for j in range(nopen):
                if closed0[theta[combos[c, j]]]:
                    sw += 1
            for k in range(m):
                if not closed0[k]:
                    now_open = False
                    for j in range(nopen):
                        if theta[combos[c, j]] == k:
                            now_open = True
                    if not now_open:
                        sw += 1
            obj = alpha_s * loss + beta * sw + gamma * dev
            if obj < best - 1e-15:
                best = obj
                bestc = c
                bestq = qstar
        for j in range(nopen):
            isopen[theta[combos[c, j]]] = 0
    return best, bestc, bestq, nfeas
