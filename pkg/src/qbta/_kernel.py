"""Compiled inner loops of the interval assignment.

Everything here works on dense index arrays: links are 0..E-1 in id order,
nodes 0..V-1, OD pairs 0..N-1 sorted by (origin, destination). Path sets live
in fixed-size per-OD slots: ``ps_links[n, k, :ps_len[n, k]]`` with flow
``ps_flow[n, k]`` for k < ``ps_n[n]``.
"""
import numpy as np
from numba import njit

QBTD = 0
BPR = 1

OK = 0
UNREACHABLE = 1
OVERFLOW = 2

# QBTD derivative rules: dt/mu when x > mu, or when the queue at the end of
# the interval is positive (the exact slope of the step travel time)
SLOPE_INFLOW = 0
SLOPE_QUEUE = 1

TIE_RTOL = 1e-12
# Newton denominators below this fall back to moving the whole path flow
MIN_DERIVATIVE = 1e-12


@njit(cache=True)
def link_time(model, l, x, tf, q, mu, dt, alpha, beta):
    if model == QBTD:
        return tf[l] + max(0.0, q[l] + dt * (x[l] - mu[l])) / mu[l]
    return tf[l] * (1.0 + alpha * (x[l] / mu[l]) ** beta)


@njit(cache=True)
def link_derivative(model, l, x, tf, q, mu, dt, alpha, beta, slope_rule):
    if model == QBTD:
        if slope_rule == SLOPE_INFLOW:
            if x[l] > mu[l]:
                return dt / mu[l]
            return 0.0
        # slope of the evaluated time: positive while the end-of-interval queue is
        if q[l] + dt * (x[l] - mu[l]) > 0.0:
            return dt / mu[l]
        return 0.0
    if x[l] <= 0.0:
        return tf[l] * alpha / mu[l] if beta == 1.0 else 0.0
    return tf[l] * alpha * beta * x[l] ** (beta - 1.0) / mu[l] ** beta


@njit(cache=True)
def _lex_less(u, l, v, pred, frm, buf_a, buf_b):
    # sequence(u) + [l] < sequence(v), comparing link indices from the origin
    na = 0
    buf_a[na] = l
    na += 1
    node = u
    while pred[node] >= 0:
        buf_a[na] = pred[node]
        na += 1
        node = frm[pred[node]]
    nb = 0
    node = v
    while pred[node] >= 0:
        buf_b[nb] = pred[node]
        nb += 1
        node = frm[pred[node]]
    i = na - 1
    j = nb - 1
    while i >= 0 and j >= 0:
        if buf_a[i] != buf_b[j]:
            return buf_a[i] < buf_b[j]
        i -= 1
        j -= 1
    return i < 0 and j >= 0


@njit(cache=True)
def dijkstra(origin, ptr, adj, frm, to, tt, dist, pred, done, buf_a, buf_b):
    V = dist.shape[0]
    for v in range(V):
        dist[v] = np.inf
        pred[v] = -1
        done[v] = False
    dist[origin] = 0.0
    for _ in range(V):
        u = -1
        best = np.inf
        for v in range(V):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for e in range(ptr[u], ptr[u + 1]):
            l = adj[e]
            v = to[l]
            if done[v]:
                continue
            nd = dist[u] + tt[l]
            dv = dist[v]
            tol = TIE_RTOL * max(1.0, abs(nd))
            if nd < dv - tol:
                dist[v] = nd
                pred[v] = l
            elif abs(nd - dv) <= tol:
                if _lex_less(u, l, v, pred, frm, buf_a, buf_b):
                    pred[v] = l
                    if nd < dv:
                        dist[v] = nd


@njit(cache=True)
def _extract(dest, pred, frm, out):
    n = 0
    node = dest
    while pred[node] >= 0:
        out[n] = pred[node]
        n += 1
        node = frm[pred[node]]
    # reverse in place
    for i in range(n // 2):
        t = out[i]
        out[i] = out[n - 1 - i]
        out[n - 1 - i] = t
    return n


@njit(cache=True)
def _path_cost(ps_links, ps_len, n, k, tt):
    c = 0.0
    for i in range(ps_len[n, k]):
        c += tt[ps_links[n, k, i]]
    return c


@njit(cache=True)
def _find_path(ps_links, ps_len, ps_n, n, sp, sp_len):
    for k in range(ps_n[n]):
        if ps_len[n, k] != sp_len:
            continue
        same = True
        for i in range(sp_len):
            if ps_links[n, k, i] != sp[i]:
                same = False
                break
        if same:
            return k
    return -1


@njit(cache=True)
def _od_gap(ps_links, ps_len, ps_flow, ps_n, n, tt, d, cstar):
    if d <= 0.0:
        return 0.0
    if ps_n[n] == 0 or cstar <= 0.0:
        return np.inf
    total = 0.0
    for k in range(ps_n[n]):
        total += ps_flow[n, k] * _path_cost(ps_links, ps_len, n, k, tt)
    return max(0.0, (total - d * cstar) / (d * cstar))


@njit(cache=True)
def _touch(l, touched, n_touched, flag):
    if not flag[l]:
        flag[l] = True
        touched[n_touched] = l
        n_touched += 1
    return n_touched


@njit(cache=True)
def load_links(ps_links, ps_len, ps_flow, ps_n, x):
    x[:] = 0.0
    for n in range(ps_n.shape[0]):
        for k in range(ps_n[n]):
            h = ps_flow[n, k]
            for i in range(ps_len[n, k]):
                x[ps_links[n, k, i]] += h


@njit(cache=True)
def assign_interval(
    ptr, adj, frm, to, tf,
    od_o, od_d, demand,
    model, q, mu, dt, alpha, beta, slope_rule,
    gap_tol, iter_max, eps_flow,
    ps_links, ps_len, ps_flow, ps_n,
    x, tt, od_gap, od_iters,
):
    """Equilibrate every OD in turn on the current interval's link model.

    Returns (status, offending OD, max |sum h - d| seen after any shift,
    min path flow seen after any shift).
    """
    V = ptr.shape[0] - 1
    E = tf.shape[0]
    N = od_o.shape[0]
    K = ps_flow.shape[1]

    # warm start: rescale carried flows to this interval's demand
    for n in range(N):
        s = 0.0
        for k in range(ps_n[n]):
            s += ps_flow[n, k]
        if demand[n] <= 0.0:
            ps_n[n] = 0
        elif s > 0.0:
            f = demand[n] / s
            for k in range(ps_n[n]):
                ps_flow[n, k] *= f
    load_links(ps_links, ps_len, ps_flow, ps_n, x)
    for l in range(E):
        tt[l] = link_time(model, l, x, tf, q, mu, dt, alpha, beta)

    dist = np.empty(V)
    pred = np.empty(V, dtype=np.int64)
    done = np.empty(V, dtype=np.bool_)
    buf_a = np.empty(V + 1, dtype=np.int64)
    buf_b = np.empty(V + 1, dtype=np.int64)
    sp = np.empty(V, dtype=np.int64)
    cost = np.empty(K)
    dh = np.empty(K)
    mark_b = np.zeros(E, dtype=np.int64)
    mark_p = np.zeros(E, dtype=np.int64)
    touched = np.empty(E, dtype=np.int64)
    flag = np.zeros(E, dtype=np.bool_)
    stamp = 0
    worst_cons = 0.0
    min_flow = np.inf

    for n in range(N):
        d = demand[n]
        od_iters[n] = 0
        if d <= 0.0 or od_o[n] == od_d[n]:
            od_gap[n] = 0.0
            continue
        k_iter = 0
        while True:
            dijkstra(od_o[n], ptr, adj, frm, to, tt, dist, pred, done, buf_a, buf_b)
            cstar = dist[od_d[n]]
            if cstar == np.inf:
                return UNREACHABLE, n, worst_cons, min_flow
            gap = _od_gap(ps_links, ps_len, ps_flow, ps_n, n, tt, d, cstar)
            od_gap[n] = gap
            if gap <= gap_tol or k_iter >= iter_max:
                break
            k_iter += 1

            sp_len = _extract(od_d[n], pred, frm, sp)
            b = _find_path(ps_links, ps_len, ps_n, n, sp, sp_len)
            if b < 0:
                if ps_n[n] == K:
                    return OVERFLOW, n, worst_cons, min_flow
                b = ps_n[n]
                for i in range(sp_len):
                    ps_links[n, b, i] = sp[i]
                ps_len[n, b] = sp_len
                ps_flow[n, b] = 0.0
                ps_n[n] += 1

            n_touched = 0
            if ps_n[n] == 1:
                delta = d - ps_flow[n, 0]
                for i in range(ps_len[n, 0]):
                    l = ps_links[n, 0, i]
                    x[l] += delta
                    n_touched = _touch(l, touched, n_touched, flag)
                ps_flow[n, 0] = d
            else:
                stamp += 1
                sb = stamp
                for i in range(ps_len[n, b]):
                    mark_b[ps_links[n, b, i]] = sb
                cb = _path_cost(ps_links, ps_len, n, b, tt)
                for p in range(ps_n[n]):
                    dh[p] = 0.0
                    if p == b:
                        continue
                    cost[p] = _path_cost(ps_links, ps_len, n, p, tt)
                    excess = cost[p] - cb
                    if excess <= 0.0:
                        continue
                    # derivative summed over the symmetric difference of link sets
                    stamp += 1
                    dsum = 0.0
                    for i in range(ps_len[n, p]):
                        l = ps_links[n, p, i]
                        mark_p[l] = stamp
                        if mark_b[l] != sb:
                            dsum += link_derivative(model, l, x, tf, q, mu, dt, alpha, beta, slope_rule)
                    for i in range(ps_len[n, b]):
                        l = ps_links[n, b, i]
                        if mark_p[l] != stamp:
                            dsum += link_derivative(model, l, x, tf, q, mu, dt, alpha, beta, slope_rule)
                    h = ps_flow[n, p]
                    if dsum < MIN_DERIVATIVE:
                        dh[p] = h
                    else:
                        dh[p] = min(h, excess / dsum)
                moved = 0.0
                for p in range(ps_n[n]):
                    if p == b or dh[p] == 0.0:
                        continue
                    ps_flow[n, p] -= dh[p]
                    moved += dh[p]
                    for i in range(ps_len[n, p]):
                        l = ps_links[n, p, i]
                        x[l] -= dh[p]
                        n_touched = _touch(l, touched, n_touched, flag)
                ps_flow[n, b] += moved
                for i in range(ps_len[n, b]):
                    l = ps_links[n, b, i]
                    x[l] += moved
                    n_touched = _touch(l, touched, n_touched, flag)

                # drop exhausted nonbasic paths, handing any residue to the basic path
                p = 0
                while p < ps_n[n]:
                    if p != b and ps_flow[n, p] <= eps_flow:
                        res = ps_flow[n, p]
                        if res != 0.0:
                            ps_flow[n, b] += res
                            for i in range(ps_len[n, p]):
                                l = ps_links[n, p, i]
                                x[l] -= res
                                n_touched = _touch(l, touched, n_touched, flag)
                            for i in range(ps_len[n, b]):
                                l = ps_links[n, b, i]
                                x[l] += res
                                n_touched = _touch(l, touched, n_touched, flag)
                        last = ps_n[n] - 1
                        if p != last:
                            ps_len[n, p] = ps_len[n, last]
                            for i in range(ps_len[n, last]):
                                ps_links[n, p, i] = ps_links[n, last, i]
                            ps_flow[n, p] = ps_flow[n, last]
                            if b == last:
                                b = p
                        ps_n[n] -= 1
                    else:
                        p += 1

            for i in range(n_touched):
                l = touched[i]
                flag[l] = False
                tt[l] = link_time(model, l, x, tf, q, mu, dt, alpha, beta)

            s = 0.0
            for k in range(ps_n[n]):
                s += ps_flow[n, k]
                if ps_flow[n, k] < min_flow:
                    min_flow = ps_flow[n, k]
            if abs(s - d) > worst_cons:
                worst_cons = abs(s - d)
        od_iters[n] = k_iter
    return OK, -1, worst_cons, min_flow


@njit(cache=True)
def evaluate_gaps(
    ptr, adj, frm, to, tt,
    od_o, od_d, demand,
    ps_links, ps_len, ps_flow, ps_n,
    out_gap, out_cstar,
):
    """Per-OD relative gap of the stored path flows under link times ``tt``.

    One shortest-path tree per origin (ODs are grouped by origin).
    """
    V = ptr.shape[0] - 1
    dist = np.empty(V)
    pred = np.empty(V, dtype=np.int64)
    done = np.empty(V, dtype=np.bool_)
    buf_a = np.empty(V + 1, dtype=np.int64)
    buf_b = np.empty(V + 1, dtype=np.int64)
    last = -1
    for n in range(od_o.shape[0]):
        if od_o[n] != last:
            dijkstra(od_o[n], ptr, adj, frm, to, tt, dist, pred, done, buf_a, buf_b)
            last = od_o[n]
        cstar = dist[od_d[n]]
        out_cstar[n] = cstar
        if od_o[n] == od_d[n]:
            out_gap[n] = 0.0
        else:
            out_gap[n] = _od_gap(ps_links, ps_len, ps_flow, ps_n, n, tt, demand[n], cstar)
