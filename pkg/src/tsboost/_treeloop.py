"""Compiled fixed-guess loop for spanning-tree preconditioners.

Mirrors ``boosting.boost_fixed_guess`` step by step (same weights, same
candidate certificates, same order of checks) with the tree solve inlined, so
one MW round costs a few passes over the edge list instead of dozens of
small numpy calls. The caller rebuilds and re-verifies whatever certificate
comes back.
"""
from __future__ import annotations

import numpy as np
from numba import njit

DUAL = 0           # normalized potentials found by an early check
DUAL_AVERAGE = 1   # plain average after all rounds (caller normalizes)
FLOW = 2           # flow routing d (primal-dual mode)
FLOW_RESIDUAL = 3  # candidate flow plus a bound on its residual (dual-only mode)
FLOW_SHRINK = 4    # flow routing d, to be scaled down (dual-only mode)


@njit(cache=True)
def _dot(a, b):
    total = 0.0
    for i in range(a.shape[0]):
        total += a[i] * b[i]
    return total


@njit(cache=True)
def fixed_guess_loop(tails, heads, w, d, g, eps, beta, rounds, dual_only, early_stop,
                     preorder, position, start, stop, child_edges, child_sign, child_weights):
    n = d.shape[0]
    m = w.shape[0]
    kids = child_edges.shape[0]
    ax_sum = np.zeros(m)
    phi_sum = np.zeros(n)
    flow_sum = np.zeros(m)
    snap_phi = np.zeros(n)
    snap_a = np.zeros(m)
    snap_flow = np.zeros(m)
    mark = 1
    f_t = np.zeros(m)
    d_res = np.zeros(n)
    f_res = np.zeros(m)  # only tree entries are ever written
    phi = np.zeros(n)
    a_phi = np.zeros(m)
    comb = np.zeros(m)
    prefix = np.zeros(n + 1)
    marks = np.zeros(n + 1)
    cand_n = np.zeros(n)
    limit = (1.0 + eps) * g
    top = 0.0

    for t in range(1, rounds + 1):
        # flattened softmax weights of [A phi_*; -A phi_*] and the candidate flow g W^-1 p
        shift = beta * top
        # exp(-b x - s) = exp(-2 s) / exp(b x - s), unless that quotient underflows
        floor = np.exp(-2.0 * shift)
        z = 0.0
        for e in range(m):
            pos = np.exp(beta * ax_sum[e] - shift)
            neg = floor / pos if pos > 0.0 else np.exp(-beta * ax_sum[e] - shift)
            f_t[e] = pos - neg
            z += pos + neg
        for v in range(n):
            d_res[v] = d[v]
        for e in range(m):
            f_t[e] = g * (f_t[e] / z) / w[e]
            d_res[tails[e]] -= f_t[e]
            d_res[heads[e]] += f_t[e]

        # exact solve on the tree (subtrees are contiguous in preorder)
        prefix[0] = 0.0
        for i in range(n):
            prefix[i + 1] = prefix[i] + d_res[preorder[i]]
        for i in range(n + 1):
            marks[i] = 0.0
        for k in range(kids):
            net = prefix[stop[k]] - prefix[start[k]]
            f_res[child_edges[k]] = child_sign[k] * net
            step = 0.0
            if net > 0.0:
                step = child_weights[k]
            elif net < 0.0:
                step = -child_weights[k]
            marks[start[k]] += step
            marks[stop[k]] -= step
        acc = 0.0
        for i in range(n):
            acc += marks[i]
            prefix[i] = acc
        low = np.inf
        for v in range(n):
            phi[v] = prefix[position[v]]
            if phi[v] < low:
                low = phi[v]
        for v in range(n):
            phi[v] -= low
        value = _dot(d_res, phi)

        if t == 2 * mark:
            mark = t
            snap_phi[:] = phi_sum
            snap_a[:] = ax_sum
            snap_flow[:] = flow_sum

        # one pass for A phi, the combined flow, the running sums and their norms
        comb_cost = 0.0
        res_cost = 0.0
        cur_infeas = 0.0
        top = 0.0
        tail_infeas = 0.0
        sum_cost = 0.0
        tail_cost = 0.0
        for e in range(m):
            a = (phi[tails[e]] - phi[heads[e]]) / w[e]
            a_phi[e] = a
            c = f_t[e] + f_res[e]
            comb[e] = c
            comb_cost += w[e] * abs(c)
            res_cost += w[e] * abs(f_res[e])
            cur_infeas = max(cur_infeas, abs(a))
            ax_sum[e] += a
            top = max(top, abs(ax_sum[e]))
            tail_infeas = max(tail_infeas, abs(ax_sum[e] - snap_a[e]))
            flow_sum[e] += c
            sum_cost += w[e] * abs(flow_sum[e])
            tail_cost += w[e] * abs(flow_sum[e] - snap_flow[e])

        if not dual_only:
            if value < eps * g or (early_stop and comb_cost <= limit):
                return FLOW, t, np.zeros(0), comb.copy(), 0.0
        else:
            bound = min(value, res_cost)
            if value < eps * g or (early_stop and bound <= eps * g):
                return FLOW_RESIDUAL, t, np.zeros(0), f_t.copy(), bound
            if early_stop and comb_cost <= limit:
                return FLOW_SHRINK, t, np.zeros(0), comb.copy(), 0.0

        for v in range(n):
            phi_sum[v] += phi[v]

        if early_stop:
            if top > 0.0 and _dot(d, phi_sum) >= g * top:
                return DUAL, t, phi_sum / top, np.zeros(0), 0.0
            for v in range(n):
                cand_n[v] = phi_sum[v] - snap_phi[v]
            if tail_infeas > 0.0 and _dot(d, cand_n) >= g * tail_infeas:
                return DUAL, t, cand_n / tail_infeas, np.zeros(0), 0.0
            if cur_infeas > 0.0 and _dot(d, phi) >= g * cur_infeas:
                return DUAL, t, phi / cur_infeas, np.zeros(0), 0.0
            if t >= 2:
                code = FLOW_SHRINK if dual_only else FLOW
                if sum_cost / t <= limit:
                    return code, t, np.zeros(0), flow_sum / t, 0.0
                if t > mark and tail_cost / (t - mark + 1) <= limit:
                    return code, t, np.zeros(0), (flow_sum - snap_flow) / (t - mark + 1), 0.0

    return DUAL_AVERAGE, rounds, phi_sum / rounds, np.zeros(0), 0.0
