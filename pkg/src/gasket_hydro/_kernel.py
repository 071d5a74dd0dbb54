"""Numba event loop for the boundary-driven exclusion process.

The random stream is splitmix64: state advances by the golden-gamma
increment, outputs are finalized with the usual 30/27/31 mixer, and
uniforms are ((z >> 11) + 1) * 2^-53 in (0, 1].  Two draws per event:
holding time, then event selection.  `sim.py` holds a line-for-line
Python port used to cross-check trajectories bit for bit.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

GOLDEN = uint64(0x9E3779B97F4A7C15)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(cache=True, inline="always")
def _next_u01(state):
    s = state + GOLDEN
    z = s
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    z = z ^ (z >> uint64(31))
    u = (float(z >> uint64(11)) + 1.0) * _INV53
    return s, u


@njit(cache=True)
def run_path(
    occ,  # uint8 (n,), modified in place
    t0,
    t_end,
    grid,  # float64 (G,), nondecreasing, within [t0, t_end]
    W,  # float64 (K, n) observable weights
    Woff,  # float64 (K,) observable offsets
    edges,  # int32 (E, 2)
    inc_ptr,  # int64 (n+1,)
    inc_idx,  # int32 (2E,)
    corner_ids,  # int64 (3,)
    rate_occupied,  # float64 (3,)  flip rate when corner occupied
    rate_empty,  # float64 (3,)   flip rate when corner empty
    bulk_rate,  # float64, rate per discordant edge
    state,  # uint64 stream state
    want_snap,  # int flag
):
    n = occ.shape[0]
    E = edges.shape[0]
    K = W.shape[0]
    G = grid.shape[0]

    disc_pos = np.full(E, -1, np.int64)
    disc_list = np.empty(E, np.int64)
    n_disc = 0
    for e in range(E):
        if occ[edges[e, 0]] != occ[edges[e, 1]]:
            disc_pos[e] = n_disc
            disc_list[n_disc] = e
            n_disc += 1

    S = np.zeros(K)
    for k in range(K):
        acc = 0.0
        for x in range(n):
            if occ[x]:
                acc += W[k, x]
        S[k] = acc

    I = np.zeros(K)
    occ_time = np.zeros(n)
    last_t = np.full(n, t0)
    out_vals = np.zeros((G, K))
    out_ints = np.zeros((G, K))
    n_snap = G if want_snap else 0
    snaps = np.zeros((n_snap, n), np.uint8)

    t = t0
    t_cursor = t0
    gi = 0
    n_events = 0

    while True:
        total = bulk_rate * n_disc
        for i in range(3):
            a = corner_ids[i]
            total += rate_occupied[i] if occ[a] else rate_empty[i]
        if not total > 0.0:
            raise RuntimeError("total event rate is not positive")

        state, u = _next_u01(state)
        t_next = t - np.log(u) / total

        lim = t_next if t_next < t_end else t_end
        while gi < G and grid[gi] <= lim:
            dtg = grid[gi] - t_cursor
            for k in range(K):
                I[k] += (S[k] + Woff[k]) * dtg
                out_vals[gi, k] = S[k] + Woff[k]
                out_ints[gi, k] = I[k]
            t_cursor = grid[gi]
            if want_snap:
                for x in range(n):
                    snaps[gi, x] = occ[x]
            gi += 1

        if t_next >= t_end:
            for x in range(n):
                if occ[x]:
                    occ_time[x] += t_end - last_t[x]
            break

        for k in range(K):
            I[k] += (S[k] + Woff[k]) * (t_next - t_cursor)
        t_cursor = t_next
        t = t_next

        state, u = _next_u01(state)
        v = u * total
        bulk_total = bulk_rate * n_disc
        if v <= bulk_total and n_disc > 0:
            j = int(v / bulk_rate)
            if j >= n_disc:
                j = n_disc - 1
            e = disc_list[j]
            x = edges[e, 0]
            y = edges[e, 1]
            ox = occ[x]
            occ[x] = 1 - ox
            occ[y] = ox
            if ox == 1:
                occ_time[x] += t - last_t[x]
                last_t[y] = t
                dx = -1.0
            else:
                occ_time[y] += t - last_t[y]
                last_t[x] = t
                dx = 1.0
            for k in range(K):
                S[k] += (W[k, x] - W[k, y]) * dx
            for p in range(inc_ptr[x], inc_ptr[x + 1]):
                e2 = inc_idx[p]
                d = occ[edges[e2, 0]] != occ[edges[e2, 1]]
                if d and disc_pos[e2] < 0:
                    disc_pos[e2] = n_disc
                    disc_list[n_disc] = e2
                    n_disc += 1
                elif (not d) and disc_pos[e2] >= 0:
                    q = disc_pos[e2]
                    last = disc_list[n_disc - 1]
                    disc_list[q] = last
                    disc_pos[last] = q
                    disc_pos[e2] = -1
                    n_disc -= 1
            for p in range(inc_ptr[y], inc_ptr[y + 1]):
                e2 = inc_idx[p]
                d = occ[edges[e2, 0]] != occ[edges[e2, 1]]
                if d and disc_pos[e2] < 0:
                    disc_pos[e2] = n_disc
                    disc_list[n_disc] = e2
                    n_disc += 1
                elif (not d) and disc_pos[e2] >= 0:
                    q = disc_pos[e2]
                    last = disc_list[n_disc - 1]
                    disc_list[q] = last
                    disc_pos[last] = q
                    disc_pos[e2] = -1
                    n_disc -= 1
        else:
            w = v - bulk_total
            i = 0
            acc = rate_occupied[0] if occ[corner_ids[0]] else rate_empty[0]
            while w > acc and i < 2:
                i += 1
                acc += rate_occupied[i] if occ[corner_ids[i]] else rate_empty[i]
            a = corner_ids[i]
            oa = occ[a]
            occ[a] = 1 - oa
            if oa == 1:
                occ_time[a] += t - last_t[a]
                da = -1.0
            else:
                last_t[a] = t
                da = 1.0
            for k in range(K):
                S[k] += W[k, a] * da
            for p in range(inc_ptr[a], inc_ptr[a + 1]):
                e2 = inc_idx[p]
                d = occ[edges[e2, 0]] != occ[edges[e2, 1]]
                if d and disc_pos[e2] < 0:
                    disc_pos[e2] = n_disc
                    disc_list[n_disc] = e2
                    n_disc += 1
                elif (not d) and disc_pos[e2] >= 0:
                    q = disc_pos[e2]
                    last = disc_list[n_disc - 1]
                    disc_list[q] = last
                    disc_pos[last] = q
                    disc_pos[e2] = -1
                    n_disc -= 1
        n_events += 1

    return out_vals, out_ints, snaps, occ_time, n_events, state
