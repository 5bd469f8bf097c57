"""Batched mask and transition kernels.

State for ``R`` rollouts lives in three arrays: ``vis`` (R, N) bool, ``fs``
(R, NF) float64 and ``st`` (R, NI) int64.  Static per-instance data is stacked
over the ``B`` instances of a batch, which all share one constraint spec;
``inst`` maps each rollout row to its instance.

Every kernel exists twice: a row loop under ``@njit`` and a vectorised numpy
version.  Both must agree exactly; tests replay random rollouts through both.
"""

import numpy as np

from .._accel import njit

EPS = 1e-9

# family flags
F_C, F_O, F_B, F_BP, F_L, F_TW, F_MD, F_PC, F_OP, F_A, F_PD = (1 << k for k in range(11))
F_SINGLE = 1 << 11   # one closed tour through the depot (OP, PC, PDTSP)
F_NODEPOT = 1 << 12  # TSP / ATSP

FAMILY_FLAGS = {
    "C": F_C, "O": F_O, "B": F_B, "BP": F_BP, "L": F_L, "TW": F_TW, "MD": F_MD,
    "PC": F_PC, "OP": F_OP, "A": F_A, "PD": F_PD,
}

# float state columns
LOAD, BLOAD, CLOCK, RLEN, PRIZE, TRAVEL = range(6)
NF = 6
# int state columns
CUR, FIRST, ORIGIN, PHASE, NROUTE, PENDING, ATDEPOT, RELOC, DONE = range(9)
NI = 9

# omega columns
DEM, PRZ, PEN, TW_E, TW_L, SVC = range(6)

# par vector
P_LIMIT, P_END, P_MAXLEN, P_REQ = range(4)


# ------------------------------------------------------------------ numba path

@njit(cache=True, inline="always")
def _customer_ok(flags, limit, end, maxlen, dem, tw_e, tw_l, svc, d_cj, d_jo, partner, partner_seen,
                 load, bload, clock, rlen, phase, at_depot, lh_left, j):
    # scalars only: array arguments here would cost a refcount pair per call
    if flags & F_PD:
        if partner > j:
            if (flags & F_C) and -dem > load + EPS:
                return False
        elif not partner_seen:
            return False
    elif flags & F_C:
        if dem > 0.0:
            if dem > load + EPS:
                return False
            if (flags & F_BP) and phase == 1:
                return False
        elif dem < 0.0:
            if bload - dem > 1.0 + EPS:
                return False
            if (flags & F_B) and at_depot and lh_left > 0:
                return False
    if flags & F_L:
        back = 0.0 if flags & F_O else d_jo
        if rlen + d_cj + back > limit + EPS:
            return False
    if flags & F_TW:
        arr = clock + d_cj
        if arr > tw_l + EPS:
            return False
        if not flags & F_O:
            start = max(arr, tw_e)
            if start + svc + d_jo > end + EPS:
                return False
    if flags & F_OP:
        if rlen + d_cj + d_jo > maxlen + EPS:
            return False
    return True


@njit(cache=True, inline="always")
def _may_finish(flags, required, prize, left):
    if flags & F_PC:
        return prize >= required - EPS or left == 0
    if flags & F_OP:
        return True
    return left == 0


@njit(cache=True)
def _fresh_jit(flags, dc, par, dist, om, pair):
    B, N = om.shape[0], om.shape[1]
    out = np.zeros((B, max(dc, 1), N), dtype=np.bool_)
    limit, end, maxlen = par[P_LIMIT], par[P_END], par[P_MAXLEN]
    for b in range(B):
        for k in range(dc):
            for j in range(dc, N):
                out[b, k, j] = _customer_ok(flags, limit, end, maxlen, om[b, j, DEM], om[b, j, TW_E],
                                            om[b, j, TW_L], om[b, j, SVC], dist[b, k, j], dist[b, j, k],
                                            pair[b, j], False, 1.0, 0.0, 0.0, 0.0, 0, True, 0, j)
    return out


@njit(cache=True)
def _mask_jit(flags, dc, par, dist, om, pair, fresh, inst, vis, fs, st, out):
    R, N = vis.shape
    limit, end, maxlen = par[P_LIMIT], par[P_END], par[P_MAXLEN]
    for r in range(R):
        for j in range(N):
            out[r, j] = False
        if st[r, DONE]:
            continue
        b = inst[r]
        cur = st[r, CUR]
        origin = st[r, ORIGIN]
        at_depot = st[r, ATDEPOT] == 1
        load, bload, clock, rlen, phase = fs[r, LOAD], fs[r, BLOAD], fs[r, CLOCK], fs[r, RLEN], st[r, PHASE]
        left = 0
        lh_left = 0
        for j in range(dc, N):
            if not vis[r, j]:
                left += 1
                if om[b, j, DEM] > 0.0:
                    lh_left += 1
        for j in range(dc, N):
            if not vis[r, j]:
                p = pair[b, j]
                seen = vis[r, p] if p >= 0 else False
                out[r, j] = _customer_ok(flags, limit, end, maxlen, om[b, j, DEM], om[b, j, TW_E],
                                         om[b, j, TW_L], om[b, j, SVC], dist[b, cur, j], dist[b, j, origin],
                                         p, seen, load, bload, clock, rlen, phase, at_depot, lh_left, j)
        if dc == 0:
            continue
        if at_depot:
            if flags & F_SINGLE:
                out[r, cur] = _may_finish(flags, par[P_REQ], fs[r, PRIZE], left)
            elif (flags & F_MD) and st[r, RELOC] == 1:
                for k in range(dc):
                    if k == cur:
                        continue
                    for j in range(dc, N):
                        if vis[r, j] or not fresh[b, k, j]:
                            continue
                        if (flags & F_B) and om[b, j, DEM] < 0.0 and lh_left > 0:
                            continue
                        out[r, k] = True
                        break
        else:
            ok = True
            if (flags & F_PD) and st[r, PENDING] > 0:
                ok = False
            if (flags & F_SINGLE) and not _may_finish(flags, par[P_REQ], fs[r, PRIZE], left):
                ok = False
            out[r, origin] = ok
    return out


@njit(cache=True)
def _step_jit(flags, dc, par, dist, om, pair, inst, vis, fs, st, actions):
    R, N = vis.shape
    for r in range(R):
        a = actions[r]
        if st[r, DONE] or a < 0:
            continue
        b = inst[r]
        cur = st[r, CUR]
        if a >= dc:
            leg = dist[b, cur, a]
            fs[r, TRAVEL] += leg
            fs[r, RLEN] += leg
            if flags & F_TW:
                fs[r, CLOCK] = max(fs[r, CLOCK] + leg, om[b, a, TW_E]) + om[b, a, SVC]
            else:
                fs[r, CLOCK] += leg
            dem = om[b, a, DEM]
            if flags & F_PD:
                if pair[b, a] > a:
                    st[r, PENDING] += 1
                else:
                    st[r, PENDING] -= 1
                if flags & F_C:
                    fs[r, LOAD] = min(1.0, max(0.0, fs[r, LOAD] + dem))
            elif flags & F_C:
                if dem > 0.0:
                    fs[r, LOAD] = max(0.0, fs[r, LOAD] - dem)
                elif dem < 0.0:
                    fs[r, BLOAD] = min(1.0, fs[r, BLOAD] - dem)
                    if flags & F_BP:
                        if st[r, NROUTE] == 0:
                            fs[r, LOAD] = 0.0
                        st[r, PHASE] = 1
            fs[r, PRIZE] += om[b, a, PRZ]
            vis[r, a] = True
            st[r, NROUTE] += 1
            st[r, ATDEPOT] = 0
            st[r, RELOC] = 0
            if st[r, FIRST] < 0:
                st[r, FIRST] = a
            st[r, CUR] = a
            left = 0
            for j in range(dc, N):
                if not vis[r, j]:
                    left += 1
            if left == 0:
                if flags & F_NODEPOT:
                    fs[r, TRAVEL] += dist[b, a, st[r, FIRST]]
                    st[r, DONE] = 1
                elif (flags & F_O) and not flags & F_SINGLE:
                    st[r, DONE] = 1
        elif st[r, ATDEPOT]:
            if flags & F_SINGLE:
                st[r, DONE] = 1
            else:
                st[r, ORIGIN] = a
                st[r, RELOC] = 0
            st[r, CUR] = a
        else:
            if not flags & F_O:
                leg = dist[b, cur, a]
                fs[r, TRAVEL] += leg
                fs[r, RLEN] += leg
            st[r, CUR] = a
            st[r, ATDEPOT] = 1
            if flags & F_SINGLE:
                st[r, DONE] = 1
            else:
                fs[r, LOAD] = 1.0
                fs[r, BLOAD] = 0.0
                fs[r, CLOCK] = 0.0
                fs[r, RLEN] = 0.0
                st[r, PHASE] = 0
                st[r, NROUTE] = 0
                st[r, RELOC] = 1
                left = 0
                for j in range(dc, N):
                    if not vis[r, j]:
                        left += 1
                if left == 0:
                    st[r, DONE] = 1


# ------------------------------------------------------------------ numpy path

def _customer_ok_numpy(flags, par, dist_cur, dist_back, om, pair_vis, vis, load, bload, clock,
                       rlen, phase, at_depot, lh_left, is_pickup):
    """Vectorised customer feasibility; all per-node arrays are (R, N)."""
    dem = om[..., DEM]
    ok = ~vis
    if flags & F_PD:
        if flags & F_C:
            cap_ok = -dem <= load[:, None] + EPS
            ok &= np.where(is_pickup, cap_ok, True)
        ok &= np.where(is_pickup, True, pair_vis)
    elif flags & F_C:
        line = dem > 0.0
        back = dem < 0.0
        line_ok = dem <= load[:, None] + EPS
        if flags & F_BP:
            line_ok &= (phase == 0)[:, None]
        back_ok = bload[:, None] - dem <= 1.0 + EPS
        if flags & F_B:
            back_ok &= ~(at_depot & (lh_left > 0))[:, None]
        ok &= np.where(line, line_ok, np.where(back, back_ok, True))
    if flags & F_L:
        ret = 0.0 if flags & F_O else dist_back
        ok &= rlen[:, None] + dist_cur + ret <= par[P_LIMIT] + EPS
    if flags & F_TW:
        arr = clock[:, None] + dist_cur
        ok &= arr <= om[..., TW_L] + EPS
        if not flags & F_O:
            start = np.maximum(arr, om[..., TW_E])
            ok &= start + om[..., SVC] + dist_back <= par[P_END] + EPS
    if flags & F_OP:
        ok &= rlen[:, None] + dist_cur + dist_back <= par[P_MAXLEN] + EPS
    return ok


def _fresh_numpy(flags, dc, par, dist, om, pair):
    B, N = om.shape[0], om.shape[1]
    out = np.zeros((B, max(dc, 1), N), dtype=bool)
    is_pickup = pair > np.arange(N)
    for k in range(dc):
        z = np.zeros(B)
        ok = _customer_ok_numpy(flags, par, dist[:, k, :], dist[:, :, k], om,
                                np.zeros((B, N), bool), np.zeros((B, N), bool), z + 1.0, z, z, z,
                                np.zeros(B, np.int64), np.ones(B, bool), np.zeros(B, np.int64),
                                is_pickup)
        ok[:, :dc] = False
        out[:, k, :] = ok
    return out


def _mask_numpy(flags, dc, par, dist, om, pair, fresh, inst, vis, fs, st, out):
    R, N = vis.shape
    rows = np.arange(R)
    cur, origin = st[:, CUR], st[:, ORIGIN]
    at_depot = st[:, ATDEPOT] == 1
    done = st[:, DONE] == 1
    omr = om[inst]
    cust = np.arange(N) >= dc
    unvis = ~vis & cust
    left = unvis.sum(1)
    lh_left = (unvis & (omr[..., DEM] > 0.0)).sum(1)
    dist_cur = dist[inst, cur]
    dist_back = dist[inst[:, None], np.arange(N)[None, :], np.maximum(origin, 0)[:, None]]
    pr = pair[inst]
    pair_vis = vis[rows[:, None], np.maximum(pr, 0)]
    ok = _customer_ok_numpy(flags, par, dist_cur, dist_back, omr, pair_vis, vis,
                            fs[:, LOAD], fs[:, BLOAD], fs[:, CLOCK], fs[:, RLEN], st[:, PHASE],
                            at_depot, lh_left, pr > np.arange(N))
    ok &= cust
    out[...] = ok
    if dc:
        if flags & F_PC:
            finish = (fs[:, PRIZE] >= par[P_REQ] - EPS) | (left == 0)
        elif flags & F_OP:
            finish = np.ones(R, bool)
        else:
            finish = left == 0
        single = bool(flags & F_SINGLE)
        # closing from a customer: origin depot only
        close = ~at_depot
        if flags & F_PD:
            close &= st[:, PENDING] == 0
        if single:
            close &= finish
        out[rows[~at_depot], origin[~at_depot]] = close[~at_depot]
        if single:
            out[rows[at_depot], cur[at_depot]] = finish[at_depot]
        elif flags & F_MD:
            can = at_depot & (st[:, RELOC] == 1)
            eligible = unvis.copy()
            if flags & F_B:
                eligible &= ~((omr[..., DEM] < 0.0) & (lh_left > 0)[:, None])
            reach = (fresh[inst] & eligible[:, None, :]).any(-1)  # (R, dc)
            reach[rows, np.clip(cur, 0, dc - 1)] = False
            out[:, :dc] |= reach & can[:, None]
    out[done] = False
    return out


def _step_numpy(flags, dc, par, dist, om, pair, inst, vis, fs, st, actions):
    R, N = vis.shape
    live = (st[:, DONE] == 0) & (actions >= 0)
    a = np.where(live, actions, 0)
    b = inst
    cur = st[:, CUR]
    to_cust = live & (a >= dc)
    to_depot = live & (a < dc)

    # customer visits
    r = np.nonzero(to_cust)[0]
    if r.size:
        ar, br = a[r], b[r]
        leg = dist[br, cur[r], ar]
        fs[r, TRAVEL] += leg
        fs[r, RLEN] += leg
        if flags & F_TW:
            fs[r, CLOCK] = np.maximum(fs[r, CLOCK] + leg, om[br, ar, TW_E]) + om[br, ar, SVC]
        else:
            fs[r, CLOCK] += leg
        dem = om[br, ar, DEM]
        if flags & F_PD:
            pick = pair[br, ar] > ar
            st[r, PENDING] += np.where(pick, 1, -1)
            if flags & F_C:
                fs[r, LOAD] = np.minimum(1.0, np.maximum(0.0, fs[r, LOAD] + dem))
        elif flags & F_C:
            pos, neg = dem > 0.0, dem < 0.0
            fs[r, LOAD] = np.where(pos, np.maximum(0.0, fs[r, LOAD] - dem), fs[r, LOAD])
            fs[r, BLOAD] = np.where(neg, np.minimum(1.0, fs[r, BLOAD] - dem), fs[r, BLOAD])
            if flags & F_BP:
                fs[r, LOAD] = np.where(neg & (st[r, NROUTE] == 0), 0.0, fs[r, LOAD])
                st[r, PHASE] = np.where(neg, 1, st[r, PHASE])
        fs[r, PRIZE] += om[br, ar, PRZ]
        vis[r, ar] = True
        st[r, NROUTE] += 1
        st[r, ATDEPOT] = 0
        st[r, RELOC] = 0
        st[r, FIRST] = np.where(st[r, FIRST] < 0, ar, st[r, FIRST])
        st[r, CUR] = ar
        left = (~vis[r, dc:]).sum(1)
        fin = left == 0
        if flags & F_NODEPOT:
            rf = r[fin]
            fs[rf, TRAVEL] += dist[b[rf], a[rf], st[rf, FIRST]]
            st[rf, DONE] = 1
        elif (flags & F_O) and not flags & F_SINGLE:
            st[r[fin], DONE] = 1

    # depot selections
    r = np.nonzero(to_depot)[0]
    if r.size:
        ar = a[r]
        from_depot = st[r, ATDEPOT] == 1
        rr = r[from_depot]
        if rr.size:
            if flags & F_SINGLE:
                st[rr, DONE] = 1
            else:
                st[rr, ORIGIN] = a[rr]
                st[rr, RELOC] = 0
            st[rr, CUR] = a[rr]
        rc = r[~from_depot]
        if rc.size:
            if not flags & F_O:
                leg = dist[b[rc], cur[rc], a[rc]]
                fs[rc, TRAVEL] += leg
                fs[rc, RLEN] += leg
            st[rc, CUR] = a[rc]
            st[rc, ATDEPOT] = 1
            if flags & F_SINGLE:
                st[rc, DONE] = 1
            else:
                fs[rc, LOAD] = 1.0
                fs[rc, BLOAD] = 0.0
                fs[rc, CLOCK] = 0.0
                fs[rc, RLEN] = 0.0
                st[rc, PHASE] = 0
                st[rc, NROUTE] = 0
                st[rc, RELOC] = 1
                left = (~vis[rc, dc:]).sum(1)
                st[rc[left == 0], DONE] = 1


def fresh_table(jit, *args):
    return _fresh_jit(*args) if jit else _fresh_numpy(*args)


def compute_mask(jit, *args):
    return _mask_jit(*args) if jit else _mask_numpy(*args)


def apply_step(jit, *args):
    if jit:
        _step_jit(*args)
    else:
        _step_numpy(*args)
