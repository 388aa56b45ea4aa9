"""Compiled inner loop of the flit-level simulator.

Everything lives in flat numpy arrays so the whole per-cycle pipeline can
run under numba. One cycle executes, in order:

  P0  link/ejection arrivals scheduled for this cycle, then credit returns
  P1  endpoint injection (at most 1 flit per endpoint per cycle)
  P2  route computation for every newly exposed head packet
  P3  crossbar: `speedup` sequential rounds, each output port granting one
      flit to a uniformly chosen eligible requester
  P4  output buffer to link transfer at 1 flit per cycle per link,
      packet-atomic per link, cut-through allowed within the cycle

The pipeline is strictly single-threaded and every random choice comes
from a per-switch (or per-endpoint) counter-based stream, so a run is a
pure function of (config, workload, seed).

Layout conventions:
  switch ids are row-major; ports 0..q(n-1)-1 are network ports grouped by
  dimension (targets ascending, own coordinate skipped), then
  `concentration` local ports. ipv/opv = (switch*P + port)*V + vc.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# --- record pool fields (one row per in-flight packet) ---
RF_SRC_EP = 0
RF_DST_SW = 1
RF_DST_OFF = 2
RF_SIZE = 3
RF_VCBASE = 4
RF_GROUP = 5
RF_RANKSLOT = 6
RF_STEP = 7
RF_HOPS = 8
RF_DEROUTES = 9
RF_BIRTH = 10
RF_EJ = 11
NREC = 12

# --- static configuration words ---
CF_N = 0
CF_Q = 1
CF_CONC = 2
CF_PORTS = 3        # ports per switch (network + local)
CF_NETPORTS = 4     # q * (n - 1)
CF_V = 5            # total VCs per port
CF_VSET = 6         # VCs per partition set
CF_PKT = 7          # packet size in flits
CF_INCAP = 8        # input buffer, packets per VC
CF_OUTCAP = 9       # output buffer, packets per VC
CF_SPEED = 10       # crossbar grants per port per cycle
CF_LINKLAT = 11
CF_CREDLAT = 12
CF_PEN = 13         # deroute occupancy penalty in phits
CF_RKIND = 14       # 0 = MIN adaptive, 1 = Omni-WAR
CF_BUDGET = 15      # deroute budget m
CF_HOPCAP = 16      # q + m
CF_WATCH = 17       # watchdog window in cycles
CF_SWITCHES = 18
CF_ENDPOINTS = 19
NCFG = 20

# --- mutable scalar state ---
ST_T = 0
ST_STATUS = 1
ST_INJ_F = 2        # injected flits
ST_DEL_P = 3        # delivered packets
ST_DEL_F = 4        # delivered flits
ST_LAT_SUM = 5      # sum of delivered packet latencies
ST_HOPV = 6         # hop-cap violations
ST_LATV = 7         # serialization lower-bound violations
ST_LASTPROG = 8     # cycle of last terminating-group delivery
ST_GROUPS_LEFT = 9  # terminating groups not yet complete
ST_FREE_TOP = 10    # record pool free-list height
ST_RT_LEN = 11      # routing work-list length
ST_ERR = 12         # structural error code (see E_* below)
ST_ERRINFO = 13
ST_EJTOT = 14       # flits landed at endpoints of still-live packets
ST_CAP_LEN = 15     # captured packet rows
ST_TRACE_LEN = 16
NST = 17

# --- run status ---
S_RUN = 0
S_DONE = 1
S_WATCHDOG = 2
S_ERROR = 3
S_NEED_POOL = 4
S_NEED_CAPTURE = 5
S_NEED_TRACE = 6

# --- structural error codes ---
E_IN_OVERFLOW = 1
E_OUT_OVERFLOW = 2
E_CREDIT = 3
E_RING = 4
E_REQ_OVERFLOW = 5
E_RT_OVERFLOW = 6
E_BAD_ARRIVAL = 7

# --- endpoint traffic modes ---
EP_IDLE = 0
EP_SCRIPTED = 1
EP_STATIC = 2

# --- group kinds / static pattern modes ---
GK_SCRIPTED = 0
GK_STATIC_FIN = 1
GK_STATIC_INF = 2
PM_PERM = 0
PM_UNIFORM = 1

# --- capture row fields ---
CP_SRC = 0
CP_DST = 1
CP_BIRTH = 2
CP_DELIVERY = 3
CP_HOPS = 4
CP_DEROUTES = 5
CP_GROUP = 6
CP_SIZE = 7
CP_STEP = 8
NCAP = 9

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _rng_next(states, i):
    s = states[i] + _GAMMA
    states[i] = s
    z = s
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _rng_below(states, i, k):
    # Same computation as SwitchRng.randrange; always consumes one draw.
    return np.int64((_rng_next(states, i) >> np.uint64(33)) % np.uint64(k))


@njit(cache=True)
def _port_toward(cur_coord, target, n, dim):
    # Network port for the hop (dim: cur_coord -> target); the slot for
    # the switch's own coordinate is skipped.
    idx = target if target < cur_coord else target - 1
    return dim * (n - 1) + idx


@njit(cache=True)
def _route_one(cfg, rec, r, s, out_occ, pend_occ, cred, link_dst_sw,
               link_dst_port, sw_state):
    """Pick the output port for record r sitting at switch s.

    Returns (port, is_minimal). Mirrors routing.candidates + routing.select:
    minimal candidates first (ascending dimension), then deroutes
    (ascending dimension, ascending target); least effective occupancy
    wins, with the deroute penalty added to non-minimal candidates and
    ties broken by one rng draw (consumed only when there is a tie).

    A candidate's occupancy counts every phit queued for its link on the
    one VC the packet may use for this hop: the output ring, the routed
    input heads still waiting for a crossbar grant, and, via consumed
    credits, the buffer space held at the downstream input. The remote
    component lets the signal keep growing past one full output ring, so
    the deroute penalty stays meaningful under saturation; restricting
    the sum to the packet's own VC keeps traffic classes from reacting
    to rings they cannot enter.
    """
    n = cfg[CF_N]
    q = cfg[CF_Q]
    p_ports = cfg[CF_PORTS]
    v_total = cfg[CF_V]
    vset = cfg[CF_VSET]
    pen = cfg[CF_PEN]
    pkt = cfg[CF_PKT]
    in_cap = cfg[CF_INCAP]
    omni = cfg[CF_RKIND] == 1 and rec[r, RF_DEROUTES] < cfg[CF_BUDGET]
    vc = rec[r, RF_VCBASE] + min(rec[r, RF_HOPS], vset - 1)
    dst = rec[r, RF_DST_SW]

    # Decode coordinates, most significant dimension first.
    cur_c = np.empty(q, np.int64)
    dst_c = np.empty(q, np.int64)
    cs = s
    ds = dst
    for d in range(q - 1, -1, -1):
        cur_c[d] = cs % n
        dst_c[d] = ds % n
        cs //= n
        ds //= n

    best = np.int64(1 << 60)
    count = np.int64(0)
    for phase in range(2):
        # phase 0: find the minimum and the tie count
        # phase 1: walk again and take the chosen tied candidate
        if phase == 1:
            if count <= 1:
                pick = np.int64(0)
            else:
                pick = _rng_below(sw_state, s, count)
        else:
            pick = np.int64(-1)
        seen = np.int64(0)
        for minimal in range(1, -1, -1):
            if minimal == 0 and not omni:
                break
            for d in range(q):
                if cur_c[d] == dst_c[d]:
                    continue
                if minimal == 1:
                    targets_lo, targets_hi = dst_c[d], dst_c[d] + 1
                else:
                    targets_lo, targets_hi = 0, n
                for t in range(targets_lo, targets_hi):
                    if minimal == 0 and (t == cur_c[d] or t == dst_c[d]):
                        continue
                    port = _port_toward(cur_c[d], t, n, d)
                    gp = s * p_ports + port
                    opv = gp * v_total + vc
                    down = (
                        link_dst_sw[gp] * p_ports + link_dst_port[gp]
                    ) * v_total + vc
                    occ = out_occ[opv] + pend_occ[opv]
                    occ += (in_cap - cred[down]) * pkt
                    if minimal == 0:
                        occ += pen
                    if phase == 0:
                        if occ < best:
                            best = occ
                            count = 1
                        elif occ == best:
                            count += 1
                    else:
                        if occ == best:
                            if seen == pick:
                                return port, minimal == 1
                            seen += 1
    return np.int64(-1), False  # unreachable: cur != dst guarantees a candidate


@njit(cache=True)
def _alloc_rec(state, free_stack):
    top = state[ST_FREE_TOP] - 1
    state[ST_FREE_TOP] = top
    return free_stack[top]


@njit(cache=True)
def _free_rec(state, free_stack, r):
    top = state[ST_FREE_TOP]
    free_stack[top] = r
    state[ST_FREE_TOP] = top + 1


@njit(cache=True)
def _fail(state, code, info):
    state[ST_ERR] = code
    state[ST_ERRINFO] = info
    state[ST_STATUS] = S_ERROR


@njit(cache=True)
def _group_done(state, grp_terminating, grp_done_cycle, g, t):
    grp_done_cycle[g] = t
    if grp_terminating[g] == 1:
        state[ST_GROUPS_LEFT] -= 1


@njit(cache=True)
def _advance_rank(
    state, rs, rank_cur_step, rs_group, grp_steps, grp_k, grp_rank_base,
    grp_stepidx_base, st_total, st_deliv, rv_need, rv_got, grp_require,
    grp_ranks_done, grp_terminating, grp_done_cycle, t,
):
    g = rs_group[rs]
    steps = grp_steps[g]
    cur = rank_cur_step[rs]
    if cur >= steps:
        return
    base = grp_stepidx_base[g] + (rs - grp_rank_base[g]) * steps
    while cur < steps:
        i = base + cur
        if st_deliv[i] < st_total[i]:
            break
        if grp_require[g] == 1 and rv_got[i] < rv_need[i]:
            break
        cur += 1
    if cur != rank_cur_step[rs]:
        rank_cur_step[rs] = cur
        if cur == steps:
            grp_ranks_done[g] += 1
            if grp_ranks_done[g] == grp_k[g]:
                _group_done(state, grp_terminating, grp_done_cycle, g, t)


@njit(cache=True)
def run_cycles(
    max_cycles, stop_on_done,
    cfg, state,
    # topology tables
    link_dst_sw, link_dst_port,
    # record pool
    rec, free_stack,
    # input side
    in_ring, in_arr, in_cross, in_head, in_count,
    head_state, head_gport, head_opv, head_slot,
    rt_list,
    # crossbar requests
    req_list, req_len, req_pos, in_budget,
    # output side
    out_ring, out_in, out_sent, out_head, out_count, out_occ, pend_occ,
    cred, link_rec, link_opv,
    # delay rings
    arr_ring, arr_len, cred_ring, cred_len,
    # rng
    sw_state, ep_state,
    # endpoint programs
    ep_mode, ep_group, ep_rankslot, ep_ipv, ep_static_dest, ep_pkts_left,
    ep_cur_rec, ep_cur_slot, ep_cur_sent, ep_desc_ptr, ep_desc_end,
    ep_desc_left,
    desc_dst, desc_pkts, desc_step,
    # groups and rank-step accounting
    grp_kind, grp_pattern, grp_vcbase, grp_require, grp_terminating,
    grp_k, grp_steps, grp_remaining, grp_ranks_done, grp_done_cycle,
    grp_ep_start, ep_list, grp_rank_base, grp_stepidx_base,
    rank_cur_step, rs_group,
    st_total, st_deliv, rv_need, rv_got,
    # metrics
    link_flits, cap_buf, trace_buf,
):
    n = cfg[CF_N]
    p_ports = cfg[CF_PORTS]
    netports = cfg[CF_NETPORTS]
    conc = cfg[CF_CONC]
    v_total = cfg[CF_V]
    vset = cfg[CF_VSET]
    pkt_size = cfg[CF_PKT]
    in_cap = cfg[CF_INCAP]
    out_cap = cfg[CF_OUTCAP]
    speedup = cfg[CF_SPEED]
    link_lat = cfg[CF_LINKLAT]
    cred_lat = cfg[CF_CREDLAT]
    hop_cap = cfg[CF_HOPCAP]
    watchdog = cfg[CF_WATCH]
    n_switches = cfg[CF_SWITCHES]
    n_endpoints = cfg[CF_ENDPOINTS]
    n_gports = n_switches * p_ports
    arr_ring_len = arr_ring.shape[0]
    cred_ring_len = cred_ring.shape[0]
    cap_on = cap_buf.shape[0] > 0
    trace_on = trace_buf.shape[0] > 0

    for _cycle in range(max_cycles):
        if state[ST_STATUS] != S_RUN:
            break
        t = state[ST_T]

        # Headroom checks: grow-and-resume points must sit on cycle
        # boundaries so a cycle never half-executes.
        if state[ST_FREE_TOP] < n_endpoints:
            state[ST_STATUS] = S_NEED_POOL
            break
        if cap_on and cap_buf.shape[0] - state[ST_CAP_LEN] < n_endpoints:
            state[ST_STATUS] = S_NEED_CAPTURE
            break
        if trace_on and trace_buf.shape[0] - state[ST_TRACE_LEN] < n_gports:
            state[ST_STATUS] = S_NEED_TRACE
            break

        # ---- P0a: arrivals scheduled for cycle t ----
        a_slot = t % arr_ring_len
        for i in range(arr_len[a_slot]):
            r = arr_ring[a_slot, i, 0]
            code = arr_ring[a_slot, i, 1]
            fidx = arr_ring[a_slot, i, 2]
            if code >= 0:
                ipv = code
                if fidx == 1:
                    if in_count[ipv] >= in_cap:
                        _fail(state, E_IN_OVERFLOW, ipv)
                        break
                    slot = (in_head[ipv] + in_count[ipv]) % in_cap
                    in_ring[ipv, slot] = r
                    in_arr[ipv, slot] = 1
                    in_cross[ipv, slot] = 0
                    was_empty = in_count[ipv] == 0
                    in_count[ipv] += 1
                    rec[r, RF_HOPS] += 1
                    if was_empty:
                        rt_list[state[ST_RT_LEN]] = ipv
                        state[ST_RT_LEN] += 1
                else:
                    if in_count[ipv] == 0:
                        _fail(state, E_BAD_ARRIVAL, ipv)
                        break
                    slot = (in_head[ipv] + in_count[ipv] - 1) % in_cap
                    in_arr[ipv, slot] += 1
            else:
                ep = -code - 1
                rec[r, RF_EJ] += 1
                state[ST_EJTOT] += 1
                if fidx == rec[r, RF_SIZE]:
                    # ---- delivery ----
                    g = rec[r, RF_GROUP]
                    lat = t - rec[r, RF_BIRTH]
                    state[ST_DEL_P] += 1
                    state[ST_DEL_F] += rec[r, RF_SIZE]
                    state[ST_EJTOT] -= rec[r, RF_SIZE]
                    state[ST_LAT_SUM] += lat
                    if rec[r, RF_HOPS] > hop_cap:
                        state[ST_HOPV] += 1
                    if lat < rec[r, RF_SIZE] - 1 + link_lat:
                        state[ST_LATV] += 1
                    if cap_on:
                        row = state[ST_CAP_LEN]
                        cap_buf[row, CP_SRC] = rec[r, RF_SRC_EP]
                        cap_buf[row, CP_DST] = ep
                        cap_buf[row, CP_BIRTH] = rec[r, RF_BIRTH]
                        cap_buf[row, CP_DELIVERY] = t
                        cap_buf[row, CP_HOPS] = rec[r, RF_HOPS]
                        cap_buf[row, CP_DEROUTES] = rec[r, RF_DEROUTES]
                        cap_buf[row, CP_GROUP] = g
                        cap_buf[row, CP_SIZE] = rec[r, RF_SIZE]
                        cap_buf[row, CP_STEP] = rec[r, RF_STEP]
                        state[ST_CAP_LEN] = row + 1
                    if grp_kind[g] == GK_SCRIPTED:
                        rs_src = rec[r, RF_RANKSLOT]
                        step = rec[r, RF_STEP]
                        gs = grp_steps[g]
                        i_src = (
                            grp_stepidx_base[g]
                            + (rs_src - grp_rank_base[g]) * gs
                            + step
                        )
                        st_deliv[i_src] += 1
                        rs_dst = ep_rankslot[ep]
                        i_dst = (
                            grp_stepidx_base[g]
                            + (rs_dst - grp_rank_base[g]) * gs
                            + step
                        )
                        rv_got[i_dst] += 1
                        _advance_rank(
                            state, rs_src, rank_cur_step, rs_group, grp_steps,
                            grp_k, grp_rank_base, grp_stepidx_base, st_total,
                            st_deliv, rv_need, rv_got, grp_require,
                            grp_ranks_done, grp_terminating, grp_done_cycle, t,
                        )
                        if rs_dst != rs_src:
                            _advance_rank(
                                state, rs_dst, rank_cur_step, rs_group,
                                grp_steps, grp_k, grp_rank_base,
                                grp_stepidx_base, st_total, st_deliv, rv_need,
                                rv_got, grp_require, grp_ranks_done,
                                grp_terminating, grp_done_cycle, t,
                            )
                    elif grp_kind[g] == GK_STATIC_FIN:
                        grp_remaining[g] -= 1
                        if grp_remaining[g] == 0:
                            _group_done(
                                state, grp_terminating, grp_done_cycle, g, t
                            )
                    if grp_terminating[g] == 1:
                        state[ST_LASTPROG] = t
                    _free_rec(state, free_stack, r)
        arr_len[a_slot] = 0
        if state[ST_STATUS] != S_RUN:
            break

        # ---- P0b: credit returns ----
        c_slot = t % cred_ring_len
        for i in range(cred_len[c_slot]):
            ipv = cred_ring[c_slot, i]
            cred[ipv] += 1
            if cred[ipv] > in_cap:
                _fail(state, E_CREDIT, ipv)
        cred_len[c_slot] = 0
        if state[ST_STATUS] != S_RUN:
            break

        # ---- P1: endpoint injection ----
        for ep in range(n_endpoints):
            mode = ep_mode[ep]
            if mode == EP_IDLE:
                continue
            cur = ep_cur_rec[ep]
            ipv = ep_ipv[ep]
            if cur >= 0:
                slot = ep_cur_slot[ep]
                in_arr[ipv, slot] += 1
                ep_cur_sent[ep] += 1
                state[ST_INJ_F] += 1
                if ep_cur_sent[ep] == rec[cur, RF_SIZE]:
                    ep_cur_rec[ep] = -1
                continue
            # Pick the next packet if the program allows one.
            g = ep_group[ep]
            dst_ep = np.int64(-1)
            step = np.int64(0)
            rs = np.int64(-1)
            if mode == EP_SCRIPTED:
                ptr = ep_desc_ptr[ep]
                if ptr >= ep_desc_end[ep]:
                    continue
                rs = ep_rankslot[ep]
                step = desc_step[ptr]
                # Receive-gated programs hold step s until step s-1 is
                # delivered and its receives landed; ungated programs
                # stream their send list, the step index only ordering
                # destinations.
                if grp_require[g] == 1 and step > rank_cur_step[rs]:
                    continue
                if in_count[ipv] >= in_cap:
                    continue
                dst_ep = desc_dst[ptr]
                if ep_desc_left[ep] < 0:
                    ep_desc_left[ep] = desc_pkts[ptr]
                ep_desc_left[ep] -= 1
                if ep_desc_left[ep] == 0:
                    ep_desc_ptr[ep] = ptr + 1
                    ep_desc_left[ep] = -1
            else:
                if grp_kind[g] == GK_STATIC_FIN and ep_pkts_left[ep] <= 0:
                    continue
                if in_count[ipv] >= in_cap:
                    continue
                if grp_pattern[g] == PM_PERM:
                    dst_ep = ep_static_dest[ep]
                else:
                    r_dst = _rng_below(ep_state, ep, grp_k[g])
                    dst_ep = ep_list[grp_ep_start[g] + r_dst]
                if grp_kind[g] == GK_STATIC_FIN:
                    ep_pkts_left[ep] -= 1
            # Bind the new packet and stream its head flit.
            r = _alloc_rec(state, free_stack)
            rec[r, RF_SRC_EP] = ep
            rec[r, RF_DST_SW] = dst_ep // conc
            rec[r, RF_DST_OFF] = dst_ep % conc
            rec[r, RF_SIZE] = pkt_size
            rec[r, RF_VCBASE] = grp_vcbase[g]
            rec[r, RF_GROUP] = g
            rec[r, RF_RANKSLOT] = rs
            rec[r, RF_STEP] = step
            rec[r, RF_HOPS] = 0
            rec[r, RF_DEROUTES] = 0
            rec[r, RF_BIRTH] = t
            rec[r, RF_EJ] = 0
            slot = (in_head[ipv] + in_count[ipv]) % in_cap
            in_ring[ipv, slot] = r
            in_arr[ipv, slot] = 1
            in_cross[ipv, slot] = 0
            was_empty = in_count[ipv] == 0
            in_count[ipv] += 1
            ep_cur_rec[ep] = r
            ep_cur_slot[ep] = slot
            ep_cur_sent[ep] = 1
            state[ST_INJ_F] += 1
            if was_empty:
                rt_list[state[ST_RT_LEN]] = ipv
                state[ST_RT_LEN] += 1

        # ---- P2: route computation for exposed heads ----
        for i in range(state[ST_RT_LEN]):
            ipv = rt_list[i]
            if in_count[ipv] == 0 or head_state[ipv] != 0:
                continue
            h = in_head[ipv]
            r = in_ring[ipv, h]
            s = ipv // (p_ports * v_total)
            if rec[r, RF_DST_SW] == s:
                port = netports + rec[r, RF_DST_OFF]
                vc = rec[r, RF_VCBASE] + min(rec[r, RF_HOPS], vset - 1)
            else:
                port, is_min = _route_one(cfg, rec, r, s, out_occ, pend_occ,
                                          cred, link_dst_sw, link_dst_port,
                                          sw_state)
                if not is_min:
                    rec[r, RF_DEROUTES] += 1
                # Hop i rides VC i-1, so q+m hops use exactly q+m VCs with
                # strictly ascending indices: no cyclic credit waits.
                vc = rec[r, RF_VCBASE] + min(rec[r, RF_HOPS], vset - 1)
            gp = s * p_ports + port
            head_gport[ipv] = gp
            head_opv[ipv] = gp * v_total + vc
            head_state[ipv] = 1
            pend_occ[gp * v_total + vc] += rec[r, RF_SIZE]
            if req_len[gp] >= req_list.shape[1]:
                _fail(state, E_REQ_OVERFLOW, gp)
                break
            req_pos[ipv] = req_len[gp]
            req_list[gp, req_len[gp]] = ipv
            req_len[gp] += 1
        state[ST_RT_LEN] = 0
        if state[ST_STATUS] != S_RUN:
            break

        # ---- P3: crossbar allocation, `speedup` rounds ----
        for gp in range(n_gports):
            in_budget[gp] = 0
        for _round in range(speedup):
            for s in range(n_switches):
                for p in range(p_ports):
                    gp = s * p_ports + p
                    nreq = req_len[gp]
                    if nreq == 0:
                        continue
                    count = 0
                    for j in range(nreq):
                        ipv = req_list[gp, j]
                        h = in_head[ipv]
                        if in_arr[ipv, h] <= in_cross[ipv, h]:
                            continue
                        if in_budget[ipv // v_total] >= speedup:
                            continue
                        if head_state[ipv] == 1:
                            opv = head_opv[ipv]
                            if out_count[opv] >= out_cap:
                                continue
                        count += 1
                    if count == 0:
                        continue
                    pick = 0 if count == 1 else _rng_below(sw_state, s, count)
                    seen = 0
                    for j in range(nreq):
                        ipv = req_list[gp, j]
                        h = in_head[ipv]
                        if in_arr[ipv, h] <= in_cross[ipv, h]:
                            continue
                        if in_budget[ipv // v_total] >= speedup:
                            continue
                        if head_state[ipv] == 1:
                            opv = head_opv[ipv]
                            if out_count[opv] >= out_cap:
                                continue
                        if seen != pick:
                            seen += 1
                            continue
                        # ---- grant: move one flit input -> output ----
                        r = in_ring[ipv, h]
                        opv = head_opv[ipv]
                        if head_state[ipv] == 1:
                            oslot = (out_head[opv] + out_count[opv]) % out_cap
                            out_ring[opv, oslot] = r
                            out_in[opv, oslot] = 0
                            out_sent[opv, oslot] = 0
                            out_count[opv] += 1
                            out_occ[opv] += rec[r, RF_SIZE]
                            pend_occ[opv] -= rec[r, RF_SIZE]
                            head_slot[ipv] = oslot
                            head_state[ipv] = 2
                        oslot = head_slot[ipv]
                        in_cross[ipv, h] += 1
                        out_in[opv, oslot] += 1
                        in_budget[ipv // v_total] += 1
                        if in_cross[ipv, h] == rec[r, RF_SIZE]:
                            # tail crossed: pop the input VC
                            in_count[ipv] -= 1
                            in_head[ipv] = (h + 1) % in_cap
                            head_state[ipv] = 0
                            # remove from this port's request list
                            last = req_len[gp] - 1
                            pos = req_pos[ipv]
                            moved = req_list[gp, last]
                            req_list[gp, pos] = moved
                            req_pos[moved] = pos
                            req_len[gp] = last
                            req_pos[ipv] = -1
                            port_in = (ipv // v_total) % p_ports
                            if port_in < netports:
                                cslot = (t + cred_lat) % cred_ring_len
                                if cred_len[cslot] >= cred_ring.shape[1]:
                                    _fail(state, E_RING, 1)
                                    break
                                cred_ring[cslot, cred_len[cslot]] = ipv
                                cred_len[cslot] += 1
                            if in_count[ipv] > 0:
                                rt_list[state[ST_RT_LEN]] = ipv
                                state[ST_RT_LEN] += 1
                        break
                if state[ST_STATUS] != S_RUN:
                    break
            if state[ST_STATUS] != S_RUN:
                break
        if state[ST_STATUS] != S_RUN:
            break

        # ---- P4: output buffer -> link, 1 flit per port per cycle ----
        for s in range(n_switches):
            for p in range(p_ports):
                gp = s * p_ports + p
                # For network ports, the base of the downstream input VC
                # block this link feeds; -1 marks an ejection port.
                if p < netports:
                    down_base = (
                        link_dst_sw[gp] * p_ports + link_dst_port[gp]
                    ) * v_total
                else:
                    down_base = np.int64(-1)
                if link_rec[gp] < 0:
                    # Bind the next packet: uniform among VCs whose head
                    # packet has a flit ready (and a credit, for net ports).
                    count = 0
                    for v in range(v_total):
                        opv = gp * v_total + v
                        if out_count[opv] == 0:
                            continue
                        h = out_head[opv]
                        if out_in[opv, h] <= out_sent[opv, h]:
                            continue
                        if down_base >= 0 and cred[down_base + v] <= 0:
                            continue
                        count += 1
                    if count == 0:
                        continue
                    pick = 0 if count == 1 else _rng_below(sw_state, s, count)
                    seen = 0
                    for v in range(v_total):
                        opv = gp * v_total + v
                        if out_count[opv] == 0:
                            continue
                        h = out_head[opv]
                        if out_in[opv, h] <= out_sent[opv, h]:
                            continue
                        if down_base >= 0 and cred[down_base + v] <= 0:
                            continue
                        if seen != pick:
                            seen += 1
                            continue
                        link_rec[gp] = out_ring[opv, h]
                        link_opv[gp] = opv
                        if down_base >= 0:
                            cred[down_base + v] -= 1
                        break
                if link_rec[gp] < 0:
                    continue
                opv = link_opv[gp]
                h = out_head[opv]
                if out_in[opv, h] <= out_sent[opv, h]:
                    continue  # bubble: next flit not crossed yet
                r = out_ring[opv, h]
                out_sent[opv, h] += 1
                out_occ[opv] -= 1
                fidx = out_sent[opv, h]
                link_flits[gp] += 1
                if trace_on:
                    row = state[ST_TRACE_LEN]
                    trace_buf[row, 0] = t
                    trace_buf[row, 1] = gp
                    state[ST_TRACE_LEN] = row + 1
                if down_base >= 0:
                    code = down_base + opv % v_total
                else:
                    code = -(s * conc + (p - netports)) - 1
                aslot = (t + link_lat) % arr_ring_len
                if arr_len[aslot] >= arr_ring.shape[1]:
                    _fail(state, E_RING, 2)
                    break
                arr_ring[aslot, arr_len[aslot], 0] = r
                arr_ring[aslot, arr_len[aslot], 1] = code
                arr_ring[aslot, arr_len[aslot], 2] = fidx
                arr_len[aslot] += 1
                if fidx == rec[r, RF_SIZE]:
                    out_count[opv] -= 1
                    out_head[opv] = (h + 1) % out_cap
                    link_rec[gp] = -1
            if state[ST_STATUS] != S_RUN:
                break
        if state[ST_STATUS] != S_RUN:
            break

        # ---- end of cycle ----
        state[ST_T] = t + 1
        if stop_on_done and state[ST_GROUPS_LEFT] == 0:
            state[ST_STATUS] = S_DONE
            break
        if state[ST_GROUPS_LEFT] > 0 and t - state[ST_LASTPROG] > watchdog:
            state[ST_STATUS] = S_WATCHDOG
            break
    return state[ST_STATUS]
