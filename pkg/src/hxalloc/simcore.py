"""Flit-level network simulator for 2D HyperX fabrics.

The model is virtual cut-through at packet granularity with flit timing:
buffers and credits are counted in packets per VC, flits move at one per
cycle per link, and a packet may start leaving a switch before it has
fully arrived. Each cycle runs a fixed pipeline (arrivals, credits,
injection, route computation, a speedup-round crossbar with a random
allocator, link transfer), so a run is a deterministic function of
(config, workload, seed).

The inner loop is compiled (see _simloop); this module owns configuration,
workload compilation into flat arrays, metrics, and invariant audits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _simloop as L
from .routing import RouteState, RoutingKind, RoutingPolicy
from .topology import EndpointAddr, NetworkShape
from .workloads import StaticKind, TrafficAssignment

DEFAULT_WATCHDOG_WINDOW = 50_000


class SimulationError(RuntimeError):
    """A structural invariant broke inside the simulator (a bug)."""


class WatchdogError(RuntimeError):
    """No terminating-traffic delivery for a full watchdog window."""

    def __init__(self, message: str, metrics: "SimMetrics | None" = None):
        super().__init__(message)
        self.metrics = metrics


@dataclass(frozen=True)
class SimConfig:
    """Simulator parameters; defaults model the reference 8-ary 2-cube."""

    shape: NetworkShape = field(default_factory=lambda: NetworkShape(q=2, n=8))
    routing: RoutingPolicy = field(default_factory=RoutingPolicy)
    packet_size: int = 16            # flits (= phits)
    input_buffer: int = 8            # packets per input VC
    output_buffer: int = 4           # packets per output VC
    vcs_per_partition: int = 4
    partition_count_for_vcs: int = 1
    internal_speedup: int = 2        # crossbar grants per port per cycle
    allocator: str = "random"
    link_latency: int = 1
    credit_latency: int = 1
    seed: int = 0
    watchdog_window: int = DEFAULT_WATCHDOG_WINDOW
    max_cycles: int = 50_000_000
    capture_packets: bool = False    # keep per-packet delivery records
    trace_links: bool = False        # keep (cycle, port) rows per flit sent

    def __post_init__(self) -> None:
        if self.allocator != "random":
            raise ValueError(f"unknown allocator {self.allocator!r}")
        for name in (
            "packet_size", "input_buffer", "output_buffer",
            "vcs_per_partition", "partition_count_for_vcs",
            "internal_speedup", "link_latency", "credit_latency",
            "watchdog_window", "max_cycles",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def vcs_per_port(self) -> int:
        return self.vcs_per_partition * self.partition_count_for_vcs


@dataclass(frozen=True)
class Packet:
    """Delivery record for one packet (available with capture_packets)."""

    id: int
    source: EndpointAddr
    dest: EndpointAddr
    size: int
    partition: int                   # assignment index; selects the VC set
    route_state: RouteState
    birth_cycle: int
    delivery_cycle: int


@dataclass(frozen=True)
class SimMetrics:
    makespan: int
    delivered_packets: int
    delivered_flits: int
    mean_latency: float
    cycles: int
    injected_flits: int
    status: str
    hop_violations: int
    latency_violations: int
    completion_cycles: dict[str, int]
    link_utilization: tuple[float, ...]  # per global port (network + ejection)

    def to_json(self, per_link: bool = True) -> str:
        util = [round(u, 6) for u in self.link_utilization]
        doc = {
            "makespan": self.makespan,
            "delivered_packets": self.delivered_packets,
            "delivered_flits": self.delivered_flits,
            "mean_latency": round(self.mean_latency, 4),
            "cycles": self.cycles,
            "injected_flits": self.injected_flits,
            "status": self.status,
            "hop_violations": self.hop_violations,
            "latency_violations": self.latency_violations,
            "completion_cycles": self.completion_cycles,
            "link_utilization_summary": {
                "mean": round(float(np.mean(util)), 6) if util else 0.0,
                "max": round(float(np.max(util)), 6) if util else 0.0,
            },
        }
        if per_link:
            doc["link_utilization"] = util
        return json.dumps(doc, indent=2)


_STATUS_NAMES = {
    L.S_RUN: "running",
    L.S_DONE: "done",
    L.S_WATCHDOG: "watchdog",
    L.S_ERROR: "error",
}


def _port_toward(cur: int, target: int, n: int, dim: int) -> int:
    idx = target if target < cur else target - 1
    return dim * (n - 1) + idx


class Simulator:
    """A network instance; load traffic, step cycles, read metrics."""

    def __init__(self, config: SimConfig):
        shape = config.shape
        self.config = config
        self.shape = shape
        self.switch_count = shape.switch_count
        self.network_ports_per_switch = shape.network_ports_per_switch
        self.local_ports_per_switch = shape.concentration
        self.ports_per_switch = (
            self.network_ports_per_switch + self.local_ports_per_switch
        )
        self.vcs_per_port = config.vcs_per_port
        self.endpoint_count = shape.endpoint_count
        self._gports = self.switch_count * self.ports_per_switch
        self._ipvs = self._gports * self.vcs_per_port
        self._build_static_tables()
        self.load([])

    # -- construction ---------------------------------------------------

    def _build_static_tables(self) -> None:
        shape, P = self.shape, self.ports_per_switch
        n, q, netports = shape.n, shape.q, self.network_ports_per_switch
        self._cfg = np.zeros(L.NCFG, np.int64)
        cfg = self._cfg
        cfg[L.CF_N] = n
        cfg[L.CF_Q] = q
        cfg[L.CF_CONC] = shape.concentration
        cfg[L.CF_PORTS] = P
        cfg[L.CF_NETPORTS] = netports
        cfg[L.CF_V] = self.vcs_per_port
        cfg[L.CF_VSET] = self.config.vcs_per_partition
        cfg[L.CF_PKT] = self.config.packet_size
        cfg[L.CF_INCAP] = self.config.input_buffer
        cfg[L.CF_OUTCAP] = self.config.output_buffer
        cfg[L.CF_SPEED] = self.config.internal_speedup
        cfg[L.CF_LINKLAT] = self.config.link_latency
        cfg[L.CF_CREDLAT] = self.config.credit_latency
        cfg[L.CF_PEN] = self.config.routing.penalty_phits
        cfg[L.CF_RKIND] = (
            1 if self.config.routing.kind is RoutingKind.OMNI_WAR else 0
        )
        cfg[L.CF_BUDGET] = self.config.routing.budget(q)
        cfg[L.CF_HOPCAP] = self.config.routing.hop_cap(q)
        cfg[L.CF_WATCH] = self.config.watchdog_window
        cfg[L.CF_SWITCHES] = self.switch_count
        cfg[L.CF_ENDPOINTS] = self.endpoint_count

        # Link tables: for each network output port, the switch it reaches
        # and the input port it lands on there.
        self._link_dst_sw = np.full(self._gports, -1, np.int32)
        self._link_dst_port = np.full(self._gports, -1, np.int32)
        for coord in shape.switches():
            s = shape.linear_switch_id(coord)
            for d in range(q):
                for t in range(n):
                    if t == coord[d]:
                        continue
                    gp = s * P + _port_toward(coord[d], t, n, d)
                    dst = list(coord)
                    dst[d] = t
                    self._link_dst_sw[gp] = shape.linear_switch_id(tuple(dst))
                    self._link_dst_port[gp] = _port_toward(t, coord[d], n, d)

    def load(self, assignments: list[TrafficAssignment]) -> None:
        """Reset all simulator state and install a workload."""
        cfg = self.config
        V, P = self.vcs_per_port, self.ports_per_switch
        IPV, GPORT = self._ipvs, self._gports
        in_cap, out_cap = cfg.input_buffer, cfg.output_buffer
        self.assignments = list(assignments)

        self._state = np.zeros(L.NST, np.int64)
        self._in_ring = np.zeros((IPV, in_cap), np.int32)
        self._in_arr = np.zeros((IPV, in_cap), np.int32)
        self._in_cross = np.zeros((IPV, in_cap), np.int32)
        self._in_head = np.zeros(IPV, np.int32)
        self._in_count = np.zeros(IPV, np.int32)
        self._head_state = np.zeros(IPV, np.int8)
        self._head_gport = np.full(IPV, -1, np.int32)
        self._head_opv = np.full(IPV, -1, np.int32)
        self._head_slot = np.full(IPV, -1, np.int32)
        self._rt_list = np.zeros(IPV, np.int32)
        self._req_list = np.zeros((GPORT, P * V), np.int32)
        self._req_len = np.zeros(GPORT, np.int32)
        self._req_pos = np.full(IPV, -1, np.int32)
        self._in_budget = np.zeros(GPORT, np.int32)
        self._out_ring = np.zeros((IPV, out_cap), np.int32)
        self._out_in = np.zeros((IPV, out_cap), np.int32)
        self._out_sent = np.zeros((IPV, out_cap), np.int32)
        self._out_head = np.zeros(IPV, np.int32)
        self._out_count = np.zeros(IPV, np.int32)
        self._out_occ = np.zeros(IPV, np.int32)
        self._pend_occ = np.zeros(IPV, np.int32)
        self._cred = np.full(IPV, in_cap, np.int32)
        self._link_rec = np.full(GPORT, -1, np.int32)
        self._link_opv = np.full(GPORT, -1, np.int32)
        arr_ring = cfg.link_latency + 2
        cred_ring = cfg.credit_latency + 2
        self._arr_ring = np.zeros((arr_ring, GPORT, 3), np.int32)
        self._arr_len = np.zeros(arr_ring, np.int32)
        self._cred_ring = np.zeros(
            (cred_ring, cfg.internal_speedup * GPORT), np.int32
        )
        self._cred_len = np.zeros(cred_ring, np.int32)
        self._link_flits = np.zeros(GPORT, np.int64)

        # Counter-based rng streams: switches first, then endpoints.
        mask = (1 << 64) - 1
        gamma = 0x9E3779B97F4A7C15
        self._sw_state = np.array(
            [(cfg.seed * gamma + s) & mask for s in range(self.switch_count)],
            np.uint64,
        )
        self._ep_state = np.array(
            [
                (cfg.seed * gamma + self.switch_count + e) & mask
                for e in range(self.endpoint_count)
            ],
            np.uint64,
        )

        pool = max(4096, 4 * self.endpoint_count)
        self._rec = np.zeros((pool, L.NREC), np.int64)
        self._free_stack = np.arange(pool - 1, -1, -1, dtype=np.int32)
        self._state[L.ST_FREE_TOP] = pool

        cap_rows = 1 << 16 if cfg.capture_packets else 0
        self._cap_buf = np.zeros((cap_rows, L.NCAP), np.int64)
        trace_rows = 1 << 16 if cfg.trace_links else 0
        self._trace_buf = np.zeros((trace_rows, 2), np.int64)

        self._compile_traffic(assignments)

    def _compile_traffic(self, assignments: list[TrafficAssignment]) -> None:
        cfg = self.config
        E = self.endpoint_count
        G = len(assignments)

        self._ep_mode = np.zeros(E, np.int8)
        self._ep_group = np.full(E, -1, np.int32)
        self._ep_rankslot = np.full(E, -1, np.int32)
        self._ep_ipv = np.zeros(E, np.int32)
        self._ep_static_dest = np.full(E, -1, np.int32)
        self._ep_pkts_left = np.zeros(E, np.int64)
        self._ep_cur_rec = np.full(E, -1, np.int32)
        self._ep_cur_slot = np.zeros(E, np.int32)
        self._ep_cur_sent = np.zeros(E, np.int32)
        self._ep_desc_ptr = np.zeros(E, np.int64)
        self._ep_desc_end = np.zeros(E, np.int64)
        self._ep_desc_left = np.full(E, -1, np.int64)

        self._grp_kind = np.zeros(G, np.int8)
        self._grp_pattern = np.zeros(G, np.int8)
        self._grp_vcbase = np.zeros(G, np.int32)
        self._grp_require = np.zeros(G, np.int8)
        self._grp_terminating = np.zeros(G, np.int8)
        self._grp_k = np.zeros(G, np.int32)
        self._grp_steps = np.zeros(G, np.int32)
        self._grp_remaining = np.zeros(G, np.int64)
        self._grp_ranks_done = np.zeros(G, np.int32)
        self._grp_done_cycle = np.full(G, -1, np.int64)
        self._grp_ep_start = np.zeros(G, np.int64)
        self._grp_rank_base = np.zeros(G, np.int32)
        self._grp_stepidx_base = np.zeros(G, np.int64)

        ep_list: list[int] = []
        desc_dst: list[int] = []
        desc_pkts: list[int] = []
        desc_step: list[int] = []
        rs_group: list[int] = []
        st_total: list[int] = []
        rv_need: list[int] = []
        # Descriptor rows, grouped per endpoint, filled after the group scan.
        per_ep_descs: dict[int, list[tuple[int, int, int]]] = {}

        seen_eps: set[int] = set()
        netports = self.network_ports_per_switch
        for g, a in enumerate(assignments):
            if a.partition.shape != self.shape:
                raise ValueError("assignment partition shape != network shape")
            if a.vc_set >= cfg.partition_count_for_vcs:
                raise ValueError(
                    f"vc_set {a.vc_set} outside the configured "
                    f"{cfg.partition_count_for_vcs} set(s)"
                )
            eids = a.partition.endpoint_ids()
            overlap = seen_eps.intersection(eids)
            if overlap:
                raise ValueError(
                    f"endpoint {min(overlap)} appears in two assignments"
                )
            seen_eps.update(eids)
            k = len(eids)
            self._grp_vcbase[g] = a.vc_set * cfg.vcs_per_partition
            self._grp_k[g] = k
            self._grp_ep_start[g] = len(ep_list)
            ep_list.extend(eids)
            self._grp_terminating[g] = 1 if a.terminating else 0
            for rank, eid in enumerate(eids):
                sw, off = divmod(eid, self.shape.concentration)
                ipv0 = (
                    (sw * self.ports_per_switch + netports + off)
                    * self.vcs_per_port
                    + self._grp_vcbase[g]
                )
                self._ep_group[eid] = g
                self._ep_ipv[eid] = ipv0
            if a.kernel is not None:
                ker = a.kernel
                steps = ker.num_steps
                self._grp_kind[g] = L.GK_SCRIPTED
                self._grp_require[g] = 1 if ker.require_receive else 0
                self._grp_steps[g] = steps
                self._grp_rank_base[g] = len(rs_group)
                self._grp_stepidx_base[g] = len(st_total)
                for rank, eid in enumerate(eids):
                    self._ep_mode[eid] = L.EP_SCRIPTED
                    self._ep_rankslot[eid] = len(rs_group)
                    rs_group.append(g)
                    rows = per_ep_descs.setdefault(eid, [])
                    for s_idx, step in enumerate(ker.steps[rank]):
                        sends_total = 0
                        for peer, pkts in step.sends:
                            if pkts <= 0:
                                continue
                            rows.append((eids[peer], pkts, s_idx))
                            sends_total += pkts
                        st_total.append(sends_total)
                        rv_need.append(
                            sum(pkts for _, pkts in step.recvs)
                        )
            else:
                src = a.static
                pat = src.pattern
                finite = pat.demand_packets is not None
                self._grp_kind[g] = (
                    L.GK_STATIC_FIN if finite else L.GK_STATIC_INF
                )
                uniform = pat.kind is StaticKind.UNIFORM
                self._grp_pattern[g] = (
                    L.PM_UNIFORM if uniform else L.PM_PERM
                )
                if finite:
                    self._grp_remaining[g] = k * pat.demand_packets
                for rank, eid in enumerate(eids):
                    self._ep_mode[eid] = L.EP_STATIC
                    if finite:
                        self._ep_pkts_left[eid] = pat.demand_packets
                    if not uniform:
                        self._ep_static_dest[eid] = eids[
                            src.dest_rank(rank)
                        ]

        # Flatten per-endpoint descriptor rows.
        for eid, rows in per_ep_descs.items():
            self._ep_desc_ptr[eid] = len(desc_dst)
            for dst, pkts, s_idx in rows:
                desc_dst.append(dst)
                desc_pkts.append(pkts)
                desc_step.append(s_idx)
            self._ep_desc_end[eid] = len(desc_dst)

        self._ep_list = np.array(ep_list or [0], np.int32)
        self._desc_dst = np.array(desc_dst or [0], np.int32)
        self._desc_pkts = np.array(desc_pkts or [0], np.int32)
        self._desc_step = np.array(desc_step or [0], np.int32)
        self._rs_group = np.array(rs_group or [0], np.int32)
        self._rank_cur_step = np.zeros(max(1, len(rs_group)), np.int32)
        self._st_total = np.array(st_total or [0], np.int64)
        self._st_deliv = np.zeros(max(1, len(st_total)), np.int64)
        self._rv_need = np.array(rv_need or [0], np.int64)
        self._rv_got = np.zeros(max(1, len(rv_need)), np.int64)

        self._state[L.ST_GROUPS_LEFT] = int(self._grp_terminating.sum())
        # Steps with no sends and no expected receives complete vacuously;
        # walk every rank forward once so such prefixes never stall gating.
        for rs in range(len(rs_group)):
            self._advance_rank_initial(rs)

    def _advance_rank_initial(self, rs: int) -> None:
        g = int(self._rs_group[rs])
        steps = int(self._grp_steps[g])
        base = int(self._grp_stepidx_base[g]) + (
            rs - int(self._grp_rank_base[g])
        ) * steps
        cur = 0
        while cur < steps:
            i = base + cur
            if self._st_total[i] > 0:
                break
            if self._grp_require[g] and self._rv_need[i] > 0:
                break
            cur += 1
        self._rank_cur_step[rs] = cur
        if cur == steps:
            self._grp_ranks_done[g] += 1
            if self._grp_ranks_done[g] == self._grp_k[g]:
                self._grp_done_cycle[g] = 0
                if self._grp_terminating[g]:
                    self._state[L.ST_GROUPS_LEFT] -= 1

    # -- execution ------------------------------------------------------

    def _kernel_args(self):
        return (
            self._cfg, self._state,
            self._link_dst_sw, self._link_dst_port,
            self._rec, self._free_stack,
            self._in_ring, self._in_arr, self._in_cross, self._in_head,
            self._in_count,
            self._head_state, self._head_gport, self._head_opv,
            self._head_slot,
            self._rt_list,
            self._req_list, self._req_len, self._req_pos, self._in_budget,
            self._out_ring, self._out_in, self._out_sent, self._out_head,
            self._out_count, self._out_occ, self._pend_occ,
            self._cred, self._link_rec, self._link_opv,
            self._arr_ring, self._arr_len, self._cred_ring, self._cred_len,
            self._sw_state, self._ep_state,
            self._ep_mode, self._ep_group, self._ep_rankslot, self._ep_ipv,
            self._ep_static_dest, self._ep_pkts_left,
            self._ep_cur_rec, self._ep_cur_slot, self._ep_cur_sent,
            self._ep_desc_ptr, self._ep_desc_end, self._ep_desc_left,
            self._desc_dst, self._desc_pkts, self._desc_step,
            self._grp_kind, self._grp_pattern, self._grp_vcbase,
            self._grp_require, self._grp_terminating,
            self._grp_k, self._grp_steps, self._grp_remaining,
            self._grp_ranks_done, self._grp_done_cycle,
            self._grp_ep_start, self._ep_list, self._grp_rank_base,
            self._grp_stepidx_base,
            self._rank_cur_step, self._rs_group,
            self._st_total, self._st_deliv, self._rv_need, self._rv_got,
            self._link_flits, self._cap_buf, self._trace_buf,
        )

    def _grow_pool(self) -> None:
        old = self._rec.shape[0]
        new = old * 2
        rec = np.zeros((new, L.NREC), np.int64)
        rec[:old] = self._rec
        stack = np.zeros(new, np.int32)
        top = int(self._state[L.ST_FREE_TOP])
        stack[:top] = self._free_stack[:top]
        stack[top:top + old] = np.arange(old, new, dtype=np.int32)
        self._rec = rec
        self._free_stack = stack
        self._state[L.ST_FREE_TOP] = top + old

    def _grow(self, name: str) -> None:
        buf = getattr(self, name)
        new = np.zeros((buf.shape[0] * 2, buf.shape[1]), buf.dtype)
        new[:buf.shape[0]] = buf
        setattr(self, name, new)

    def _run(self, budget: int, stop_on_done: bool) -> int:
        # The kernel pauses on cycle boundaries when a growable buffer is
        # nearly full; grow it and resume with the remaining budget.
        target = int(self._state[L.ST_T]) + budget
        while True:
            remaining = target - int(self._state[L.ST_T])
            if remaining <= 0:
                return int(self._state[L.ST_STATUS])
            status = L.run_cycles(
                remaining, stop_on_done, *self._kernel_args()
            )
            if status == L.S_NEED_POOL:
                self._grow_pool()
            elif status == L.S_NEED_CAPTURE:
                self._grow("_cap_buf")
            elif status == L.S_NEED_TRACE:
                self._grow("_trace_buf")
            else:
                return int(status)
            self._state[L.ST_STATUS] = L.S_RUN

    def step(self, cycles: int = 1) -> None:
        """Advance the clock; raises only on structural errors."""
        status = self._run(cycles, stop_on_done=False)
        if status == L.S_ERROR:
            raise SimulationError(self._error_text())
        if status == L.S_WATCHDOG:
            raise WatchdogError(self._watchdog_text(), self.metrics())

    def run_until_quiescent(
        self, assignments: list[TrafficAssignment] | None = None
    ) -> SimMetrics:
        """Run until every terminating assignment has delivered everything.

        Non-terminating (background) assignments keep injecting for the
        whole run and do not gate completion. With no terminating work the
        call returns immediately with a zero makespan.
        """
        if assignments is not None:
            self.load(assignments)
        if self._state[L.ST_GROUPS_LEFT] == 0:
            return self.metrics()
        budget = self.config.max_cycles - int(self._state[L.ST_T])
        status = self._run(budget, stop_on_done=True)
        if status == L.S_ERROR:
            raise SimulationError(self._error_text())
        if status == L.S_WATCHDOG:
            raise WatchdogError(self._watchdog_text(), self.metrics())
        if status != L.S_DONE:
            raise WatchdogError(
                f"exceeded max_cycles={self.config.max_cycles} before "
                "terminating traffic completed",
                self.metrics(),
            )
        return self.metrics()

    def _error_text(self) -> str:
        code = int(self._state[L.ST_ERR])
        info = int(self._state[L.ST_ERRINFO])
        names = {
            L.E_IN_OVERFLOW: "input buffer overflow",
            L.E_OUT_OVERFLOW: "output buffer overflow",
            L.E_CREDIT: "credit counter above buffer capacity",
            L.E_RING: "delay ring overflow",
            L.E_REQ_OVERFLOW: "request list overflow",
            L.E_BAD_ARRIVAL: "flit arrived at an empty VC",
        }
        return (
            f"{names.get(code, f'error {code}')} (detail {info}) at cycle "
            f"{int(self._state[L.ST_T])}"
        )

    def _watchdog_text(self) -> str:
        return (
            f"no terminating-traffic delivery in "
            f"{self.config.watchdog_window} cycles "
            f"(cycle {int(self._state[L.ST_T])}, last progress "
            f"{int(self._state[L.ST_LASTPROG])})"
        )

    # -- results --------------------------------------------------------

    @property
    def quiescent(self) -> bool:
        """True once every terminating assignment has fully delivered."""
        return int(self._state[L.ST_GROUPS_LEFT]) == 0

    def metrics(self) -> SimMetrics:
        st = self._state
        cycles = int(st[L.ST_T])
        delivered = int(st[L.ST_DEL_P])
        done = self._grp_done_cycle
        term = self._grp_terminating.astype(bool)
        makespan = int(done[term].max()) if term.any() and (
            done[term] >= 0
        ).all() else 0
        completion = {}
        for g, a in enumerate(self.assignments):
            name = a.name or f"group{g}"
            completion[name] = int(done[g])
        util = tuple(
            (self._link_flits / cycles).tolist() if cycles else
            np.zeros(self._gports).tolist()
        )
        return SimMetrics(
            makespan=makespan,
            delivered_packets=delivered,
            delivered_flits=int(st[L.ST_DEL_F]),
            mean_latency=(
                float(st[L.ST_LAT_SUM]) / delivered if delivered else 0.0
            ),
            cycles=cycles,
            injected_flits=int(st[L.ST_INJ_F]),
            status=_STATUS_NAMES.get(int(st[L.ST_STATUS]), "running"),
            hop_violations=int(st[L.ST_HOPV]),
            latency_violations=int(st[L.ST_LATV]),
            completion_cycles=completion,
            link_utilization=util,
        )

    def packets(self) -> list[Packet]:
        """Delivery records, in delivery order (needs capture_packets)."""
        if not self.config.capture_packets:
            raise ValueError("run with capture_packets=True to keep records")
        out = []
        rows = int(self._state[L.ST_CAP_LEN])
        for i in range(rows):
            row = self._cap_buf[i]
            dst = self.shape.endpoint_addr(int(row[L.CP_DST]))
            out.append(
                Packet(
                    id=i,
                    source=self.shape.endpoint_addr(int(row[L.CP_SRC])),
                    dest=dst,
                    size=int(row[L.CP_SIZE]),
                    partition=int(row[L.CP_GROUP]),
                    route_state=RouteState(
                        destination=dst.switch,
                        hops_taken=int(row[L.CP_HOPS]),
                        deroutes_used=int(row[L.CP_DEROUTES]),
                    ),
                    birth_cycle=int(row[L.CP_BIRTH]),
                    delivery_cycle=int(row[L.CP_DELIVERY]),
                )
            )
        return out

    def capture_rows(self) -> np.ndarray:
        """Raw delivery rows (columns are the _simloop.CP_* indices)."""
        if not self.config.capture_packets:
            raise ValueError("run with capture_packets=True to keep records")
        return self._cap_buf[: int(self._state[L.ST_CAP_LEN])].copy()

    def link_trace(self) -> list[tuple[int, int]]:
        """(cycle, global port) per flit sent (needs trace_links)."""
        if not self.config.trace_links:
            raise ValueError("run with trace_links=True to keep the trace")
        rows = int(self._state[L.ST_TRACE_LEN])
        return [tuple(map(int, r)) for r in self._trace_buf[:rows]]

    def audit(self) -> None:
        """Check flit conservation and buffer bounds; raises on failure."""
        in_cap = self.config.input_buffer
        out_cap = self.config.output_buffer
        if (self._in_count > in_cap).any() or (self._in_count < 0).any():
            raise SimulationError("input buffer occupancy out of range")
        if (self._out_count > out_cap).any() or (self._out_count < 0).any():
            raise SimulationError("output buffer occupancy out of range")
        if (self._cred < 0).any() or (self._cred > in_cap).any():
            raise SimulationError("credit counter out of range")
        inflight = 0
        for ipv in np.nonzero(self._in_count)[0]:
            h = int(self._in_head[ipv])
            for j in range(int(self._in_count[ipv])):
                slot = (h + j) % in_cap
                inflight += int(
                    self._in_arr[ipv, slot] - self._in_cross[ipv, slot]
                )
        occ_expected = np.zeros_like(self._out_occ)
        for opv in np.nonzero(self._out_count)[0]:
            h = int(self._out_head[opv])
            for j in range(int(self._out_count[opv])):
                slot = (h + j) % out_cap
                r = int(self._out_ring[opv, slot])
                inflight += int(
                    self._out_in[opv, slot] - self._out_sent[opv, slot]
                )
                occ_expected[opv] += int(
                    self._rec[r, L.RF_SIZE] - self._out_sent[opv, slot]
                )
        if not np.array_equal(occ_expected, self._out_occ):
            raise SimulationError("output occupancy counter drifted")
        pend_expected = np.zeros_like(self._pend_occ)
        for ipv in np.nonzero(self._head_state == 1)[0]:
            r = int(self._in_ring[ipv, int(self._in_head[ipv])])
            pend_expected[int(self._head_opv[ipv])] += int(
                self._rec[r, L.RF_SIZE]
            )
        if not np.array_equal(pend_expected, self._pend_occ):
            raise SimulationError("pending occupancy counter drifted")
        on_wire = int(self._arr_len.sum())
        total = (
            inflight
            + on_wire
            + int(self._state[L.ST_EJTOT])
            + int(self._state[L.ST_DEL_F])
        )
        injected = int(self._state[L.ST_INJ_F])
        if total != injected:
            raise SimulationError(
                f"flit conservation broken: injected {injected}, "
                f"accounted {total}"
            )


def build_network(config: SimConfig | None = None) -> Simulator:
    """Instantiate a simulator for the configured fabric."""
    return Simulator(config or SimConfig())
