"""Experiment harness: scaling and interference studies over allocation kinds.

Two frameworks share one configuration type. Scaling replicates an
application across a growing number of partitions of the same kind and
measures the makespan of the whole batch. Interference runs a single
target application twice, once alone and once next to a full-rate
background pattern occupying every remaining endpoint, and charges the
target for the difference.

Results come back as flat RunRecords, one per (kind, replica count,
seed) cell, which report_normalized aggregates into baseline-relative
scores. Cells are independent, so both frameworks can fan out across
worker processes; aggregation is always single-threaded.
"""

from __future__ import annotations

import json
import math
import statistics
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

from .allocation import RANDOM_KINDS, AllocationKind, Partition, build_partition
from .routing import RoutingKind, RoutingPolicy
from .simcore import SimConfig, build_network
from .topology import NetworkShape
from .workloads import (
    DEFAULT_DEMAND_PACKETS,
    Neighborhood,
    StaticKind,
    StaticPattern,
    TrafficAssignment,
    gen_all2all,
    gen_allreduce,
    gen_random_involution,
    gen_static,
    gen_stencil,
)

# Hard ceiling on virtual channels per port; 8 partitions x 4 VCs fills it.
MAX_VCS_PER_PORT = 32

STATIC_APPS = {
    "uniform": StaticKind.UNIFORM,
    "random_permutation": StaticKind.RANDOM_PERMUTATION,
    "random_switch_permutation": StaticKind.RANDOM_SWITCH_PERMUTATION,
}
KERNEL_APPS = ("all2all", "allreduce", "stencil_vn", "stencil_moore", "involution")
APP_NAMES = tuple(STATIC_APPS) + KERNEL_APPS

# Pattern-seed slot for the background set; replica slots stay below 8.
_BG_SLOT = 101


class Framework(str, Enum):
    SCALING = "scaling"
    INTERFERENCE = "interference"


@dataclass(frozen=True)
class AppParams:
    """Workload sizes, all in packets; demand None = never terminate."""

    demand_packets: int | None = DEFAULT_DEMAND_PACKETS
    chunk_packets: int = 1
    allreduce_packets: int = 8
    stencil_packets: int = 1
    stencil_rounds: int = 4
    involution_packets: int = 1

    def __post_init__(self) -> None:
        for name in (
            "chunk_packets",
            "allreduce_packets",
            "stencil_packets",
            "stencil_rounds",
            "involution_packets",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class VcPlan:
    """vc_set index per partition plus the set count handed to SimConfig."""

    sets: tuple[int, ...]
    partition_count_for_vcs: int


def assign_vcs(
    fabric_partitioning: bool, partition_count: int, vcs_per_partition: int = 4
) -> VcPlan:
    """Map partitions to virtual-channel sets.

    With partitioning off everyone shares set 0 and the port carries one
    set of VCs. With it on, partition i owns set i, multiplying the VCs
    per port; the plan is rejected when that exceeds MAX_VCS_PER_PORT.
    """
    if partition_count < 1:
        raise ValueError("need at least one partition")
    if not fabric_partitioning:
        return VcPlan(sets=(0,) * partition_count, partition_count_for_vcs=1)
    total = vcs_per_partition * partition_count
    if total > MAX_VCS_PER_PORT:
        raise ValueError(
            f"VC budget exceeded: {partition_count} partitions x "
            f"{vcs_per_partition} VCs = {total} > {MAX_VCS_PER_PORT} per port"
        )
    return VcPlan(
        sets=tuple(range(partition_count)), partition_count_for_vcs=partition_count
    )


def _is_pow2(k: int) -> bool:
    return k > 0 and k & (k - 1) == 0


def _check_app_ranks(app: str, ranks: int) -> None:
    if app == "allreduce" and not _is_pow2(ranks):
        raise ValueError(f"allreduce needs a power-of-two rank count, got {ranks}")
    if app in ("stencil_vn", "stencil_moore") and math.isqrt(ranks) ** 2 != ranks:
        raise ValueError(f"stencil needs a square rank count, got {ranks}")
    if app == "involution" and ranks % 2:
        raise ValueError(f"involution needs an even rank count, got {ranks}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one experiment needs; a (config, seed) pair replays a cell.

    replicas lists the batch sizes the scaling framework sweeps; the
    interference framework always runs one target instance and ignores
    it. background names the static pattern the interference framework
    runs on every endpoint outside the target partition.
    """

    framework: Framework = Framework.SCALING
    kinds: tuple[AllocationKind, ...] = (AllocationKind.DIAGONAL,)
    app: str = "random_permutation"
    ranks: int = 64
    replicas: tuple[int, ...] = (1,)
    fabric_partitioning: bool = False
    background: str = "random_permutation"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    sim: SimConfig = field(default_factory=SimConfig)
    params: AppParams = field(default_factory=AppParams)

    def __post_init__(self) -> None:
        object.__setattr__(self, "framework", Framework(self.framework))
        object.__setattr__(
            self, "kinds", tuple(AllocationKind(k) for k in self.kinds)
        )
        object.__setattr__(self, "replicas", tuple(int(r) for r in self.replicas))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.kinds:
            raise ValueError("need at least one allocation kind")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.app not in APP_NAMES:
            raise ValueError(f"unknown app {self.app!r}; choose from {APP_NAMES}")
        if self.background not in STATIC_APPS:
            raise ValueError(
                f"unknown background {self.background!r}; choose from "
                f"{tuple(STATIC_APPS)}"
            )
        _check_app_ranks(self.app, self.ranks)
        n = self.sim.shape.n
        block = n * n
        if self.ranks <= 0 or self.ranks % block:
            raise ValueError(
                f"ranks {self.ranks} is not a positive multiple of {block}"
            )
        if not self.replicas or min(self.replicas) < 1:
            raise ValueError("replica counts must be >= 1")
        blocks_per_replica = self.ranks // block
        if max(self.replicas) * blocks_per_replica > n:
            raise ValueError(
                f"{max(self.replicas)} replicas of {self.ranks} ranks exceed "
                f"the fabric's {n * block} endpoints"
            )
        if (
            self.framework is Framework.SCALING
            and self.app in STATIC_APPS
            and self.params.demand_packets is None
        ):
            raise ValueError("scaling needs terminating traffic; set demand_packets")


@dataclass(frozen=True)
class RunRecord:
    """One measured cell: config echo plus the numbers that came out.

    makespan_cycles covers the terminating traffic of the whole run. For
    interference cells it is the interfered target completion time,
    extra_cycles the slowdown versus the isolated run, isolated_cycles
    that baseline; scaling cells leave both at zero. completion_cycles
    maps assignment names to per-instance completion (-1 = never).
    """

    framework: Framework
    kind: AllocationKind
    app: str
    ranks: int
    replicas: int
    seed: int
    fabric_partitioning: bool
    makespan_cycles: int
    extra_cycles: int = 0
    isolated_cycles: int = 0
    completion_cycles: dict[str, int] = field(default_factory=dict)
    mean_latency: float = 0.0
    delivered_packets: int = 0

    def to_dict(self) -> dict:
        d = {
            "framework": self.framework.value,
            "kind": self.kind.value,
            "app": self.app,
            "ranks": self.ranks,
            "replicas": self.replicas,
            "seed": self.seed,
            "fabric_partitioning": self.fabric_partitioning,
            "makespan_cycles": self.makespan_cycles,
            "extra_cycles": self.extra_cycles,
            "isolated_cycles": self.isolated_cycles,
            "completion_cycles": dict(self.completion_cycles),
            "mean_latency": self.mean_latency,
            "delivered_packets": self.delivered_packets,
        }
        return d


def _app_seed(seed: int, slot: int) -> int:
    # One pattern/kernel seed per (scenario seed, replica slot).
    return seed * 8191 + slot


def build_app_assignment(
    app: str,
    partition: Partition,
    seed: int,
    params: AppParams,
    vc_set: int = 0,
    name: str = "",
) -> TrafficAssignment:
    """Instantiate one application on one partition."""
    if app in STATIC_APPS:
        pattern = StaticPattern(
            STATIC_APPS[app], seed=seed, demand_packets=params.demand_packets
        )
        return TrafficAssignment(
            partition, static=gen_static(pattern, partition), vc_set=vc_set, name=name
        )
    k = partition.size
    if app == "all2all":
        kernel = gen_all2all(k, params.chunk_packets)
    elif app == "allreduce":
        kernel = gen_allreduce(k, params.allreduce_packets)
    elif app == "stencil_vn":
        kernel = gen_stencil(
            k, Neighborhood.VON_NEUMANN, params.stencil_rounds, params.stencil_packets
        )
    elif app == "stencil_moore":
        kernel = gen_stencil(
            k, Neighborhood.MOORE, params.stencil_rounds, params.stencil_packets
        )
    elif app == "involution":
        kernel = gen_random_involution(k, params.involution_packets, rng=seed)
    else:
        raise ValueError(f"unknown app {app!r}")
    return TrafficAssignment(partition, kernel=kernel, vc_set=vc_set, name=name)


def complement_partition(partition: Partition) -> Partition:
    """Every endpoint the partition does not own, in ascending id order.

    Backs the interference framework's background set. Keeps the source
    partition's kind and seed purely as provenance; p = -1 marks it as
    not a block allocation.
    """
    shape = partition.shape
    taken = set(partition.endpoint_ids())
    placement = tuple(
        shape.endpoint_addr(e)
        for e in range(shape.endpoint_count)
        if e not in taken
    )
    if not placement:
        raise ValueError("partition covers the whole fabric; no background left")
    return Partition(
        kind=partition.kind,
        p=-1,
        shape=shape,
        seed=partition.seed,
        placement=placement,
    )


def _partition_seed(kind: AllocationKind, seed: int) -> int | None:
    # All replicas of a random kind must share one permutation seed so
    # their blocks stay disjoint.
    return seed if kind in RANDOM_KINDS else None


def _run_scaling_cell(
    config: ScenarioConfig, kind: AllocationKind, count: int, seed: int
) -> RunRecord:
    shape = config.sim.shape
    blocks = config.ranks // (shape.n * shape.n)
    plan = assign_vcs(config.fabric_partitioning, count, config.sim.vcs_per_partition)
    assignments = []
    for i in range(count):
        part = build_partition(
            kind, i * blocks, shape, size=config.ranks, seed=_partition_seed(kind, seed)
        )
        assignments.append(
            build_app_assignment(
                config.app,
                part,
                _app_seed(seed, i),
                config.params,
                vc_set=plan.sets[i],
                name=f"r{i}",
            )
        )
    simcfg = replace(
        config.sim, seed=seed, partition_count_for_vcs=plan.partition_count_for_vcs
    )
    metrics = build_network(simcfg).run_until_quiescent(assignments)
    return RunRecord(
        framework=config.framework,
        kind=kind,
        app=config.app,
        ranks=config.ranks,
        replicas=count,
        seed=seed,
        fabric_partitioning=config.fabric_partitioning,
        makespan_cycles=metrics.makespan,
        completion_cycles=dict(metrics.completion_cycles),
        mean_latency=metrics.mean_latency,
        delivered_packets=metrics.delivered_packets,
    )


def _run_interference_cell(
    config: ScenarioConfig, kind: AllocationKind, seed: int
) -> RunRecord:
    shape = config.sim.shape
    target = build_partition(
        kind, 0, shape, size=config.ranks, seed=_partition_seed(kind, seed)
    )
    background = complement_partition(target)
    # The isolated baseline runs under the identical fabric configuration
    # (same VC sets), so the background's presence is the only variable.
    plan = assign_vcs(config.fabric_partitioning, 2, config.sim.vcs_per_partition)
    simcfg = replace(
        config.sim, seed=seed, partition_count_for_vcs=plan.partition_count_for_vcs
    )
    target_app = build_app_assignment(
        config.app,
        target,
        _app_seed(seed, 0),
        config.params,
        vc_set=plan.sets[0],
        name="target",
    )
    isolated = build_network(simcfg).run_until_quiescent([target_app])
    bg_pattern = StaticPattern(
        STATIC_APPS[config.background],
        seed=_app_seed(seed, _BG_SLOT),
        demand_packets=None,
    )
    bg_app = TrafficAssignment(
        background,
        static=gen_static(bg_pattern, background),
        vc_set=plan.sets[1],
        name="background",
    )
    interfered = build_network(simcfg).run_until_quiescent([target_app, bg_app])
    return RunRecord(
        framework=config.framework,
        kind=kind,
        app=config.app,
        ranks=config.ranks,
        replicas=1,
        seed=seed,
        fabric_partitioning=config.fabric_partitioning,
        makespan_cycles=interfered.makespan,
        extra_cycles=interfered.makespan - isolated.makespan,
        isolated_cycles=isolated.makespan,
        completion_cycles=dict(interfered.completion_cycles),
        mean_latency=interfered.mean_latency,
        delivered_packets=interfered.delivered_packets,
    )


def _scaling_star(args) -> RunRecord:
    return _run_scaling_cell(*args)


def _interference_star(args) -> RunRecord:
    return _run_interference_cell(*args)


def run_scaling(config: ScenarioConfig, jobs: int = 1) -> list[RunRecord]:
    """Run every (kind, replica count, seed) cell of a scaling scenario.

    Cells are mutually independent, so jobs > 1 spreads them over worker
    processes; record order and content match the sequential run.
    """
    if config.framework is not Framework.SCALING:
        raise ValueError("config.framework is not scaling")
    cells = [
        (config, kind, count, seed)
        for kind in config.kinds
        for count in config.replicas
        for seed in config.seeds
    ]
    if jobs <= 1 or len(cells) <= 1:
        return [_run_scaling_cell(*cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_scaling_star, cells))


def run_interference(config: ScenarioConfig, jobs: int = 1) -> list[RunRecord]:
    """Run every (kind, seed) cell of an interference scenario."""
    if config.framework is not Framework.INTERFERENCE:
        raise ValueError("config.framework is not interference")
    cells = [
        (config, kind, seed) for kind in config.kinds for seed in config.seeds
    ]
    if jobs <= 1 or len(cells) <= 1:
        return [_run_interference_cell(*cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_interference_star, cells))


def run_scenario(config: ScenarioConfig, jobs: int = 1) -> list[RunRecord]:
    """Dispatch on config.framework."""
    if config.framework is Framework.SCALING:
        return run_scaling(config, jobs=jobs)
    return run_interference(config, jobs=jobs)


@dataclass(frozen=True)
class ReportRow:
    """One normalized score; app == "all" rows average a kind's apps."""

    kind: AllocationKind
    app: str
    replicas: int
    score: float
    score_stddev: float
    mean_makespan: float
    seeds: int


def report_normalized(
    records: list[RunRecord],
    baseline: AllocationKind = AllocationKind.DIAGONAL,
    geometric: bool = False,
) -> list[ReportRow]:
    """Normalize mean makespans against a baseline kind; higher is better.

    Per (kind, app, replicas): score = baseline's mean makespan over
    seeds / this kind's. The stddev column spreads the per-seed ratios
    around that score. Each kind also gets an app == "all" row per
    replica count, averaging its per-app scores arithmetically or, with
    the flag, geometrically. The baseline scores 1.0 by construction.
    """
    by_cell: dict[tuple[AllocationKind, str, int], list[int]] = defaultdict(list)
    kinds: list[AllocationKind] = []
    for rec in records:
        by_cell[(rec.kind, rec.app, rec.replicas)].append(rec.makespan_cycles)
        if rec.kind not in kinds:
            kinds.append(rec.kind)
    base_mean: dict[tuple[str, int], float] = {}
    for (kind, app, reps), values in by_cell.items():
        if kind is baseline:
            base_mean[(app, reps)] = statistics.fmean(values)
    if not base_mean:
        raise ValueError(f"no records for baseline kind {baseline.value!r}")
    rows: list[ReportRow] = []
    for kind in kinds:
        per_reps: dict[int, list[float]] = defaultdict(list)
        for (ckind, app, reps), values in by_cell.items():
            if ckind is not kind:
                continue
            if (app, reps) not in base_mean:
                raise ValueError(
                    f"baseline {baseline.value!r} has no records for "
                    f"app={app!r} replicas={reps}"
                )
            mean_mk = statistics.fmean(values)
            if mean_mk <= 0:
                raise ValueError(f"non-positive makespan for {ckind.value}/{app}")
            base = base_mean[(app, reps)]
            score = base / mean_mk
            ratios = [base / v for v in values]
            rows.append(
                ReportRow(
                    kind=kind,
                    app=app,
                    replicas=reps,
                    score=score,
                    score_stddev=(
                        statistics.stdev(ratios) if len(ratios) > 1 else 0.0
                    ),
                    mean_makespan=mean_mk,
                    seeds=len(values),
                )
            )
            per_reps[reps].append(score)
        for reps, scores in per_reps.items():
            if geometric:
                agg = math.exp(statistics.fmean(math.log(s) for s in scores))
            else:
                agg = statistics.fmean(scores)
            rows.append(
                ReportRow(
                    kind=kind,
                    app="all",
                    replicas=reps,
                    score=agg,
                    score_stddev=(
                        statistics.stdev(scores) if len(scores) > 1 else 0.0
                    ),
                    mean_makespan=statistics.fmean(
                        r.mean_makespan
                        for r in rows
                        if r.kind is kind and r.replicas == reps and r.app != "all"
                    ),
                    seeds=max(
                        r.seeds
                        for r in rows
                        if r.kind is kind and r.replicas == reps and r.app != "all"
                    ),
                )
            )
    return rows


def parse_kinds_spec(spec: str | list[str]) -> tuple[AllocationKind, ...]:
    """"all", a comma-joined string, or a list of kind names."""
    if isinstance(spec, str):
        if spec == "all":
            return tuple(AllocationKind)
        spec = [s for s in spec.split(",") if s]
    return tuple(AllocationKind(s) for s in spec)


def parse_replicas_spec(spec: str | int | list[int]) -> tuple[int, ...]:
    """An int, a list, "4", "1,2,4", or an inclusive range "1..8"."""
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, str):
        if ".." in spec:
            lo, hi = spec.split("..", 1)
            return tuple(range(int(lo), int(hi) + 1))
        return tuple(int(s) for s in spec.split(",") if s)
    return tuple(int(r) for r in spec)


def parse_seeds_spec(spec: int | list[int]) -> tuple[int, ...]:
    """A count (seeds 0..count-1) or an explicit list."""
    if isinstance(spec, int):
        return tuple(range(spec))
    return tuple(int(s) for s in spec)


_ROUTING_ALIASES = {
    "min": RoutingKind.MIN_ADAPTIVE,
    "min_adaptive": RoutingKind.MIN_ADAPTIVE,
    "omni_war": RoutingKind.OMNI_WAR,
}


def sim_config_from_dict(data: dict) -> SimConfig:
    """Build a SimConfig from a flat JSON-friendly dict of overrides."""
    base = SimConfig()
    shape = NetworkShape(
        q=int(data.get("q", base.shape.q)), n=int(data.get("n", base.shape.n))
    )
    routing = RoutingPolicy(
        kind=_ROUTING_ALIASES[str(data.get("routing", "omni_war")).lower()],
        m=data.get("m", None),
        penalty_phits=int(data.get("penalty_phits", base.routing.penalty_phits)),
    )
    kwargs = {}
    for name in (
        "packet_size",
        "input_buffer",
        "output_buffer",
        "vcs_per_partition",
        "internal_speedup",
        "link_latency",
        "credit_latency",
        "seed",
        "watchdog_window",
        "max_cycles",
    ):
        if name in data:
            kwargs[name] = int(data[name])
    return replace(base, shape=shape, routing=routing, **kwargs)


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from parsed JSON, applying defaults."""
    base = ScenarioConfig()
    params_data = dict(data.get("params", {}))
    if "demand_packets" in params_data and params_data["demand_packets"] is not None:
        params_data["demand_packets"] = int(params_data["demand_packets"])
    return ScenarioConfig(
        framework=Framework(data.get("framework", base.framework.value)),
        kinds=parse_kinds_spec(data.get("kinds", data.get("kind", ["diagonal"]))),
        app=str(data.get("app", base.app)),
        ranks=int(data.get("ranks", base.ranks)),
        replicas=parse_replicas_spec(data.get("replicas", list(base.replicas))),
        fabric_partitioning=bool(data.get("fabric_partitioning", False)),
        background=str(data.get("background", base.background)),
        seeds=parse_seeds_spec(data.get("seeds", list(base.seeds))),
        sim=sim_config_from_dict(dict(data.get("sim", {}))),
        params=AppParams(**params_data),
    )


def scenario_from_json(text: str) -> ScenarioConfig:
    return scenario_from_dict(json.loads(text))


def scenario_to_dict(config: ScenarioConfig) -> dict:
    """Echo a ScenarioConfig as the dict scenario_from_dict accepts."""
    sim = config.sim
    return {
        "framework": config.framework.value,
        "kinds": [k.value for k in config.kinds],
        "app": config.app,
        "ranks": config.ranks,
        "replicas": list(config.replicas),
        "fabric_partitioning": config.fabric_partitioning,
        "background": config.background,
        "seeds": list(config.seeds),
        "sim": {
            "q": sim.shape.q,
            "n": sim.shape.n,
            "routing": sim.routing.kind.value,
            "m": sim.routing.m,
            "penalty_phits": sim.routing.penalty_phits,
            "packet_size": sim.packet_size,
            "input_buffer": sim.input_buffer,
            "output_buffer": sim.output_buffer,
            "vcs_per_partition": sim.vcs_per_partition,
            "internal_speedup": sim.internal_speedup,
            "link_latency": sim.link_latency,
            "credit_latency": sim.credit_latency,
            "seed": sim.seed,
            "watchdog_window": sim.watchdog_window,
            "max_cycles": sim.max_cycles,
        },
        "params": {
            "demand_packets": config.params.demand_packets,
            "chunk_packets": config.params.chunk_packets,
            "allreduce_packets": config.params.allreduce_packets,
            "stencil_packets": config.params.stencil_packets,
            "stencil_rounds": config.params.stencil_rounds,
            "involution_packets": config.params.involution_packets,
        },
    }
