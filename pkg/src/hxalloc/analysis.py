"""Topological properties of partitions.

Computes the quantities used to compare allocation kinds: average and
maximum switch distance between endpoints, convexity of the switch set,
switch locality, the convex hull link set, and partition bandwidth (an
upper bound on sustainable phits/cycle/endpoint under uniform traffic).

Distance averages are taken over ordered endpoint pairs including
self-pairs, i.e. normalized by |P|^2. That convention is what produces the
closed forms 1 - 1/n for a single row and 2 - 2/n for a diagonal.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .allocation import (
    RANDOM_KINDS,
    AllocationKind,
    Partition,
    build_partition,
)
from .topology import EndpointAddr, NetworkShape, SwitchCoord, hamming_distance

Link = tuple[SwitchCoord, SwitchCoord]


class Convexity(str, Enum):
    CONVEX = "convex"
    WEAKLY_CONVEX = "weakly_convex"
    NON_CONVEX = "non_convex"


@dataclass(frozen=True)
class PartitionMetrics:
    avg_distance: float
    max_distance: int
    convexity: Convexity
    switch_local: bool
    hull_links: int
    pb: float


def _dimension_components(
    switches: list[SwitchCoord], q: int
) -> list[float]:
    """Per-dimension mean hop counts over ordered pairs incl. self-pairs.

    In dimension d a pair contributes one hop iff the coordinates differ,
    so the mean is 1 - sum((count_v / N)^2) over coordinate values v.
    """
    n_pts = len(switches)
    comps = []
    for d in range(q):
        counts = Counter(s[d] for s in switches)
        same = sum(c * c for c in counts.values())
        comps.append(1.0 - same / (n_pts * n_pts))
    return comps


def partition_distances(partition: Partition) -> tuple[float, int]:
    """(average, maximum) switch distance over ordered endpoint pairs."""
    if not partition.placement:
        raise ValueError("empty partition")
    switches = [e.switch for e in partition.placement]
    avg = sum(_dimension_components(switches, partition.shape.q))
    unique = sorted(set(switches))
    max_d = 0
    for i, a in enumerate(unique):
        for b in unique[i + 1 :]:
            d = hamming_distance(a, b)
            if d > max_d:
                max_d = d
        if max_d == partition.shape.q:
            break
    return (avg, max_d)


def edge_dilation(
    placement: dict[int, EndpointAddr] | tuple[EndpointAddr, ...],
    edge: tuple[int, int],
) -> int:
    """Switch distance between the images of two ranks under a placement."""
    ra, rb = edge
    try:
        a, b = placement[ra], placement[rb]
    except (KeyError, IndexError):
        raise KeyError(f"edge {edge} has an unmapped rank") from None
    return hamming_distance(a.switch, b.switch)


def classify_convexity(
    switch_set: frozenset[SwitchCoord] | set[SwitchCoord], shape: NetworkShape
) -> Convexity:
    """Classify a switch set by containment of minimal paths.

    Convex: every minimal path between members stays inside the set.
    Weakly convex: every member pair keeps at least one minimal path inside.
    For q=2 only distance-2 pairs matter and their two candidate midpoints
    are the opposite rectangle corners.
    """
    if not switch_set:
        raise ValueError("empty switch set")
    if shape.q != 2:
        raise NotImplementedError("convexity classification implemented for q=2")
    members = set(switch_set)
    all_inside = True
    any_inside = True
    for a in members:
        for b in members:
            if a >= b or a[0] == b[0] or a[1] == b[1]:
                continue
            m1 = (a[0], b[1]) in members
            m2 = (b[0], a[1]) in members
            all_inside &= m1 and m2
            any_inside &= m1 or m2
            if not any_inside:
                return Convexity.NON_CONVEX
    if all_inside:
        return Convexity.CONVEX
    return Convexity.WEAKLY_CONVEX if any_inside else Convexity.NON_CONVEX


def has_switch_locality(partition: Partition) -> bool:
    """True iff the partition owns every endpoint of every switch it touches."""
    touched = partition.switch_set()
    return len(partition.placement) == len(touched) * partition.shape.concentration


def _canonical(a: SwitchCoord, b: SwitchCoord) -> Link:
    return (a, b) if a <= b else (b, a)


def convex_hull_links(
    switch_set: frozenset[SwitchCoord] | set[SwitchCoord], shape: NetworkShape
) -> frozenset[Link]:
    """Every topology link lying on some minimal path between set members.

    For q=2: distance-1 pairs contribute their own link; distance-2 pairs
    contribute the four links of their two corner-turning paths.
    """
    if not switch_set:
        raise ValueError("empty switch set")
    if shape.q != 2:
        raise NotImplementedError("hull computation implemented for q=2")
    members = sorted(set(switch_set))
    links: set[Link] = set()
    for i, a in enumerate(members):
        for b in members[i + 1 :]:
            if a[0] == b[0] and a[1] == b[1]:
                continue
            if a[0] == b[0] or a[1] == b[1]:
                links.add(_canonical(a, b))
                continue
            m1 = (a[0], b[1])
            m2 = (b[0], a[1])
            links.add(_canonical(a, m1))
            links.add(_canonical(m1, b))
            links.add(_canonical(a, m2))
            links.add(_canonical(m2, b))
    return frozenset(links)


def partition_bandwidth(partition: Partition) -> float:
    """Bandwidth bound in phits/cycle/endpoint, per-dimension refinement.

    For each dimension d with traffic (D_d > 0), the hull links of that
    dimension bound the sustainable rate at PB_d = 2 * L_d / (|P| * D_d);
    the partition bandwidth is the minimum over dimensions. A partition
    confined to a single switch has no link traffic and its bandwidth is
    reported as the infinite sentinel.
    """
    if not partition.placement:
        raise ValueError("empty partition")
    switches = [e.switch for e in partition.placement]
    comps = _dimension_components(switches, partition.shape.q)
    hull = convex_hull_links(partition.switch_set(), partition.shape)
    n_pts = len(partition.placement)
    pb = math.inf
    for d, d_comp in enumerate(comps):
        if d_comp <= 0.0:
            continue
        l_d = sum(1 for a, b in hull if a[d] != b[d])
        pb = min(pb, 2.0 * l_d / (n_pts * d_comp))
    return pb


def partition_bandwidth_aggregate(partition: Partition) -> float:
    """Bandwidth bound from the aggregate form 2L / (|P| * D).

    Agrees with the per-dimension refinement when the partition loads its
    dimensions symmetrically (single row, diagonal, full spread).
    """
    if not partition.placement:
        raise ValueError("empty partition")
    avg, _ = partition_distances(partition)
    if avg <= 0.0:
        return math.inf
    hull = convex_hull_links(partition.switch_set(), partition.shape)
    return 2.0 * len(hull) / (len(partition.placement) * avg)


def partition_metrics(partition: Partition) -> PartitionMetrics:
    avg, max_d = partition_distances(partition)
    return PartitionMetrics(
        avg_distance=avg,
        max_distance=max_d,
        convexity=classify_convexity(partition.switch_set(), partition.shape),
        switch_local=has_switch_locality(partition),
        hull_links=len(convex_hull_links(partition.switch_set(), partition.shape)),
        pb=partition_bandwidth(partition),
    )


@dataclass(frozen=True)
class PropertiesRow:
    """One allocation kind's metrics, averaged over seeds when randomized."""

    kind: AllocationKind
    avg_distance: float
    max_distance: float
    convexity: Convexity
    switch_local: bool
    hull_links: float
    pb: float
    pb_stddev: float
    seeds_used: int


def table1_report(
    shape: NetworkShape,
    kinds: list[AllocationKind] | None = None,
    seeds: list[int] | None = None,
) -> list[PropertiesRow]:
    """Properties report: one row per kind, seed-averaged for random kinds.

    Convexity and locality of random kinds are reported only when every
    sampled seed agrees; disagreement raises, since a mixed label would be
    meaningless in a summary table.
    """
    if kinds is None:
        kinds = list(AllocationKind)
    if seeds is None:
        seeds = list(range(20))
    rows = []
    for kind in kinds:
        if kind in RANDOM_KINDS:
            metrics = [
                partition_metrics(build_partition(kind, 0, shape, seed=s))
                for s in seeds
            ]
        else:
            metrics = [partition_metrics(build_partition(kind, 0, shape))]
        convexities = {m.convexity for m in metrics}
        localities = {m.switch_local for m in metrics}
        if len(convexities) != 1 or len(localities) != 1:
            raise ValueError(f"{kind.value}: seeds disagree on categorical metrics")
        pbs = [m.pb for m in metrics]
        rows.append(
            PropertiesRow(
                kind=kind,
                avg_distance=statistics.fmean(m.avg_distance for m in metrics),
                max_distance=statistics.fmean(m.max_distance for m in metrics),
                convexity=next(iter(convexities)),
                switch_local=next(iter(localities)),
                hull_links=statistics.fmean(m.hull_links for m in metrics),
                pb=statistics.fmean(pbs),
                pb_stddev=statistics.stdev(pbs) if len(pbs) > 1 else 0.0,
                seeds_used=len(metrics),
            )
        )
    return rows
