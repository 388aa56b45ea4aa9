"""Independent brute-force reference computations used by the tests.

Everything in here is deliberately written the slow, obvious way (path
enumeration, exhaustive pair scans) so the optimized library code can be
checked against it.
"""

from __future__ import annotations

from itertools import combinations

from hxalloc.topology import (
    NetworkShape,
    SwitchCoord,
    hamming_distance,
    minimal_paths,
)

Link = tuple[SwitchCoord, SwitchCoord]


def brute_avg_distance(shape: NetworkShape) -> float:
    switches = list(shape.switches())
    total = sum(hamming_distance(a, b) for a in switches for b in switches)
    return total / len(switches) ** 2


def brute_link_set(shape: NetworkShape) -> set[Link]:
    switches = list(shape.switches())
    return {
        (a, b)
        for a, b in combinations(switches, 2)
        if hamming_distance(a, b) == 1
    }


def brute_endpoint_avg_distance(switches_of_endpoints: list[SwitchCoord]) -> float:
    pts = switches_of_endpoints
    total = sum(hamming_distance(a, b) for a in pts for b in pts)
    return total / len(pts) ** 2


def path_inside(path: list[SwitchCoord], members: set[SwitchCoord]) -> bool:
    return all(s in members for s in path)


def brute_convexity(switch_set: set[SwitchCoord], shape: NetworkShape) -> str:
    """Classification by enumerating every minimal path between members."""
    members = set(switch_set)
    all_in = True
    any_in = True
    for a in members:
        for b in members:
            if a == b:
                continue
            paths = minimal_paths(shape, a, b)
            inside = [path_inside(p, members) for p in paths]
            all_in &= all(inside)
            any_in &= any(inside)
    if all_in:
        return "convex"
    return "weakly_convex" if any_in else "non_convex"


def brute_hull_links(switch_set: set[SwitchCoord], shape: NetworkShape) -> set[Link]:
    """Links on some minimal path between members, by path enumeration."""
    members = set(switch_set)
    links: set[Link] = set()
    for a in members:
        for b in members:
            if a == b:
                continue
            for path in minimal_paths(shape, a, b):
                for u, v in zip(path, path[1:]):
                    links.add((u, v) if u <= v else (v, u))
    return links
