"""Output-port candidate generation and selection for HyperX routing.

MIN adaptive routing offers the minimal hop in every unaligned dimension
of the packet. Omni-WAR offers those same hops plus, while a global budget
of m deroutes lasts, every non-minimal hop within the unaligned dimensions,
so a packet takes at most q + m switch hops. A hop is chosen by least
queue occupancy for the candidate link (however the caller measures it),
with a fixed phit penalty added to deroutes so the minimal hop wins unless
it is clearly congested; ties break uniformly at random from a per-switch
seeded generator.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .topology import NetworkShape, SwitchCoord

MASK64 = (1 << 64) - 1
DEFAULT_PENALTY_PHITS = 64


class RoutingKind(str, Enum):
    MIN_ADAPTIVE = "min_adaptive"
    OMNI_WAR = "omni_war"


@dataclass(frozen=True)
class RoutingPolicy:
    """Routing configuration: algorithm, deroute budget, deroute penalty.

    m is the global non-minimal hop budget; None resolves to q at use time,
    which is always enough for a deroute in every dimension. penalty_phits
    is the occupancy handicap applied to non-minimal candidates.
    """

    kind: RoutingKind = RoutingKind.OMNI_WAR
    m: int | None = None
    penalty_phits: int = DEFAULT_PENALTY_PHITS

    def __post_init__(self) -> None:
        if self.m is not None and self.m < 0:
            raise ValueError(f"deroute budget must be >= 0, got {self.m}")
        if self.penalty_phits < 0:
            raise ValueError(f"penalty must be >= 0, got {self.penalty_phits}")

    def budget(self, q: int) -> int:
        """Deroutes this policy allows on a q-dimensional network."""
        if self.kind is RoutingKind.MIN_ADAPTIVE:
            return 0
        return self.m if self.m is not None else q

    def hop_cap(self, q: int) -> int:
        """Most switch hops any packet can take under this policy."""
        return q + self.budget(q)


@dataclass(frozen=True)
class RouteState:
    """Per-packet routing progress; hops_taken never exceeds q + m."""

    destination: SwitchCoord
    hops_taken: int = 0
    deroutes_used: int = 0

    def __post_init__(self) -> None:
        if self.hops_taken < 0 or self.deroutes_used < 0:
            raise ValueError("hop counts must be >= 0")
        if self.deroutes_used > self.hops_taken:
            raise ValueError("cannot have more deroutes than hops")


@dataclass(frozen=True)
class PortCandidate:
    """One admissible output direction: move to `target` in `dimension`.

    effective_occupancy is filled in by selection (queue occupancy, plus
    the deroute penalty when non-minimal).
    """

    dimension: int
    target: int
    is_minimal: bool
    effective_occupancy: int | None = None


def unaligned_dimensions(current: SwitchCoord, dest: SwitchCoord) -> list[int]:
    """Dimensions in which the two addresses differ, ascending."""
    if len(current) != len(dest):
        raise ValueError("coordinate dimensionality mismatch")
    return [d for d, (a, b) in enumerate(zip(current, dest)) if a != b]


def candidates(
    state: RouteState,
    current: SwitchCoord,
    policy: RoutingPolicy,
    shape: NetworkShape,
) -> list[PortCandidate]:
    """Admissible next hops for a packet at `current`.

    Minimal candidates come first (ascending dimension), then deroutes
    (ascending dimension, ascending target), so the MIN adaptive list is
    always a prefix of the Omni-WAR list. Once the deroute budget is spent
    the remaining hops are forced minimal.
    """
    shape.check_coord(current)
    shape.check_coord(state.destination)
    dims = unaligned_dimensions(current, state.destination)
    if not dims:
        raise ValueError("packet is at its destination switch")
    cands = [PortCandidate(d, state.destination[d], True) for d in dims]
    if policy.kind is RoutingKind.OMNI_WAR and state.deroutes_used < policy.budget(
        shape.q
    ):
        for d in dims:
            for t in range(shape.n):
                if t != current[d] and t != state.destination[d]:
                    cands.append(PortCandidate(d, t, False))
    return cands


def select(
    policy: RoutingPolicy,
    state: RouteState,
    cands: list[PortCandidate],
    occupancy: Callable[[PortCandidate], int],
    rng: "SwitchRng",
) -> tuple[PortCandidate, RouteState]:
    """Pick the least-occupied candidate, penalizing deroutes.

    Ties are broken uniformly with the caller's rng; the rng is consulted
    only when there actually is a tie, so traces with unique minima do not
    consume random numbers. Returns the chosen candidate (with its
    effective occupancy filled in) and the advanced route state.
    """
    if not cands:
        raise ValueError("empty candidate list")
    effs = [
        occupancy(c) + (0 if c.is_minimal else policy.penalty_phits) for c in cands
    ]
    best = min(effs)
    tied = [i for i, e in enumerate(effs) if e == best]
    idx = tied[0] if len(tied) == 1 else tied[rng.randrange(len(tied))]
    chosen = dataclasses.replace(cands[idx], effective_occupancy=effs[idx])
    new_state = RouteState(
        destination=state.destination,
        hops_taken=state.hops_taken + 1,
        deroutes_used=state.deroutes_used + (0 if chosen.is_minimal else 1),
    )
    return chosen, new_state


def vc_for_hops(hops_taken: int, vcs_per_partition: int = 4) -> int:
    """Ascending-VC-by-hop index within a partition's VC set.

    ``hops_taken`` counts completed hops, so a packet's next hop rides this
    VC: hop 1 on VC 0, hop 2 on VC 1, and so on. Climbing VCs with hop count
    breaks buffer-dependency cycles, and a hop budget of ``q + m`` fits
    exactly in ``q + m`` VCs; the index saturates at the top VC only for
    configurations that allow more hops than VCs.
    """
    return min(hops_taken, vcs_per_partition - 1)


class SwitchRng:
    """Tiny counter-based generator (splitmix64) for reproducible choices.

    Each switch owns one instance seeded from (global seed, switch id), so
    selections are independent of event ordering elsewhere in the network
    and identical across runs and implementations of the same stream.
    """

    __slots__ = ("state",)

    GAMMA = 0x9E3779B97F4A7C15

    def __init__(self, state: int) -> None:
        self.state = state & MASK64

    @classmethod
    def for_switch(cls, seed: int, switch_id: int) -> "SwitchRng":
        return cls(seed * cls.GAMMA + switch_id)

    def next_u64(self) -> int:
        self.state = (self.state + self.GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def randrange(self, k: int) -> int:
        if k <= 0:
            raise ValueError(f"randrange needs k >= 1, got {k}")
        return (self.next_u64() >> 33) % k
