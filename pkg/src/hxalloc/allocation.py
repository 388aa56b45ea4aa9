"""Allocation functions mapping logical ranks to physical endpoints.

Every allocation function maps a triple (p, r_y, r_x) of coordinates in
[0, n) to an endpoint (s_y, s_x, c), where p names one of the n partitions,
r = n * r_y + r_x is the logical rank inside the partition, (s_y, s_x) is
the switch and c the endpoint offset on that switch. Each function is a
bijection of [0, n)^3, so the n partitions of size n^2 are disjoint and
together cover the whole machine.

Partitions larger than n^2 endpoints are built as unions of consecutive
blocks: a partition of size m * n^2 starting at block p uses blocks
p .. p+m-1, with rank r living in block r // n^2 at local rank r % n^2.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum

from .topology import EndpointAddr, NetworkShape, SwitchCoord


class AllocationKind(str, Enum):
    ROW = "row"
    DIAGONAL = "diagonal"
    FULL_SPREAD = "full_spread"
    RECTANGULAR = "rectangular"
    L_SHAPE = "l_shape"
    RANDOM_ENDPOINT = "random_endpoint"
    RANDOM_SWITCH = "random_switch"


DETERMINISTIC_KINDS = (
    AllocationKind.ROW,
    AllocationKind.DIAGONAL,
    AllocationKind.FULL_SPREAD,
    AllocationKind.RECTANGULAR,
    AllocationKind.L_SHAPE,
)
RANDOM_KINDS = (AllocationKind.RANDOM_ENDPOINT, AllocationKind.RANDOM_SWITCH)

# Kinds whose partitions own every endpoint of every switch they touch.
SWITCH_LOCAL_KINDS = frozenset(
    {
        AllocationKind.ROW,
        AllocationKind.DIAGONAL,
        AllocationKind.RECTANGULAR,
        AllocationKind.L_SHAPE,
        AllocationKind.RANDOM_SWITCH,
    }
)


def _check_args(n: int, *args: int) -> None:
    for a in args:
        if not 0 <= a < n:
            raise ValueError(f"argument {a} out of range [0, {n})")


def alloc_row(p: int, r_y: int, r_x: int, n: int) -> tuple[int, int, int]:
    """Identity layout: partition p owns all endpoints of grid row p."""
    _check_args(n, p, r_y, r_x)
    return (p, r_y, r_x)


def alloc_diagonal(p: int, r_y: int, r_x: int, n: int) -> tuple[int, int, int]:
    """Partition p owns the n switches of the p-th wrapped diagonal."""
    _check_args(n, p, r_y, r_x)
    return (r_y, (r_y + p) % n, r_x)


def alloc_full_spread(p: int, r_y: int, r_x: int, n: int) -> tuple[int, int, int]:
    """Partition p owns endpoint offset p of every switch in the network."""
    _check_args(n, p, r_y, r_x)
    return (r_y, r_x, p)


def alloc_rectangular(p: int, r_y: int, r_x: int, n: int) -> tuple[int, int, int]:
    """Tile the switch grid with 2-row by n/2-column rectangular blocks.

    Block p sits at row offset 2 * (p // 2) and column offset (n/2) * (p % 2);
    rank coordinate r_y is split into row parity and column index inside the
    block. Requires even n so that the blocks tile exactly.
    """
    if n % 2:
        raise ValueError(f"rectangular tiling requires even n, got {n}")
    _check_args(n, p, r_y, r_x)
    return (r_y % 2 + 2 * (p // 2), r_y // 2 + (n // 2) * (p % 2), r_x)


def alloc_l_shape(p: int, r_y: int, r_x: int, n: int) -> tuple[int, int, int]:
    """Two orthogonal rays of n/2 switches meeting at anchor (p, p).

    The first n/2 values of r_y walk down column p starting at the anchor;
    the rest walk along row p starting one column past the anchor. Requires
    even n. Coordinates wrap modulo n.
    """
    if n % 2:
        raise ValueError(f"l-shape tiling requires even n, got {n}")
    _check_args(n, p, r_y, r_x)
    half = n // 2
    if r_y < half:
        return ((p + r_y) % n, p, r_x)
    return (p, (p + r_y - half + 1) % n, r_x)


@dataclass(frozen=True)
class PermutationPair:
    """Seeded random bijections used by the randomized allocation kinds.

    pi permutes the n^3 endpoint triples; sigma permutes the n^2 switch
    pairs. Both are stored as tuples over the linearized domains.
    """

    n: int
    seed: int
    pi: tuple[int, ...]
    sigma: tuple[int, ...]

    @classmethod
    def from_seed(cls, n: int, seed: int) -> "PermutationPair":
        rng = random.Random(seed)
        pi = list(range(n**3))
        rng.shuffle(pi)
        sigma = list(range(n**2))
        rng.shuffle(sigma)
        return cls(n=n, seed=seed, pi=tuple(pi), sigma=tuple(sigma))


def alloc_random_endpoint(
    p: int, r_y: int, r_x: int, pair: PermutationPair
) -> tuple[int, int, int]:
    """Scatter endpoints uniformly at random across the whole machine."""
    n = pair.n
    _check_args(n, p, r_y, r_x)
    t = pair.pi[(p * n + r_y) * n + r_x]
    return (t // (n * n), t // n % n, t % n)


def alloc_random_switch(
    p: int, r_y: int, r_x: int, pair: PermutationPair
) -> tuple[int, int, int]:
    """Place each group of n ranks on one uniformly random switch."""
    n = pair.n
    _check_args(n, p, r_y, r_x)
    s = pair.sigma[p * n + r_y]
    return (s // n, s % n, r_x)


@dataclass(frozen=True)
class Partition:
    """An allocated set of endpoints with its rank placement map.

    placement[r] is the endpoint of logical rank r. The placement is
    injective, and for switch-local kinds the endpoint set is exactly the
    full endpoint set of the covered switches.
    """

    kind: AllocationKind
    p: int
    shape: NetworkShape
    seed: int | None
    placement: tuple[EndpointAddr, ...]

    @property
    def size(self) -> int:
        return len(self.placement)

    def endpoint(self, rank: int) -> EndpointAddr:
        return self.placement[rank]

    def endpoint_ids(self) -> list[int]:
        return [self.shape.endpoint_id(e) for e in self.placement]

    def switch_set(self) -> frozenset[SwitchCoord]:
        return frozenset(e.switch for e in self.placement)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "p": self.p,
                "n": self.shape.n,
                "q": self.shape.q,
                "concentration": self.shape.concentration,
                "seed": self.seed,
                "placement": [
                    {"switch": list(e.switch), "offset": e.offset}
                    for e in self.placement
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Partition":
        doc = json.loads(text)
        shape = NetworkShape(doc["q"], doc["n"], doc["concentration"])
        placement = tuple(
            EndpointAddr(tuple(e["switch"]), e["offset"]) for e in doc["placement"]
        )
        return cls(
            kind=AllocationKind(doc["kind"]),
            p=doc["p"],
            shape=shape,
            seed=doc["seed"],
            placement=placement,
        )


def _base_alloc(
    kind: AllocationKind,
    block: int,
    r_y: int,
    r_x: int,
    n: int,
    pair: PermutationPair | None,
) -> tuple[int, int, int]:
    if kind is AllocationKind.ROW:
        return alloc_row(block, r_y, r_x, n)
    if kind is AllocationKind.DIAGONAL:
        return alloc_diagonal(block, r_y, r_x, n)
    if kind is AllocationKind.FULL_SPREAD:
        return alloc_full_spread(block, r_y, r_x, n)
    if kind is AllocationKind.RECTANGULAR:
        return alloc_rectangular(block, r_y, r_x, n)
    if kind is AllocationKind.L_SHAPE:
        return alloc_l_shape(block, r_y, r_x, n)
    assert pair is not None
    if kind is AllocationKind.RANDOM_ENDPOINT:
        return alloc_random_endpoint(block, r_y, r_x, pair)
    return alloc_random_switch(block, r_y, r_x, pair)


def build_partition(
    kind: AllocationKind,
    p: int,
    shape: NetworkShape,
    size: int | None = None,
    seed: int | None = None,
) -> Partition:
    """Build the partition of ``size`` endpoints starting at block ``p``.

    size must be a multiple of n^2 (default one block of n^2). Random kinds
    require a seed; the permutations are shared across all blocks built from
    the same seed, so partitions with distinct blocks never overlap.
    """
    if shape.q != 2:
        raise ValueError("allocation functions are defined for q=2 networks")
    n = shape.n
    if shape.concentration != n:
        raise ValueError("allocation functions assume concentration == n")
    block_size = n * n
    if size is None:
        size = block_size
    if size <= 0 or size % block_size:
        raise ValueError(f"size {size} is not a positive multiple of {block_size}")
    m = size // block_size
    if not 0 <= p or p + m > n:
        raise ValueError(f"blocks {p}..{p + m - 1} do not fit in [0, {n})")
    pair: PermutationPair | None = None
    if kind in RANDOM_KINDS:
        if seed is None:
            raise ValueError(f"{kind.value} requires a seed")
        pair = PermutationPair.from_seed(n, seed)
    placement = []
    for r in range(size):
        block = p + r // block_size
        local = r % block_size
        s_y, s_x, c = _base_alloc(kind, block, local // n, local % n, n, pair)
        placement.append(EndpointAddr((s_y, s_x), c))
    if len(set(placement)) != size:
        raise AssertionError(f"{kind.value} placement is not injective")
    return Partition(
        kind=kind,
        p=p,
        shape=shape,
        seed=seed if kind in RANDOM_KINDS else None,
        placement=tuple(placement),
    )
