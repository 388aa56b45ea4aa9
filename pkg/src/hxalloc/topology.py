"""HyperX (Hamming graph) topology model.

A HyperX of dimension ``q`` and side ``n`` places its switches on a
q-dimensional grid of side ``n``. Two switches are adjacent exactly when
their addresses differ in a single coordinate, so every axis-aligned line
of the grid is a complete graph on ``n`` switches. Each switch additionally
connects ``concentration`` endpoints.

Coordinates are plain tuples of ``q`` integers. For q=2 the convention is
``(s_y, s_x)`` with row-major linearization ``s = s_y * n + s_x``; endpoints
are linearized as ``switch * concentration + offset``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations, product
from typing import Iterator

SwitchCoord = tuple[int, ...]


@dataclass(frozen=True)
class NetworkShape:
    """Size description of a HyperX instance.

    Attributes:
        q: number of dimensions (the analyses here target q=2).
        n: side length per dimension, so there are n**q switches.
        concentration: endpoints attached to each switch; defaults to n.
    """

    q: int
    n: int
    concentration: int = -1

    def __post_init__(self) -> None:
        if self.concentration == -1:
            object.__setattr__(self, "concentration", self.n)
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.concentration < 1:
            raise ValueError(f"concentration must be >= 1, got {self.concentration}")

    @property
    def switch_count(self) -> int:
        return self.n**self.q

    @property
    def endpoint_count(self) -> int:
        return self.concentration * self.n**self.q

    @property
    def network_ports_per_switch(self) -> int:
        return self.q * (self.n - 1)

    def is_valid_coord(self, s: SwitchCoord) -> bool:
        return len(s) == self.q and all(0 <= c < self.n for c in s)

    def check_coord(self, s: SwitchCoord) -> None:
        if not self.is_valid_coord(s):
            raise ValueError(f"coordinate {s!r} invalid for shape {self}")

    def switches(self) -> Iterator[SwitchCoord]:
        """All switch coordinates in row-major (linear id) order."""
        return product(range(self.n), repeat=self.q)

    def linear_switch_id(self, s: SwitchCoord) -> int:
        self.check_coord(s)
        sid = 0
        for c in s:
            sid = sid * self.n + c
        return sid

    def switch_coord(self, sid: int) -> SwitchCoord:
        if not 0 <= sid < self.switch_count:
            raise ValueError(f"switch id {sid} out of range")
        coords = []
        for _ in range(self.q):
            coords.append(sid % self.n)
            sid //= self.n
        return tuple(reversed(coords))

    def endpoint_id(self, addr: "EndpointAddr") -> int:
        if not 0 <= addr.offset < self.concentration:
            raise ValueError(f"offset {addr.offset} out of range")
        return self.linear_switch_id(addr.switch) * self.concentration + addr.offset

    def endpoint_addr(self, eid: int) -> "EndpointAddr":
        if not 0 <= eid < self.endpoint_count:
            raise ValueError(f"endpoint id {eid} out of range")
        sid, offset = divmod(eid, self.concentration)
        return EndpointAddr(self.switch_coord(sid), offset)


@dataclass(frozen=True, order=True)
class EndpointAddr:
    """An endpoint located by its switch coordinate and local index."""

    switch: SwitchCoord
    offset: int


def hamming_distance(a: SwitchCoord, b: SwitchCoord) -> int:
    """Number of coordinates in which two switch addresses differ.

    This is the hop count of a shortest route between the switches.
    """
    if len(a) != len(b):
        raise ValueError(f"dimensionality mismatch: {len(a)} vs {len(b)}")
    return sum(1 for x, y in zip(a, b) if x != y)


def are_adjacent(a: SwitchCoord, b: SwitchCoord) -> bool:
    return hamming_distance(a, b) == 1


def neighbors(shape: NetworkShape, s: SwitchCoord) -> list[SwitchCoord]:
    """The q*(n-1) switches adjacent to ``s``, grouped by dimension.

    Within each dimension the targets appear in ascending coordinate order.
    """
    shape.check_coord(s)
    out = []
    for d in range(shape.q):
        for t in range(shape.n):
            if t != s[d]:
                out.append(s[:d] + (t,) + s[d + 1 :])
    return out


def theoretical_avg_distance(shape: NetworkShape) -> float:
    """Mean switch distance over all ordered pairs, self-pairs included.

    Each coordinate differs with probability 1 - 1/n, giving q - q/n.
    """
    return shape.q - shape.q / shape.n


def link_count(shape: NetworkShape) -> int:
    """Total number of network wires: q(n-1)n^q / 2."""
    return shape.q * (shape.n - 1) * shape.n**shape.q // 2


def minimal_paths(
    shape: NetworkShape, a: SwitchCoord, b: SwitchCoord
) -> list[list[SwitchCoord]]:
    """All shortest switch sequences from ``a`` to ``b``.

    A minimal route fixes each unaligned coordinate exactly once, so the
    paths correspond to the orderings of the unaligned dimension set. For
    q=2 that is one path when the switches share a line and two paths (the
    XY and YX orders) when they do not.
    """
    shape.check_coord(a)
    shape.check_coord(b)
    unaligned = [d for d in range(shape.q) if a[d] != b[d]]
    if len(unaligned) > 3:
        raise NotImplementedError("path enumeration restricted to <= 3 unaligned dims")
    if not unaligned:
        return [[a]]
    paths = []
    for order in permutations(unaligned):
        cur = a
        path = [a]
        for d in order:
            cur = cur[:d] + (b[d],) + cur[d + 1 :]
            path.append(cur)
        paths.append(path)
    return paths
