"""Traffic generation: static patterns and communication kernels.

Static patterns drive endpoints at a fixed demand (or forever, for
background noise). Kernels are rank-level message programs: every rank
owns an ordered list of steps, each step being a set of (peer, packets)
sends with the matching receives. A rank may start step s+1 only when
step s is complete; what "complete" means is the schedule's dependency
rule. All-to-all ranks run asynchronously, gated only on their own sends
being delivered, while the other kernels also wait for the step's
expected receives.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .allocation import Partition


class StaticKind(str, Enum):
    UNIFORM = "uniform"
    RANDOM_PERMUTATION = "random_permutation"
    RANDOM_SWITCH_PERMUTATION = "random_switch_permutation"


class KernelKind(str, Enum):
    ALL2ALL = "all2all"
    ALLREDUCE_RABENSEIFNER = "allreduce_rabenseifner"
    STENCIL_VON_NEUMANN = "stencil_von_neumann"
    STENCIL_MOORE = "stencil_moore"
    RANDOM_INVOLUTION = "random_involution"


class Neighborhood(str, Enum):
    VON_NEUMANN = "von_neumann"
    MOORE = "moore"


DEFAULT_DEMAND_PACKETS = 500


@dataclass(frozen=True)
class StaticPattern:
    """A synthetic pattern: where packets go and how many to send.

    demand_packets is the per-endpoint termination budget; None makes the
    pattern non-terminating (used for background interference traffic).
    """

    kind: StaticKind
    seed: int = 0
    demand_packets: int | None = DEFAULT_DEMAND_PACKETS

    def __post_init__(self) -> None:
        if self.demand_packets is not None and self.demand_packets < 1:
            raise ValueError("demand must be >= 1 packet or None")


@dataclass(frozen=True)
class StaticSource:
    """A static pattern bound to a partition's ranks.

    rank_map is the fixed destination rank per source rank for the
    permutation kinds; Uniform draws destinations per packet and keeps
    rank_map None.
    """

    pattern: StaticPattern
    partition: Partition
    rank_map: tuple[int, ...] | None

    @property
    def k(self) -> int:
        return self.partition.size

    @property
    def terminating(self) -> bool:
        return self.pattern.demand_packets is not None

    def dest_rank(self, src_rank: int, rng: random.Random | None = None) -> int:
        if self.rank_map is not None:
            return self.rank_map[src_rank]
        if rng is None:
            raise ValueError("uniform pattern needs an rng to draw a destination")
        return rng.randrange(self.k)


def gen_static(
    pattern: StaticPattern,
    partition: Partition,
    rng: random.Random | None = None,
) -> StaticSource:
    """Bind a static pattern to a partition, fixing any permutation.

    The permutation kinds draw their bijection from the pattern seed (or
    the caller's rng), so (kind, seed, k) regenerates the same mapping.
    The switch variant permutes rank-groups of size n, sending rank j of
    group g to rank j of group perm(g); it needs the rank count to divide
    into whole groups.
    """
    if rng is None:
        rng = random.Random(pattern.seed)
    k = partition.size
    if pattern.kind is StaticKind.UNIFORM:
        return StaticSource(pattern, partition, None)
    if pattern.kind is StaticKind.RANDOM_PERMUTATION:
        perm = list(range(k))
        rng.shuffle(perm)
        return StaticSource(pattern, partition, tuple(perm))
    n = partition.shape.n
    if k % n:
        raise ValueError(f"rank count {k} is not a multiple of group size {n}")
    groups = k // n
    gperm = list(range(groups))
    rng.shuffle(gperm)
    rank_map = tuple(gperm[r // n] * n + r % n for r in range(k))
    return StaticSource(pattern, partition, rank_map)


Send = tuple[int, int]  # (peer rank, packets)


@dataclass(frozen=True)
class RankStep:
    """One step of one rank: its sends and the receives that match them."""

    sends: tuple[Send, ...]
    recvs: tuple[Send, ...]

    @property
    def send_packets(self) -> int:
        return sum(p for _, p in self.sends)

    @property
    def recv_packets(self) -> int:
        return sum(p for _, p in self.recvs)


@dataclass(frozen=True)
class KernelSchedule:
    """A complete rank-level message program.

    steps[r] is rank r's ordered step list; every rank has the same number
    of steps. require_receive picks the execution mode: gated programs
    hold each step until the previous step's sends are delivered and its
    expected receives have landed, while ungated programs stream their
    whole send list asynchronously and the step index only orders
    destinations (the all-to-all runs ungated, so ranks drift freely).
    """

    kind: KernelKind
    k: int
    steps: tuple[tuple[RankStep, ...], ...]
    require_receive: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if len(self.steps) != self.k:
            raise ValueError("one step list per rank required")
        lengths = {len(s) for s in self.steps}
        if len(lengths) != 1:
            raise ValueError("all ranks must have the same step count")
        self._check_symmetry()

    @property
    def num_steps(self) -> int:
        return len(self.steps[0])

    def total_messages(self) -> int:
        return sum(len(st.sends) for rank in self.steps for st in rank)

    def total_packets(self) -> int:
        return sum(st.send_packets for rank in self.steps for st in rank)

    def _check_symmetry(self) -> None:
        # Every (src, step, dst, size) send must appear on the peer's recv
        # list at the same step, and vice versa.
        for r, rank_steps in enumerate(self.steps):
            for s, step in enumerate(rank_steps):
                for peer, size in step.sends:
                    if not 0 <= peer < self.k:
                        raise ValueError(f"rank {r} step {s}: peer {peer} out of range")
                    if (r, size) not in self.steps[peer][s].recvs:
                        raise ValueError(
                            f"send {r}->{peer} step {s} has no matching receive"
                        )
                for peer, size in step.recvs:
                    if (r, size) not in self.steps[peer][s].sends:
                        raise ValueError(
                            f"recv {peer}->{r} step {s} has no matching send"
                        )


def gen_all2all(k: int, chunk_packets: int = 1) -> KernelSchedule:
    """All-to-all personalized exchange in k-1 shift steps.

    At step i (1-based shift), rank r sends a chunk to (r + i) mod k and
    receives the matching chunk from (r - i) mod k. Ranks proceed through
    their shifts asynchronously.
    """
    if k < 2:
        raise ValueError(f"all2all needs k >= 2, got {k}")
    if chunk_packets < 1:
        raise ValueError("chunk must be >= 1 packet")
    steps = tuple(
        tuple(
            RankStep(
                sends=(((r + i) % k, chunk_packets),),
                recvs=(((r - i) % k, chunk_packets),),
            )
            for i in range(1, k)
        )
        for r in range(k)
    )
    return KernelSchedule(KernelKind.ALL2ALL, k, steps, require_receive=False)


def gen_allreduce(k: int, message_packets: int = 8) -> KernelSchedule:
    """Rabenseifner all-reduce: scatter-reduce then all-gather.

    Phase 1 step j pairs rank r with r XOR 2^j and exchanges half the
    remaining vector (so payloads halve, floored at one packet); phase 2
    walks the same partners in reverse with payloads doubling back up.
    """
    if k < 2 or k & (k - 1):
        raise ValueError(f"rabenseifner all-reduce needs a power-of-two k, got {k}")
    if message_packets < 1:
        raise ValueError("message must be >= 1 packet")
    log_k = k.bit_length() - 1
    bits = [1 << j for j in range(log_k)]
    payloads = [max(message_packets >> (j + 1), 1) for j in range(log_k)]
    order = list(zip(bits, payloads)) + list(zip(reversed(bits), reversed(payloads)))
    steps = tuple(
        tuple(
            RankStep(sends=((r ^ bit, size),), recvs=((r ^ bit, size),))
            for bit, size in order
        )
        for r in range(k)
    )
    return KernelSchedule(KernelKind.ALLREDUCE_RABENSEIFNER, k, steps)


def gen_stencil(
    k: int,
    neighborhood: Neighborhood = Neighborhood.VON_NEUMANN,
    rounds: int = 4,
    message_packets: int = 1,
) -> KernelSchedule:
    """Halo exchange on a sqrt(k) x sqrt(k) torus of ranks.

    Von Neumann talks to the 4 cardinal neighbors, Moore adds the 4
    diagonals. Wraparound on small grids can make two directions land on
    the same rank; such duplicates collapse into a single exchange. Each
    round is a full neighbor exchange and a dependency barrier.
    """
    side = math.isqrt(k)
    if side * side != k:
        raise ValueError(f"stencil needs a square rank count, got {k}")
    if rounds < 1 or message_packets < 1:
        raise ValueError("rounds and message size must be >= 1")
    offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if neighborhood is Neighborhood.MOORE:
        offsets += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    kind = (
        KernelKind.STENCIL_MOORE
        if neighborhood is Neighborhood.MOORE
        else KernelKind.STENCIL_VON_NEUMANN
    )
    rank_peers = []
    for r in range(k):
        y, x = divmod(r, side)
        peers = sorted(
            {((y + dy) % side) * side + (x + dx) % side for dy, dx in offsets}
            - {r}
        )
        rank_peers.append(peers)
    steps = tuple(
        tuple(
            RankStep(
                sends=tuple((p, message_packets) for p in rank_peers[r]),
                recvs=tuple((p, message_packets) for p in rank_peers[r]),
            )
            for _ in range(rounds)
        )
        for r in range(k)
    )
    return KernelSchedule(kind, k, steps)


def gen_random_involution(
    k: int,
    message_packets: int = 1,
    rng: random.Random | int = 0,
) -> KernelSchedule:
    """One-step pairwise exchange over a uniform random perfect matching.

    Shuffling the ranks and pairing consecutive entries weights every
    perfect matching equally; the result is a fixed-point-free involution.
    """
    if k < 2 or k % 2:
        raise ValueError(f"involution needs an even k >= 2, got {k}")
    if message_packets < 1:
        raise ValueError("message must be >= 1 packet")
    if isinstance(rng, int):
        rng = random.Random(rng)
    order = list(range(k))
    rng.shuffle(order)
    partner = [0] * k
    for i in range(0, k, 2):
        a, b = order[i], order[i + 1]
        partner[a], partner[b] = b, a
    steps = tuple(
        (
            RankStep(
                sends=((partner[r], message_packets),),
                recvs=((partner[r], message_packets),),
            ),
        )
        for r in range(k)
    )
    return KernelSchedule(
        KernelKind.RANDOM_INVOLUTION,
        k,
        steps,
        meta={"partner": tuple(partner)},
    )


@dataclass(frozen=True)
class TrafficAssignment:
    """One application instance: a partition plus the traffic it runs.

    Exactly one of kernel/static is set. vc_set selects the block of
    virtual channels the instance's packets may use when the fabric is
    partitioned; with partitioning off every instance shares set 0.
    """

    partition: Partition
    kernel: KernelSchedule | None = None
    static: StaticSource | None = None
    vc_set: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if (self.kernel is None) == (self.static is None):
            raise ValueError("exactly one of kernel/static must be given")
        if self.kernel is not None and self.kernel.k != self.partition.size:
            raise ValueError(
                f"kernel rank count {self.kernel.k} != partition size "
                f"{self.partition.size}"
            )
        if self.static is not None and self.static.partition != self.partition:
            raise ValueError("static source bound to a different partition")
        if self.vc_set < 0:
            raise ValueError("vc_set must be >= 0")

    @property
    def terminating(self) -> bool:
        if self.kernel is not None:
            return True
        return self.static.terminating
