"""Tests for static patterns and the five kernel schedules."""

from __future__ import annotations

import random

import pytest

from hxalloc.allocation import AllocationKind, build_partition
from hxalloc.topology import NetworkShape
from hxalloc.workloads import (
    KernelKind,
    KernelSchedule,
    Neighborhood,
    RankStep,
    StaticKind,
    StaticPattern,
    StaticSource,
    TrafficAssignment,
    gen_all2all,
    gen_allreduce,
    gen_random_involution,
    gen_static,
    gen_stencil,
)

SHAPE8 = NetworkShape(q=2, n=8)


def make_partition(kind=AllocationKind.ROW, p=0, size=None):
    return build_partition(kind, p, SHAPE8, size=size)


class TestStatic:
    def test_uniform_draws_destinations(self):
        part = make_partition()
        src = gen_static(StaticPattern(StaticKind.UNIFORM, seed=1), part)
        assert src.rank_map is None
        rng = random.Random(0)
        draws = {src.dest_rank(0, rng) for _ in range(500)}
        assert draws <= set(range(64))
        assert len(draws) > 32  # i.i.d. draws cover most ranks
        with pytest.raises(ValueError):
            src.dest_rank(0)

    def test_random_permutation_is_bijection(self):
        part = make_partition()
        src = gen_static(StaticPattern(StaticKind.RANDOM_PERMUTATION, seed=5), part)
        assert sorted(src.rank_map) == list(range(64))
        again = gen_static(StaticPattern(StaticKind.RANDOM_PERMUTATION, seed=5), part)
        assert src.rank_map == again.rank_map
        other = gen_static(StaticPattern(StaticKind.RANDOM_PERMUTATION, seed=6), part)
        assert src.rank_map != other.rank_map

    def test_switch_permutation_groups(self):
        part = make_partition()
        src = gen_static(
            StaticPattern(StaticKind.RANDOM_SWITCH_PERMUTATION, seed=2), part
        )
        assert sorted(src.rank_map) == list(range(64))
        for g in range(8):
            dest_groups = {src.rank_map[g * 8 + j] // 8 for j in range(8)}
            offsets = [src.rank_map[g * 8 + j] % 8 for j in range(8)]
            assert len(dest_groups) == 1
            assert offsets == list(range(8))

    def test_switch_permutation_targets_one_switch_under_row_mapping(self):
        # Row mapping puts each rank-group of n on one switch, so a whole
        # switch's endpoints all aim at one common remote switch.
        part = make_partition(AllocationKind.ROW)
        src = gen_static(
            StaticPattern(StaticKind.RANDOM_SWITCH_PERMUTATION, seed=3), part
        )
        for g in range(8):
            dest_switches = {
                part.endpoint(src.rank_map[g * 8 + j]).switch for j in range(8)
            }
            assert len(dest_switches) == 1

    def test_group_size_mismatch_rejected(self):
        from hxalloc.allocation import Partition

        part = make_partition()
        # A hand-built partition whose rank count is not a whole number of
        # switch groups cannot host the switch-permutation pattern.
        stub = Partition(
            AllocationKind.ROW, 0, SHAPE8, None, part.placement[:12]
        )
        with pytest.raises(ValueError):
            gen_static(
                StaticPattern(StaticKind.RANDOM_SWITCH_PERMUTATION, seed=0), stub
            )

    def test_terminating_flag(self):
        part = make_partition()
        finite = gen_static(StaticPattern(StaticKind.UNIFORM, demand_packets=10), part)
        infinite = gen_static(
            StaticPattern(StaticKind.UNIFORM, demand_packets=None), part
        )
        assert finite.terminating and not infinite.terminating


class TestAll2All:
    def test_counts_k64(self):
        sched = gen_all2all(64)
        assert sched.num_steps == 63
        assert sched.total_messages() == 64 * 63 == 4032
        assert not sched.require_receive

    def test_shift_formula(self):
        sched = gen_all2all(4)
        # Step index 1 is the second shift: rank 1 sends to (1+2) mod 4.
        step = sched.steps[1][1]
        assert step.sends == ((3, 1),)
        assert step.recvs == ((3, 1),)

    def test_k2(self):
        sched = gen_all2all(2)
        assert sched.num_steps == 1
        assert sched.steps[0][0].sends == ((1, 1),)
        assert sched.steps[1][0].sends == ((0, 1),)

    def test_chunk_size(self):
        sched = gen_all2all(4, chunk_packets=5)
        assert sched.total_packets() == 4 * 3 * 5

    def test_rejects_small_k(self):
        with pytest.raises(ValueError):
            gen_all2all(1)


class TestAllReduce:
    def test_k8_partners_and_payloads(self):
        sched = gen_allreduce(8, message_packets=8)
        assert sched.num_steps == 6
        for r in range(8):
            partners = [st.sends[0][0] for st in sched.steps[r]]
            sizes = [st.sends[0][1] for st in sched.steps[r]]
            assert partners == [r ^ 1, r ^ 2, r ^ 4, r ^ 4, r ^ 2, r ^ 1]
            assert sizes == [4, 2, 1, 1, 2, 4]

    def test_k64_partner_bits(self):
        sched = gen_allreduce(64, message_packets=64)
        assert sched.num_steps == 12
        partners = [st.sends[0][0] for st in sched.steps[0]]
        bits = [1, 2, 4, 8, 16, 32]
        assert partners == bits + bits[::-1]

    def test_payload_floor(self):
        sched = gen_allreduce(16, message_packets=2)
        sizes = [st.sends[0][1] for st in sched.steps[3]]
        assert sizes == [1, 1, 1, 1, 1, 1, 1, 1]

    def test_k2(self):
        sched = gen_allreduce(2, message_packets=4)
        assert sched.num_steps == 2
        assert [st.sends[0] for st in sched.steps[0]] == [(1, 2), (1, 2)]

    def test_rejects_non_power_of_two(self):
        for bad in (3, 6, 12, 0):
            with pytest.raises(ValueError):
                gen_allreduce(bad)


class TestStencil:
    def test_von_neumann_peers(self):
        sched = gen_stencil(64, Neighborhood.VON_NEUMANN, rounds=4)
        assert sched.kind is KernelKind.STENCIL_VON_NEUMANN
        assert sched.num_steps == 4
        peers = {p for p, _ in sched.steps[0][0].sends}
        assert peers == {1, 7, 8, 56}

    def test_moore_peers(self):
        sched = gen_stencil(64, Neighborhood.MOORE, rounds=1)
        assert all(len(sched.steps[r][0].sends) == 8 for r in range(64))
        peers = {p for p, _ in sched.steps[9][0].sends}
        assert peers == {0, 1, 2, 8, 10, 16, 17, 18}

    def test_tiny_torus_collapses_duplicates(self):
        sched = gen_stencil(4, Neighborhood.VON_NEUMANN, rounds=1)
        for r in range(4):
            peers = [p for p, _ in sched.steps[r][0].sends]
            assert len(peers) == len(set(peers)) == 2

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            gen_stencil(10)


class TestInvolution:
    @pytest.mark.parametrize("k", [2, 6, 64, 126])
    def test_fixed_point_free_involution(self, k):
        sched = gen_random_involution(k, rng=11)
        partner = sched.meta["partner"]
        assert sched.num_steps == 1
        for r in range(k):
            assert partner[r] != r
            assert partner[partner[r]] == r
            assert sched.steps[r][0].sends == ((partner[r], 1),)

    def test_deterministic_per_seed(self):
        a = gen_random_involution(32, rng=4)
        b = gen_random_involution(32, rng=4)
        c = gen_random_involution(32, rng=5)
        assert a.meta["partner"] == b.meta["partner"]
        assert a.meta["partner"] != c.meta["partner"]

    def test_rejects_odd(self):
        with pytest.raises(ValueError):
            gen_random_involution(7)


class TestScheduleValidation:
    def test_asymmetric_schedule_rejected(self):
        steps = (
            (RankStep(sends=((1, 1),), recvs=()),),
            (RankStep(sends=(), recvs=()),),
        )
        with pytest.raises(ValueError):
            KernelSchedule(KernelKind.ALL2ALL, 2, steps)

    def test_flit_conservation_per_rank(self):
        for sched in (
            gen_all2all(16),
            gen_allreduce(16, 8),
            gen_stencil(16, Neighborhood.MOORE),
            gen_random_involution(16, rng=1),
        ):
            for r in range(sched.k):
                sent = sum(st.send_packets for st in sched.steps[r])
                recv = sum(st.recv_packets for st in sched.steps[r])
                assert sent == recv


class TestAssignment:
    def test_requires_exactly_one_source(self):
        part = make_partition()
        sched = gen_all2all(64)
        src = gen_static(StaticPattern(StaticKind.UNIFORM), part)
        TrafficAssignment(partition=part, kernel=sched)
        TrafficAssignment(partition=part, static=src)
        with pytest.raises(ValueError):
            TrafficAssignment(partition=part)
        with pytest.raises(ValueError):
            TrafficAssignment(partition=part, kernel=sched, static=src)

    def test_rank_count_must_match(self):
        part = make_partition()
        with pytest.raises(ValueError):
            TrafficAssignment(partition=part, kernel=gen_all2all(32))

    def test_terminating(self):
        part = make_partition()
        assert TrafficAssignment(partition=part, kernel=gen_all2all(64)).terminating
        noise = gen_static(
            StaticPattern(StaticKind.UNIFORM, demand_packets=None), part
        )
        assert not TrafficAssignment(partition=part, static=noise).terminating
