import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import build, chain, device, node, version
from placekit.errors import InfeasibleInstanceError
from placekit.model import compute, helper, user
from placekit.placement import (Placement, check_constraints, distribution, first_fit_decreasing,
                                heal, heal_arrays, is_feasible_batch, legal_hosts, random_genes,
                                random_placement)
from placekit.scenario import builtin_scale, generate, tiny_scale


def _two_service_instance(K=3):
    comps = [[version(cr=100, mr=1, dr=1)], [version(cr=100, mr=1, dr=1)]]
    big = dict(cc=1000, mc=4, dc=4)
    return build([node() for _ in range(K)], [(comps, chain(2)), (comps, chain(2))],
                 users=[device(**big), device(**big)], helpers=[device(kind="helper", **big)])


def test_legal_hosts_are_compute_plus_own_devices():
    inst = _two_service_instance()
    assert legal_hosts(inst, 0, 0) == {compute(0), compute(1), compute(2), user(0), helper(0)}


def test_foreign_user_is_never_legal():
    inst = _two_service_instance()
    assert user(0) not in legal_hosts(inst, 1, 1)
    assert user(1) in legal_hosts(inst, 1, 1)


def test_no_compute_nodes_leaves_own_devices():
    comps = [[version(mr=0.01, dr=0.01)]]
    inst = build([], [(comps, [[0]])])
    assert legal_hosts(inst, 0, 0) == {user(0), helper(0)}


def test_pinned_endpoints():
    inst = _two_service_instance()
    assert legal_hosts(inst, 1, 0, pin_endpoints=True) == {user(1)}
    assert legal_hosts(inst, 1, 1, pin_endpoints=True) == {helper(0)}


def test_empty_placement_has_no_violations():
    inst = build([node()], [])
    assert check_constraints(inst, Placement.for_instance(inst, [], [])) == []


def test_overload_names_the_node():
    comps = [[version(mr=3)], [version(mr=3)]]
    inst = build([node(mc=5), node(mc=5)], [(comps, chain(2))])
    v = check_constraints(inst, Placement.for_instance(inst, [0, 0], [1, 1]))
    assert len(v) == 1
    assert v[0].kind == "capacity" and v[0].node == compute(1) and "mc" in v[0].detail


def test_foreign_device_is_an_ownership_violation():
    inst = _two_service_instance()
    K = inst.K
    p = Placement.for_instance(inst, [0, 0, 0, 0], [0, 0, K + 0, 0])  # service 1 on user 0
    v = check_constraints(inst, p)
    assert [x.kind for x in v] == ["user_ownership"] and v[0].gene == 2


def test_out_of_range_version():
    inst = _two_service_instance()
    v = check_constraints(inst, Placement.for_instance(inst, [0, 5, 0, 0], [0, 0, 0, 0]))
    assert v[0].kind == "version"


def test_feasible_placement_is_a_fixed_point():
    inst = _two_service_instance()
    p = Placement.for_instance(inst, [0, 0, 0, 0], [0, 1, 2, 0])
    assert heal(inst, p, 0) == p


def test_two_node_repair_moves_the_heavier_gene():
    comps = [[version(cr=1000, mr=1)], [version(cr=2000, mr=1)]]
    inst = build([node(cc=1e4, mc=1.5), node(cc=1e4, mc=1.5)], [(comps, chain(2))])
    healed = heal(inst, Placement.for_instance(inst, [0, 0], [0, 0]), 0)
    assert healed.hosts.tolist() == [0, 1]
    assert check_constraints(inst, healed) == []


def test_heal_redraws_version_when_needed():
    comps = [[version(cr=10, mr=1), version(cr=10, mr=1)], [version(cr=10, mr=4), version(cr=10, mr=0.5)]]
    inst = build([node(mc=1.6)], [(comps, chain(2))])
    healed = heal(inst, Placement.for_instance(inst, [0, 0], [0, 0]), 0)
    assert healed.versions.tolist() == [0, 1] and healed.hosts.tolist() == [0, 0]


def test_heal_relocates_foreign_genes():
    inst = _two_service_instance()
    K = inst.K
    healed = heal(inst, Placement.for_instance(inst, [0] * 4, [0, 0, K, 0]), 0)
    assert check_constraints(inst, healed) == []
    assert healed.hosts[2] != K


def test_heal_leaves_untouched_hosts_alone():
    comps = [[version(cr=100 * (i + 1), mr=1)] for i in range(4)]
    inst = build([node(cc=1e4, mc=2.5), node(cc=1e4, mc=2.5), node(cc=1e4, mc=10)], [(comps, chain(4))])
    p = Placement.for_instance(inst, [0] * 4, [0, 0, 0, 1])
    healed = heal(inst, p, 0)
    assert check_constraints(inst, healed) == []
    assert healed.hosts[3] == 1  # node 1 was never overloaded
    assert healed.hosts[:3].tolist().count(0) == 2


def test_infeasible_instance_raises():
    comps = [[version(mr=3)], [version(mr=3)]]
    inst = build([node(mc=4)], [(comps, chain(2))])
    with pytest.raises(InfeasibleInstanceError):
        heal(inst, Placement.for_instance(inst, [0, 0], [0, 0]), 0)
    with pytest.raises(InfeasibleInstanceError):
        random_placement(inst, 0)
    with pytest.raises(InfeasibleInstanceError):
        first_fit_decreasing(inst)


def test_random_placement_is_seeded():
    inst = generate(tiny_scale(), 3)
    assert random_placement(inst, 11) == random_placement(inst, 11)


def test_random_placement_unique_when_no_freedom():
    comps = [[version()]]
    inst = build([node()], [(comps, [[0]])], users=[device(mc=0.1)], helpers=[device(mc=0.1, kind="helper")])
    assert random_placement(inst, 0).hosts.tolist() == [0]


def test_random_draws_cover_every_node():
    comps = [[version(mr=0.5, dr=0.5)] for _ in range(3)]
    inst = build([node(), node(), node()], [(comps, chain(3))])
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(1000):
        seen.update(random_placement(inst, rng).hosts.tolist())
    assert {0, 1, 2} <= seen


def test_json_round_trip():
    inst = generate(tiny_scale(), 5)
    p = random_placement(inst, 2)
    assert Placement.from_json(inst, p.to_json()) == p
    assert p.to_json()[0][1] in ("compute", "user", "helper")


def test_distribution_sums_to_one():
    inst = generate(builtin_scale("small"), 0)
    d = distribution(inst, random_placement(inst, 0))
    assert set(d) == {"user", "helper", "tier1", "tier2", "tier3"}
    assert sum(d.values()) == pytest.approx(1.0, abs=1e-9)


def test_batch_feasibility_agrees_with_checker():
    inst = generate(tiny_scale(y=4), 7)
    rng = np.random.default_rng(1)
    vs, hs = random_genes(inst, rng, size=200)
    ok = is_feasible_batch(inst, vs, hs)
    for i in range(200):
        p = Placement.for_instance(inst, vs[i], hs[i])
        assert ok[i] == (check_constraints(inst, p) == [])


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 100_000), pseed=st.integers(0, 100_000))
def test_heal_always_repairs_and_is_idempotent(seed, pseed):
    inst = generate(tiny_scale(n_users=3, n_helpers=2, tier_counts=(2, 2, 1), y=4, v=3), seed)
    rng = np.random.default_rng(pseed)
    vs, hs = random_genes(inst, rng)
    healed = heal(inst, Placement.for_instance(inst, vs, hs), pseed)
    assert check_constraints(inst, healed) == []
    assert heal(inst, healed, pseed) == healed
    assert len(healed) == inst.n_components


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_random_placement_never_fails_on_generated_instances(seed):
    inst = generate(builtin_scale("small"), seed)
    p = random_placement(inst, seed)
    assert check_constraints(inst, p) == []


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), pseed=st.integers(0, 100_000))
def test_pinned_heal_respects_pins(seed, pseed):
    inst = generate(tiny_scale(y=3, v=2), seed)
    try:
        p = random_placement(inst, pseed, pin_endpoints=True)
    except InfeasibleInstanceError:
        return  # devices may be too small for the pinned components
    assert check_constraints(inst, p, pin_endpoints=True) == []


def test_heal_arrays_reports_change():
    inst = _two_service_instance()
    vs = np.zeros(4, dtype=np.int64)
    hs = np.array([0, 1, 2, 0], dtype=np.int64)
    assert heal_arrays(inst, vs, hs, np.random.default_rng(0)) is False
