import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

import netbuild
from compoundrisk.damage import BRANCH, CIRCUIT, LINE, NODE, SUBSTATION, ComponentTable, DamageState
from compoundrisk.powerflow import solve_flow
from compoundrisk.scaling import (EMPTY_CURVE, Attributor, attribute_disruptions, attribution_brute_force,
                                  curve_rows, event_impacts, pooled_curve, scaling_curve, top_share)


def state(*keys):
    return DamageState(frozenset(keys))


def ten_components():
    ids = [f"n{i}" for i in range(10)]
    return ([(BRANCH, f"b{i}") for i in range(10)] + [(NODE, n) for n in ids] + [(CIRCUIT, n) for n in ids]
            + [(SUBSTATION, "S1")])


def test_ten_node_all_small_subsets_match_brute_force(ten):
    att = Attributor(ten)
    comps = ten_components()
    checked = 0
    for k in range(1, 4):
        for subset in itertools.combinations(comps, k):
            dmg = state(*subset)
            served = [(SUBSTATION, "S1") not in dmg.failed]
            got = att(att.table.to_mask(dmg), served)
            assert got == attribution_brute_force(ten, dmg, served)
            # with a single source every interrupted customer is charged once
            out = sum(got.values())
            assert out == ten.total_customers - netbuild.path_oracle(ten, dmg, solve_flow(ten, dmg))
            checked += 1
    assert checked == 31 + 465 + 4495


def test_charges_go_to_nearest_component(ten):
    dmg = state((BRANCH, "b2"), (BRANCH, "b7"), (CIRCUIT, "n9"))
    got = attribute_disruptions(ten, dmg, [True])
    # b7 feeds n7 and n8 (n9 has its own failed drop); b2 takes n2, n5, n6
    assert got == {(BRANCH, "b7"): 2 + 18, (BRANCH, "b2"): 7 + 9 + 41, (CIRCUIT, "n9"): 25}


def test_unserved_substation_without_failure_gets_island_key():
    # plant-only supply through L1; losing L1 strands S1
    net = netbuild.two_node_shed()
    got = attribute_disruptions(net, state((LINE, "L1")), [False])
    assert got == {(LINE, "L1"): 8000}
    got = attribute_disruptions(net, state(), [False])
    assert got == {("island", "S1"): 8000}


def test_fixture_random_damage_matches_brute_force(fixture_network):
    rng = np.random.default_rng(21)
    table = ComponentTable(fixture_network)
    att = Attributor(fixture_network, table)
    for _ in range(15):
        dmg = table.to_state(rng.random(len(table.ids)) < 0.04)
        sol = solve_flow(fixture_network, dmg)
        served = [sol.served[s] for s in fixture_network.index.sub_ids]
        assert att(table.to_mask(dmg), served) == attribution_brute_force(fixture_network, dmg, served)


def test_uniform_impacts():
    c = scaling_curve([7] * 50)
    assert c.top20_share == pytest.approx(0.2)
    assert np.array_equal(c.W, c.P)


def test_one_dominant_disruption():
    assert top_share([100, 1, 1, 1, 1]) == pytest.approx(100 / 104)


def test_top_share_interpolates():
    # 20 % of 7 disruptions is 1.4 of them
    v = [10, 5, 4, 3, 2, 1, 1]
    assert top_share(v) == pytest.approx((10 + 0.4 * 5) / 26)


@given(st.lists(st.integers(1, 10_000), min_size=1, max_size=200))
def test_curve_properties(impacts):
    c = scaling_curve(impacts)
    assert np.all(c.W >= c.P - 1e-12)
    assert np.all(np.diff(c.P) <= 0) and np.all(np.diff(c.W) <= 1e-12)
    assert c.P[0] == 1.0 and c.W[0] == pytest.approx(1.0)
    assert c.P[-1] == 0.0 and c.W[-1] == pytest.approx(0.0, abs=1e-12)
    assert 0.2 - 1e-12 <= c.top20_share <= 1.0
    # brute-force check at every x
    v = np.array(impacts, dtype=float)
    for x, p, w in zip(c.x, c.P, c.W):
        assert p == pytest.approx((v > x).mean())
        assert w == pytest.approx(v[v > x].sum() / v.sum(), abs=1e-12)


def test_empty_inputs():
    c = scaling_curve([])
    assert c is EMPTY_CURVE and c.empty
    assert np.isnan(top_share([0, 0]))
    assert curve_rows(c) == []


def test_pooled_and_rows():
    c = pooled_curve([[5, 1], [], [3]])
    assert c.n_disruptions == 3
    rows = curve_rows(c)
    assert rows[0] == {"x": 0.0, "P": 1.0, "W": 1.0}
    assert [r["x"] for r in rows] == [0.0, 1.0, 3.0, 5.0]


def test_event_impacts_sorted(ten):
    dmg = state((BRANCH, "b3"), (BRANCH, "b6"), (CIRCUIT, "n4"))
    assert event_impacts(ten, dmg, solve_flow(ten, dmg)) == [41, 30, 3]
