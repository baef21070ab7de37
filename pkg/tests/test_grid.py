import copy
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

import netbuild
from compoundrisk.grid import (NetworkError, customers_downstream, dump_network, harmonic_mean_sector_length,
                               load_network, manifest_totals, network_from_dict, network_to_dict,
                               tree_sectors, with_underground)

from conftest import FIXTURES


def fixture_dict():
    return json.loads((FIXTURES / "network.json").read_text())


def test_bundled_network_matches_manifest(fixture_network):
    m = fixture_network.manifest
    totals = manifest_totals(fixture_network)
    for k in ("plants", "substations", "transmission_lines", "distribution_branches", "customers"):
        assert totals[k] == m[k]
    assert totals["distribution_branches"] == 780


def test_cycle_names_its_branches():
    d = fixture_dict()
    t = d["distribution_trees"][0]
    # close a loop between the first node and a deeper node of the same tree
    a, z = t["nodes"][0]["id"], t["nodes"][-1]["id"]
    t["branches"].append({"id": "LOOP1", "parent": z, "child": a, "length_km": 0.5})
    with pytest.raises(NetworkError) as e:
        network_from_dict(d)
    cyc = [x for x in e.value.diagnostics if "cycle" in x]
    assert len(cyc) == 1
    # the loop is LOOP1 plus the tree path from a down to z
    parent_branch = {b["child"]: b for b in t["branches"] if b["id"] != "LOOP1"}
    path, v = [], z
    while v != a:
        path.append(parent_branch[v]["id"])
        v = parent_branch[v]["parent"]
    named = set(cyc[0].split("branches ")[1].split(", "))
    assert named == set(path) | {"LOOP1"}


def test_negative_customers_names_node():
    d = fixture_dict()
    nid = d["distribution_trees"][3]["nodes"][2]["id"]
    d["distribution_trees"][3]["nodes"][2]["customers"] = -4
    with pytest.raises(NetworkError) as e:
        network_from_dict(d)
    assert any(nid in x and "negative" in x for x in e.value.diagnostics)


def test_orphan_and_dangling_reported_together():
    d = fixture_dict()
    t = d["distribution_trees"][1]
    t["nodes"].append({"id": "ORPHAN", "lat": 29.7, "lon": -95.3, "customers": 3, "tract": "T1"})
    t["branches"].append({"id": "DANGLE", "parent": "NOWHERE", "child": t["nodes"][0]["id"], "length_km": 1})
    with pytest.raises(NetworkError) as e:
        network_from_dict(d)
    text = "\n".join(e.value.diagnostics)
    assert "orphan node ORPHAN" in text
    assert "DANGLE" in text and "NOWHERE" in text


def test_manifest_mismatch():
    d = fixture_dict()
    d["manifest"]["customers"] += 1
    with pytest.raises(NetworkError) as e:
        network_from_dict(d)
    assert any("manifest" in x for x in e.value.diagnostics)


def test_disconnected_transmission():
    t1 = netbuild.tree("F1", "S1", [("b1", "S1", "n1")], {"n1": 5})
    t2 = netbuild.tree("F2", "S2", [("b2", "S2", "n2")], {"n2": 5})
    with pytest.raises(NetworkError, match="invalid"):
        netbuild.build([t1, t2], subs=("S1", "S2"), ties=("S1",))


def test_load_is_pure_function_of_bytes(tmp_path, fixture_network):
    dump_network(fixture_network, tmp_path / "a.json")
    dump_network(load_network(tmp_path / "a.json"), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert load_network(tmp_path / "a.json") == load_network(tmp_path / "b.json")


def test_unreadable_file(tmp_path):
    (tmp_path / "n.json").write_text("{not json")
    with pytest.raises(NetworkError, match="JSON"):
        load_network(tmp_path / "n.json")


def subtree_customers(edges, customers, branch):
    """DFS below a branch."""
    children = {}
    for _, p, c in edges:
        children.setdefault(p, []).append(c)
    child = next(c for b, _, c in edges if b == branch)
    stack, total = [child], 0
    while stack:
        v = stack.pop()
        total += customers[v]
        stack.extend(children.get(v, []))
    return total


def test_customers_downstream_leaf_and_root(seven):
    assert customers_downstream(seven, "bg") == 70
    assert customers_downstream(seven, "ba") == sum(netbuild.SEVEN_CUSTOMERS.values())


@pytest.mark.parametrize("branch", [b for b, _, _ in netbuild.SEVEN_EDGES])
def test_customers_downstream_matches_dfs(seven, branch):
    assert customers_downstream(seven, branch) == subtree_customers(netbuild.SEVEN_EDGES,
                                                                    netbuild.SEVEN_CUSTOMERS, branch)


def test_customers_downstream_unknown(seven):
    with pytest.raises(KeyError):
        customers_downstream(seven, "nope")


def test_root_edges_sum_to_total(fixture_network):
    roots = [b.id for t in fixture_network.trees for b in t.branches if b.parent == t.substation]
    assert sum(customers_downstream(fixture_network, b) for b in roots) == fixture_network.total_customers


def test_seven_node_sectors(seven):
    secs = {s.branch_ids for s in tree_sectors(seven.trees[0])}
    assert secs == {("ba",), ("bb", "bd"), ("bc",), ("be",), ("bf", "bg")}


def two_sector_net(l1, l2):
    t = netbuild.tree("F1", "S1", [("x", "S1", "a"), ("y", "S1", "b")], {"a": 1, "b": 1},
                      lengths={"x": l1, "y": l2})
    return netbuild.build([t])


@pytest.mark.parametrize("l1, l2, expected", [(2.0, 2.0, 2.0), (1.0, 3.0, 1.5)])
def test_harmonic_mean_examples(l1, l2, expected):
    s = harmonic_mean_sector_length(two_sector_net(l1, l2), "T1")
    assert s.harmonic_mean_length == pytest.approx(expected, rel=1e-12)
    assert s.sector_count == 2


def test_harmonic_mean_single_sector():
    t = netbuild.tree("F1", "S1", [("x", "S1", "a"), ("y", "a", "b")], {"a": 1, "b": 1},
                      lengths={"x": 1.25, "y": 2.5})
    s = harmonic_mean_sector_length(netbuild.build([t]), "T1")
    assert (s.sector_count, s.harmonic_mean_length) == (1, pytest.approx(3.75))


def test_harmonic_mean_empty_tract(seven):
    s = harmonic_mean_sector_length(seven, "ZZ")
    assert s.sector_count == 0 and np.isnan(s.harmonic_mean_length)


def test_hm_not_above_am_on_fixture(fixture_network):
    secs = fixture_network.sectors
    tract_of = {n.id: n.tract for t in fixture_network.trees for n in t.nodes}
    for tract in fixture_network.tracts():
        lengths = [Fraction(s.length_km) for s in secs if any(tract_of[n] == tract for n in s.node_ids)]
        if not lengths:
            continue
        hm = len(lengths) / sum(1 / L for L in lengths)
        am = sum(lengths) / len(lengths)
        assert hm <= am
        got = harmonic_mean_sector_length(fixture_network, tract, secs).harmonic_mean_length
        assert got == pytest.approx(float(hm), rel=1e-12)


@given(st.lists(st.floats(0.01, 50), min_size=1, max_size=8))
def test_hm_le_am_random_star(lengths):
    edges = [(f"b{i}", "S1", f"n{i}") for i in range(len(lengths))]
    t = netbuild.tree("F1", "S1", edges, {f"n{i}": 1 for i in range(len(lengths))},
                      lengths={f"b{i}": L for i, L in enumerate(lengths)})
    s = harmonic_mean_sector_length(netbuild.build([t]), "T1")
    assert s.harmonic_mean_length <= np.mean(lengths) * (1 + 1e-12)
    assert s.harmonic_mean_length > 0


def test_with_underground_flips_exactly_named(seven):
    out = with_underground(seven, ["bb", "bf", "X0"])
    before = {b.id: b.underground for b in seven.trees[0].branches}
    after = {b.id: b.underground for b in out.trees[0].branches}
    assert {k for k in after if after[k] != before[k]} == {"bb", "bf"}
    assert out.boundary_ties[0].underground
    assert not seven.trees[0].branches[1].underground  # original untouched
    with pytest.raises(KeyError):
        with_underground(seven, ["missing"])


def test_dict_round_trip(seven):
    again = network_from_dict(copy.deepcopy(network_to_dict(seven)))
    assert again == seven


def test_index_parent_precedes_child(fixture_network):
    idx = fixture_network.index
    assert np.all(idx.parent < np.arange(idx.n_nodes))
    assert idx.downstream.sum() >= idx.customers.sum()
