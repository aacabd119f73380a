import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_toy5, random_dag
from ontoevent.ontology import (
    EventNode,
    NotALeafError,
    Ontology,
    SchemaError,
    UnknownNodeError,
)


def brute_force_subgraph(ont: Ontology, leaf_id: str) -> frozenset[str]:
    """Oracle: enumerate every upward path explicitly and union the nodes."""
    paths: list[list[str]] = []

    def walk(node_id, trail):
        trail = trail + [node_id]
        parents = ont.parents(node_id)
        if not parents:
            paths.append(trail)
            return
        for p in parents:
            walk(p, trail)

    walk(leaf_id, [])
    return frozenset(n for path in paths for n in path)


class TestSubgraph:
    def test_single_path(self, toy5):
        assert toy5.subgraph_of("L1").node_ids == {"L1", "B1", "R"}

    def test_other_branch(self, toy5):
        assert toy5.subgraph_of("L3").node_ids == {"L3", "B2", "R"}

    def test_diamond_uses_all_paths(self):
        ont = make_toy5(extra_edges=[("B2", "L1")])
        expected = brute_force_subgraph(ont, "L1")
        assert ont.subgraph_of("L1").node_ids == expected == {"L1", "B1", "B2", "R"}

    def test_unknown_vs_nonleaf_errors_differ(self, toy5):
        with pytest.raises(UnknownNodeError):
            toy5.subgraph_of("nope")
        with pytest.raises(NotALeafError):
            toy5.subgraph_of("B1")


class TestLeavesUnder:
    def test_branch(self, toy5):
        assert toy5.leaves_under("B1") == {"L1", "L2"}

    def test_leaf_is_itself(self, toy5):
        assert toy5.leaves_under("L3") == {"L3"}

    def test_root_covers_all(self, toy5):
        assert toy5.leaves_under("R") == {"L1", "L2", "L3"}

    def test_union_of_children(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            ont = random_dag(rng, int(rng.integers(5, 40)))
            for nid in ont.nodes:
                if ont.children(nid):
                    union = frozenset().union(
                        *(ont.leaves_under(c) for c in ont.children(nid))
                    )
                    assert ont.leaves_under(nid) == union


class TestValidate:
    def test_toy5_clean(self, toy5):
        assert toy5.validate() == []

    def test_cycle_reported_with_members(self, toy5):
        bad = make_toy5(extra_edges=[("L1", "R")])
        violations = bad.validate()
        cycles = [v for v in violations if v.code == "cycle"]
        assert cycles and {"R", "B1", "L1"} <= set(cycles[0].node_ids)

    def test_orphan_reported(self):
        nodes = [EventNode(nid, nid) for nid in ["R", "B1", "X"]]
        ont = Ontology(nodes, {("R", "B1"): "P279"}, "R")
        violations = ont.validate()
        assert any(v.code == "connectivity" and v.node_ids == ("X",) for v in violations)

    def test_random_dags_validate(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            assert random_dag(rng, int(rng.integers(2, 50))).validate() == []


class TestSerialization:
    def test_round_trip_identity(self, toy5):
        again = Ontology.from_bytes(toy5.to_bytes())
        assert again == toy5
        assert again.node_order == toy5.node_order
        assert again.content_hash() == toy5.content_hash()

    def test_round_trip_preserves_metadata(self):
        nodes = [
            EventNode("R", "root"),
            EventNode("A", "a", merged_ids=frozenset({"Z", "Y"})),
        ]
        ont = Ontology(nodes, {("R", "A"): "P279"}, "R", reduced=True)
        again = Ontology.from_bytes(ont.to_bytes())
        assert again.reduced is True
        assert again.nodes["A"].merged_ids == {"Z", "Y"}

    def test_unknown_kind_rejected(self, toy5):
        doc = toy5.to_json().replace('"kind": "leaf"', '"kind": "twig"', 1)
        with pytest.raises(SchemaError) as err:
            Ontology.from_bytes(doc.encode())
        assert "kind" in str(err.value)

    def test_stale_kind_rejected(self, toy5):
        doc = toy5.to_json().replace('"kind": "branch"', '"kind": "leaf"', 1)
        with pytest.raises(SchemaError):
            Ontology.from_bytes(doc.encode())

    def test_bad_node_order_rejected(self, toy5):
        doc = toy5.to_json().replace('"R",\n', "", 1)
        with pytest.raises(SchemaError):
            Ontology.from_bytes(doc.encode())

    def test_not_json(self):
        with pytest.raises(SchemaError):
            Ontology.from_bytes(b"not json at all")


class TestInvariants:
    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_subgraph_closed_under_parents(self, seed):
        rng = np.random.default_rng(seed)
        ont = random_dag(rng, int(rng.integers(2, 40)))
        for leaf in ont.leaf_order:
            members = ont.subgraph_of(leaf).node_ids
            assert leaf in members and ont.root_id in members
            for nid in members:
                assert set(ont.parents(nid)) <= members

    def test_node_order_custom_permutation_kept(self):
        ont = make_toy5(order=["L3", "R", "B2", "B1", "L1", "L2"])
        assert ont.node_order[0] == "L3"
        again = Ontology.from_bytes(ont.to_bytes())
        assert again.node_order == ont.node_order

    def test_kind_recomputed_not_trusted(self):
        # constructor input claims L1 is a branch; edges say leaf
        nodes = [EventNode("R", "r"), EventNode("L1", "l", kind="branch")]
        ont = Ontology(nodes, {("R", "L1"): "P279"}, "R")
        assert ont.nodes["L1"].kind == "leaf"
        assert ont.validate() == []
