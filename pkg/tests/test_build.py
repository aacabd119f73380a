import numpy as np
import pytest

from conftest import make_toy5, random_dag
from ontoevent.build import (
    BuildConfig,
    BuildError,
    MergeGroup,
    MergeList,
    apply_merges,
    build_initial,
    disambiguate_sport,
    filter_min_events,
    load_merge_list,
    remove_redundant,
    stats,
)
from ontoevent.kb import EventSeed, TripleIndex
from ontoevent.ontology import EventLink, EventNode, Ontology


def index_from(triples: list[tuple[str, str, str]]) -> TripleIndex:
    by_sp: dict[tuple[str, str], set[str]] = {}
    for s, p, o in triples:
        by_sp.setdefault((s, p), set()).add(o)
    return TripleIndex({k: tuple(sorted(v)) for k, v in by_sp.items()})


def seeds_from(ids: list[str]) -> list[EventSeed]:
    return [EventSeed(i, f"event {i}") for i in ids]


CFG = BuildConfig(root_id="R", min_events=10)


class TestBuildInitial:
    def test_one_hop_chain(self):
        triples = index_from([("e1", "P31", "B1"), ("B1", "P279", "R")])
        ont, links = build_initial(seeds_from(["e1"]), triples, CFG)
        assert set(ont.nodes) == {"R", "B1"}
        assert links == [EventLink("e1", frozenset({"B1"}))]

    def test_dead_end_pruned(self):
        triples = index_from(
            [("e1", "P31", "B1"), ("B1", "P279", "R"), ("e2", "P31", "X"), ("X", "P279", "Y")]
        )
        ont, links = build_initial(seeds_from(["e1", "e2"]), triples, CFG)
        assert "X" not in ont and "Y" not in ont
        assert [l.event_id for l in links] == ["e1"]

    def test_missing_root_fatal(self):
        triples = index_from([("e1", "P31", "B1")])
        with pytest.raises(BuildError):
            build_initial(seeds_from(["e1"]), triples, CFG)

    def test_diamond_matches_reachability_oracle(self):
        raw = [
            ("e1", "P31", "A"),
            ("e2", "P31", "B"),
            ("e3", "P361", "C"),
            ("e4", "P279", "D"),
            ("e5", "P31", "X"),
            ("A", "P279", "C"),
            ("B", "P279", "C"),
            ("A", "P279", "D"),
            ("C", "P279", "R"),
            ("D", "P279", "R"),
            ("X", "P279", "Y"),
        ]
        triples = index_from(raw)
        seeds = seeds_from(["e1", "e2", "e3", "e4", "e5"])
        ont, links = build_initial(seeds, triples, CFG)

        # oracle: explicit closure over the raw triple list
        up = {}
        for s, p, o in raw:
            if p == "P279":
                up.setdefault(s, set()).add(o)

        def up_closure(nid):
            seen, stack = set(), [nid]
            while stack:
                cur = stack.pop()
                for parent in up.get(cur, ()):
                    if parent not in seen:
                        seen.add(parent)
                        stack.append(parent)
            return seen

        first_hops = {"A", "B", "C", "D", "X"}
        closure = set(first_hops)
        for hop in first_hops:
            closure |= up_closure(hop)
        expected = {n for n in closure if n == "R" or "R" in up_closure(n)}
        assert set(ont.nodes) == expected == {"R", "A", "B", "C", "D"}
        assert {l.event_id: set(l.node_ids) for l in links} == {
            "e1": {"A"}, "e2": {"B"}, "e3": {"C"}, "e4": {"D"},
        }
        assert ont.validate() == []

    def test_cycle_in_dump_broken(self):
        triples = index_from(
            [
                ("e1", "P31", "A"),
                ("A", "P279", "B"),
                ("B", "P279", "A"),
                ("B", "P279", "R"),
            ]
        )
        ont, _ = build_initial(seeds_from(["e1"]), triples, CFG)
        assert ont.validate() == []
        assert {"A", "B", "R"} <= set(ont.nodes)


def sport_fixture():
    nodes = [EventNode(n, n) for n in ["R", "CMP", "TS", "VTS", "FTS", "WTS"]]
    edges = {
        ("R", "CMP"): "P279",
        ("CMP", "TS"): "P279",
        ("TS", "VTS"): "P279",
        ("TS", "FTS"): "P279",
        ("TS", "WTS"): "P279",
    }
    ont = Ontology(nodes, edges, "R")
    links = [
        EventLink("e_v", frozenset({"VTS"})),
        EventLink("e_f", frozenset({"FTS"})),
        EventLink("e_w", frozenset({"WTS"})),
    ]
    triples = index_from(
        [
            ("VTS", "P641", "VB"),
            ("WTS", "P641", "VB"),
            ("FTS", "P641", "FB"),
            ("e_f", "P641", "FB"),
            ("VB", "P279", "SPORT"),
            ("FB", "P279", "SPORT"),
            ("SPORT", "P279", "R"),
        ]
    )
    return ont, links, triples


class TestDisambiguateSport:
    def test_reparents_under_sport(self):
        ont, links, triples = sport_fixture()
        new_ont, _ = disambiguate_sport(ont, links, triples, CFG)
        assert new_ont.parents("VTS") == ("VB",)
        assert new_ont.parents("VB") == ("SPORT",)
        assert new_ont.validate() == []

    def test_without_sport_value_unchanged(self):
        ont, links, triples = sport_fixture()
        new_ont, _ = disambiguate_sport(ont, links, triples, CFG)
        assert new_ont.parents("TS") == ("CMP",)  # no P641 on TS

    def test_shared_sport_groups_leaves(self):
        ont, links, triples = sport_fixture()
        new_ont, _ = disambiguate_sport(ont, links, triples, CFG)
        # oracle: the sport's reachable leaves are exactly the rewired nodes
        assert new_ont.leaves_under("VB") == {"VTS", "WTS"}

    def test_event_relinked_by_its_sport(self):
        ont, links, triples = sport_fixture()
        _, new_links = disambiguate_sport(ont, links, triples, CFG)
        by_id = {l.event_id: set(l.node_ids) for l in new_links}
        assert by_id["e_f"] == {"FB"}
        assert by_id["e_v"] == {"VTS"}

    def test_linked_event_set_is_invariant(self):
        ont, links, triples = sport_fixture()
        _, new_links = disambiguate_sport(ont, links, triples, CFG)
        assert {l.event_id for l in new_links} == {l.event_id for l in links}

    def test_unconnected_sport_skipped(self):
        ont, links, _ = sport_fixture()
        triples = index_from([("VTS", "P641", "ORPHAN")])
        new_ont, new_links = disambiguate_sport(ont, links, triples, CFG)
        assert "ORPHAN" not in new_ont
        assert new_ont.parents("VTS") == ("TS",)
        assert new_links == list(links)


def count_oracle(ont: Ontology, links, node_id: str) -> int:
    """Brute force: distinct events linked anywhere at or below the node."""
    covered = {node_id}
    stack = [node_id]
    while stack:
        for child in ont.children(stack.pop()):
            if child not in covered:
                covered.add(child)
                stack.append(child)
    return sum(1 for link in links if set(link.node_ids) & covered)


class TestFilterMinEvents:
    def test_sparse_node_removed_and_relinked(self, toy5):
        links = [EventLink(f"e{i}", frozenset({"L1"})) for i in range(3)]
        cfg = BuildConfig(root_id="R", min_events=10)
        new_ont, new_links = filter_min_events(toy5, links, cfg)
        assert "L1" not in new_ont
        # events walk up to the nearest survivor (the root here)
        assert all(l.node_ids == {"R"} for l in new_links)
        assert len(new_links) == 3

    def test_boundary_is_strict_less_than(self, toy5):
        links = [EventLink(f"e{i}", frozenset({"L1"})) for i in range(10)]
        cfg = BuildConfig(root_id="R", min_events=10)
        new_ont, _ = filter_min_events(toy5, links, cfg)
        assert "L1" in new_ont and "B1" in new_ont

    def test_random_fixture_matches_count_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(15):
            ont = random_dag(rng, int(rng.integers(6, 30)))
            ids = sorted(ont.nodes)
            links = [
                EventLink(
                    f"e{i}",
                    frozenset(rng.choice(ids, size=int(rng.integers(1, 3)), replace=False)),
                )
                for i in range(40)
            ]
            m = int(rng.integers(2, 8))
            cfg = BuildConfig(root_id=ont.root_id, min_events=m)
            new_ont, _ = filter_min_events(ont, links, cfg)
            expected = {ont.root_id} | {
                n for n in ont.nodes if count_oracle(ont, links, n) >= m
            }
            assert set(new_ont.nodes) == expected
            assert new_ont.validate() == []

    def test_monotone_in_threshold(self, toy5, toy5_links):
        sizes = []
        for m in (1, 2, 3, 5):
            cfg = BuildConfig(root_id="R", min_events=m)
            new_ont, _ = filter_min_events(toy5, toy5_links, cfg)
            sizes.append(set(new_ont.nodes))
        for smaller, larger in zip(sizes[1:], sizes):
            assert smaller <= larger


class TestApplyMerges:
    def test_absorb_unions_links_and_records_ids(self, toy5):
        links = [
            EventLink("e1", frozenset({"L1"})),
            EventLink("e2", frozenset({"L2"})),
        ]
        merges = MergeList((MergeGroup("L1", ("L2",)),))
        new_ont, new_links = apply_merges(toy5, links, merges)
        assert "L2" not in new_ont
        assert new_ont.nodes["L1"].merged_ids == {"L2"}
        assert all(l.node_ids == {"L1"} for l in new_links)
        assert new_ont.validate() == []

    def test_empty_merge_list_is_identity(self, toy5, toy5_links):
        new_ont, new_links = apply_merges(toy5, toy5_links, MergeList(()))
        assert new_ont == toy5
        assert new_links == toy5_links

    def test_parent_into_child_rejected(self, toy5):
        merges = MergeList((MergeGroup("L1", ("B1",)),))
        with pytest.raises(BuildError, match="cycle|self-loop"):
            apply_merges(toy5, [], merges)

    def test_unknown_id_rejected(self, toy5):
        with pytest.raises(BuildError, match="unknown"):
            apply_merges(toy5, [], MergeList((MergeGroup("L1", ("ZZ",)),)))

    def test_merge_list_file(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("A\tB\nA\tC\nD\tE\n", encoding="utf-8")
        merges = load_merge_list(path)
        assert merges.groups == (MergeGroup("A", ("B", "C")), MergeGroup("D", ("E",)))

    def test_duplicate_id_across_groups_rejected(self):
        with pytest.raises(ValueError):
            MergeList((MergeGroup("A", ("B",)), MergeGroup("B", ("C",))))


def redundancy_oracle(ont: Ontology) -> set[str]:
    """Naive fixpoint: rescan in frozen deep-first order, splice one at a time."""
    depth = ont.longest_depths()
    frozen = sorted(ont.nodes, key=lambda n: (-depth[n], n))
    children = {n: set(ont.children(n)) for n in ont.nodes}
    parents = {n: set(ont.parents(n)) for n in ont.nodes}
    present = set(ont.nodes)

    def leafset(nid: str) -> frozenset[str]:
        seen: set[str] = set()
        found: set[str] = set()
        stack = [nid]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            if not children[cur]:
                found.add(cur)
            stack.extend(children[cur])
        return frozenset(found)

    while True:
        target = None
        for nid in frozen:
            if nid not in present or nid == ont.root_id or not children[nid]:
                continue
            mine = leafset(nid)
            if any(leafset(c) == mine for c in children[nid]):
                target = nid
                break
        if target is None:
            return present
        for p in parents[target]:
            children[p].discard(target)
        for c in children[target]:
            parents[c].discard(target)
        for p in parents[target]:
            for c in children[target]:
                children[p].add(c)
                parents[c].add(p)
        present.discard(target)
        children.pop(target)
        parents.pop(target)


class TestRemoveRedundant:
    def test_toy5_drops_single_child_branch(self, toy5):
        reduced, _ = remove_redundant(toy5)
        assert "B2" not in reduced and "B1" in reduced
        assert reduced.reduced is True
        assert set(redundancy_oracle(toy5)) == set(reduced.nodes)

    def test_chain_collapses_to_root_leaf(self):
        nodes = [EventNode(n, n) for n in ["R", "A", "B", "L"]]
        edges = {("R", "A"): "P279", ("A", "B"): "P279", ("B", "L"): "P279"}
        ont = Ontology(nodes, edges, "R")
        reduced, _ = remove_redundant(ont)
        assert set(reduced.nodes) == {"R", "L"} == redundancy_oracle(ont)
        assert reduced.edges() == {("R", "L"): "P279"}

    def test_matches_oracle_on_random_dags(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            ont = random_dag(rng, int(rng.integers(4, 35)))
            reduced, _ = remove_redundant(ont)
            assert set(reduced.nodes) == redundancy_oracle(ont)

    def test_preserves_leaf_reachability_and_is_idempotent(self):
        rng = np.random.default_rng(29)
        for _ in range(15):
            ont = random_dag(rng, int(rng.integers(4, 35)))
            reduced, _ = remove_redundant(ont)
            for nid in reduced.nodes:
                assert reduced.leaves_under(nid) == ont.leaves_under(nid)
            assert reduced.leaf_ids == ont.leaf_ids
            again, _ = remove_redundant(reduced)
            assert again == reduced

    def test_links_follow_removed_nodes(self, toy5):
        links = [EventLink("e1", frozenset({"B2"}))]
        reduced, new_links = remove_redundant(toy5, links)
        assert new_links == [EventLink("e1", frozenset({"L3"}))]


class TestStats:
    def test_toy5_counts(self, toy5, toy5_links):
        record = stats(toy5, toy5_links)
        assert (record.nodes, record.leaves, record.relations) == (6, 3, 5)
        assert record.events_linked == 4
        # e1, e2, e3 resolve to single leaves; e4 links to B1 covering two
        assert record.events_unambiguous == 3

    def test_empty_links(self, toy5):
        record = stats(toy5, [])
        assert record.events_linked == 0 and record.events_unambiguous == 0


def test_pipeline_stages_keep_ontology_valid():
    rng = np.random.default_rng(31)
    for _ in range(10):
        ont = random_dag(rng, int(rng.integers(6, 30)))
        ids = sorted(ont.nodes)
        links = [
            EventLink(f"e{i}", frozenset({ids[int(rng.integers(0, len(ids)))]}))
            for i in range(30)
        ]
        cfg = BuildConfig(root_id=ont.root_id, min_events=3)
        ont2, links2 = filter_min_events(ont, links, cfg)
        assert ont2.validate() == []
        ont3, _ = remove_redundant(ont2, links2)
        assert ont3.validate() == []
