import numpy as np
import pytest

from ontoevent.ontology import EventLink, EventNode, Ontology

TOY_ORDER = ["R", "B1", "B2", "L1", "L2", "L3"]


def make_toy5(extra_edges=(), order=TOY_ORDER) -> Ontology:
    """Root R; branches B1, B2 under R; leaves L1, L2 under B1; L3 under B2."""
    edges = {
        ("R", "B1"): "P279",
        ("R", "B2"): "P279",
        ("B1", "L1"): "P279",
        ("B1", "L2"): "P279",
        ("B2", "L3"): "P279",
    }
    for parent, child in extra_edges:
        edges[(parent, child)] = "P279"
    nodes = [EventNode(nid, f"label {nid}") for nid in order]
    return Ontology(nodes, edges, "R", node_order=order)


@pytest.fixture
def toy5() -> Ontology:
    return make_toy5()


@pytest.fixture
def toy5_links(toy5) -> list[EventLink]:
    return [
        EventLink("e1", frozenset({"L1"})),
        EventLink("e2", frozenset({"L2"})),
        EventLink("e3", frozenset({"L3"})),
        EventLink("e4", frozenset({"B1"})),
    ]


def random_dag(rng: np.random.Generator, n_nodes: int, p_extra_parent: float = 0.3) -> Ontology:
    """Rooted DAG: node i attaches to one earlier node, sometimes two."""
    ids = [f"N{i:03d}" for i in range(n_nodes)]
    edges: dict[tuple[str, str], str] = {}
    for i in range(1, n_nodes):
        parent = ids[int(rng.integers(0, i))]
        edges[(parent, ids[i])] = "P279"
        if i > 1 and rng.random() < p_extra_parent:
            other = ids[int(rng.integers(0, i))]
            if other != parent:
                edges[(other, ids[i])] = "P279"
    nodes = [EventNode(nid, nid) for nid in ids]
    return Ontology(nodes, edges, ids[0])


def random_tree(rng: np.random.Generator, n_nodes: int) -> Ontology:
    return random_dag(rng, n_nodes, p_extra_parent=0.0)
