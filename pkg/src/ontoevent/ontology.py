"""Event-type ontology: a rooted DAG of event nodes with provenance-typed edges.

Nodes are Wikidata-style entity ids. Edges point parent -> child; every node
must reach the single root by following child -> parent edges. Leaves are the
classification targets, branch nodes the groupings above them. Ontology values
are immutable after construction; all pipeline stages build new instances.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

KIND_ROOT = "root"
KIND_BRANCH = "branch"
KIND_LEAF = "leaf"
_KINDS = (KIND_ROOT, KIND_BRANCH, KIND_LEAF)

FORMAT_MARKER = "event-ontology/1"


class OntologyError(Exception):
    """Base class for ontology construction and query errors."""


class UnknownNodeError(OntologyError):
    def __init__(self, node_id: str):
        super().__init__(f"unknown node id: {node_id!r}")
        self.node_id = node_id


class NotALeafError(OntologyError):
    def __init__(self, node_id: str, kind: str):
        super().__init__(f"node {node_id!r} is not a leaf (kind={kind})")
        self.node_id = node_id
        self.kind = kind


class SchemaError(OntologyError):
    """Raised when a serialized ontology document violates the file schema.

    ``where`` locates the offending field, e.g. ``nodes[3].kind``.
    """

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


@dataclass(frozen=True)
class EventNode:
    """A single event type. ``kind`` is recomputed by the owning ontology."""

    id: str
    label: str
    kind: str = KIND_BRANCH
    merged_ids: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Subgraph:
    """All nodes on any upward path from ``leaf_id`` to the root, inclusive."""

    leaf_id: str
    node_ids: frozenset[str]


@dataclass(frozen=True)
class EventLink:
    """Maps a seed event to the ontology nodes it is linked to."""

    event_id: str
    node_ids: frozenset[str]


@dataclass(frozen=True)
class Violation:
    code: str  # "cycle" | "connectivity" | "kind" | "structure"
    message: str
    node_ids: tuple[str, ...] = ()


class Ontology:
    """Immutable rooted DAG over event nodes.

    ``edges`` maps (parent_id, child_id) to the provenance property that
    produced the edge. ``node_order`` is a frozen permutation of the node ids
    fixing every vector encoding; by default it is the ids sorted
    lexicographically, and it survives serialization round-trips unchanged.
    """

    def __init__(
        self,
        nodes: Iterable[EventNode],
        edges: Mapping[tuple[str, str], str],
        root_id: str,
        node_order: Iterable[str] | None = None,
        reduced: bool = False,
    ):
        by_id: dict[str, EventNode] = {}
        for node in nodes:
            if node.id in by_id:
                raise OntologyError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
        if root_id not in by_id:
            raise OntologyError(f"root id {root_id!r} not among nodes")
        self._edges: dict[tuple[str, str], str] = dict(edges)
        for parent, child in self._edges:
            if parent not in by_id or child not in by_id:
                raise OntologyError(f"edge ({parent!r}, {child!r}) references unknown node")

        self.root_id = root_id
        self.reduced = bool(reduced)

        children: dict[str, list[str]] = {nid: [] for nid in by_id}
        parents: dict[str, list[str]] = {nid: [] for nid in by_id}
        for parent, child in self._edges:
            children[parent].append(child)
            parents[child].append(parent)
        self._children = {nid: tuple(sorted(cs)) for nid, cs in children.items()}
        self._parents = {nid: tuple(sorted(ps)) for nid, ps in parents.items()}

        # kind is derived from the current edge set, never trusted from input
        self.nodes: dict[str, EventNode] = {}
        for nid, node in by_id.items():
            if nid == root_id:
                kind = KIND_ROOT
            elif self._children[nid]:
                kind = KIND_BRANCH
            else:
                kind = KIND_LEAF
            self.nodes[nid] = EventNode(nid, node.label, kind, frozenset(node.merged_ids))

        if node_order is None:
            order = tuple(sorted(by_id))
        else:
            order = tuple(node_order)
            if sorted(order) != sorted(by_id):
                raise OntologyError("node_order is not a permutation of the node ids")
        self.node_order: tuple[str, ...] = order
        self.leaf_order: tuple[str, ...] = tuple(
            nid for nid in order if self.nodes[nid].kind == KIND_LEAF
        )
        self._leaves_under: dict[str, frozenset[str]] = {}

    # -- basic queries ------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> EventNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def children(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._children[node_id]

    def parents(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._parents[node_id]

    def edges(self) -> dict[tuple[str, str], str]:
        return dict(self._edges)

    def edge_count(self) -> int:
        return len(self._edges)

    @property
    def leaf_ids(self) -> frozenset[str]:
        return frozenset(self.leaf_order)

    def kind_of(self, node_id: str) -> str:
        return self.node(node_id).kind

    # -- traversal ----------------------------------------------------------

    def ancestors_of(self, node_id: str) -> frozenset[str]:
        """All nodes reachable by repeatedly taking parents (excl. self)."""
        self.node(node_id)
        seen: set[str] = set()
        stack = list(self._parents[node_id])
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(self._parents[nid])
        return frozenset(seen)

    def descendants_of(self, node_id: str) -> frozenset[str]:
        """All nodes reachable by repeatedly taking children (excl. self)."""
        self.node(node_id)
        seen: set[str] = set()
        stack = list(self._children[node_id])
        while stack:
            nid = stack.pop()
            if nid in seen:
                continue
            seen.add(nid)
            stack.extend(self._children[nid])
        return frozenset(seen)

    def subgraph_of(self, leaf_id: str) -> Subgraph:
        """Union of every upward path from the leaf to the root, both ends included."""
        node = self.node(leaf_id)
        if node.kind != KIND_LEAF:
            raise NotALeafError(leaf_id, node.kind)
        return Subgraph(leaf_id, frozenset({leaf_id}) | self.ancestors_of(leaf_id))

    def leaves_under(self, node_id: str) -> frozenset[str]:
        """Leaf ids reachable downward from ``node_id`` (a leaf yields itself)."""
        node = self.node(node_id)
        cached = self._leaves_under.get(node_id)
        if cached is not None:
            return cached
        if node.kind == KIND_LEAF:
            result = frozenset({node_id})
        else:
            result = frozenset(
                nid for nid in self.descendants_of(node_id) if self.nodes[nid].kind == KIND_LEAF
            )
        self._leaves_under[node_id] = result
        return result

    def longest_depths(self) -> dict[str, int]:
        """Longest distance (edge count) from the root to every root-reachable node."""
        depth = {self.root_id: 0}
        order = self._topo_from_root()
        for nid in order:
            d = depth[nid]
            for child in self._children[nid]:
                if depth.get(child, -1) < d + 1:
                    depth[child] = d + 1
        return depth

    def _topo_from_root(self) -> list[str]:
        # Kahn's algorithm restricted to nodes reachable downward from root.
        reachable = {self.root_id} | self.descendants_of(self.root_id)
        indeg = {
            nid: sum(1 for p in self._parents[nid] if p in reachable) for nid in reachable
        }
        ready = sorted(nid for nid in reachable if indeg[nid] == 0)
        out: list[str] = []
        while ready:
            nid = ready.pop()
            out.append(nid)
            for child in self._children[nid]:
                if child in reachable:
                    indeg[child] -= 1
                    if indeg[child] == 0:
                        ready.append(child)
            ready.sort()
        return out

    # -- validation ---------------------------------------------------------

    def validate(self) -> list[Violation]:
        """Report acyclicity, root-connectivity, and kind-consistency violations."""
        violations: list[Violation] = []

        cycle = self._find_cycle()
        if cycle:
            violations.append(
                Violation("cycle", "cycle: " + " -> ".join(cycle), tuple(cycle))
            )

        connected = {self.root_id} | self.descendants_of(self.root_id)
        orphans = sorted(set(self.nodes) - connected)
        for nid in orphans:
            violations.append(
                Violation("connectivity", f"node {nid!r} has no path to root", (nid,))
            )

        for nid, node in self.nodes.items():
            if nid == self.root_id:
                expected = KIND_ROOT
            elif self._children[nid]:
                expected = KIND_BRANCH
            else:
                expected = KIND_LEAF
            if node.kind != expected:
                violations.append(
                    Violation("kind", f"node {nid!r} has kind {node.kind}, expected {expected}", (nid,))
                )
        return violations

    def _find_cycle(self) -> list[str] | None:
        color: dict[str, int] = {}  # 0 unseen, 1 on stack, 2 done
        parent_in_walk: dict[str, str] = {}
        for start in sorted(self.nodes):
            if color.get(start):
                continue
            stack: list[tuple[str, Iterator[str]]] = [(start, iter(self._children[start]))]
            color[start] = 1
            while stack:
                nid, it = stack[-1]
                advanced = False
                for child in it:
                    c = color.get(child, 0)
                    if c == 1:
                        # walk back from nid to child to list the cycle
                        cyc = [child, nid]
                        cur = nid
                        while parent_in_walk.get(cur) and parent_in_walk[cur] != child:
                            cur = parent_in_walk[cur]
                            cyc.append(cur)
                        cyc.reverse()
                        return cyc
                    if c == 0:
                        color[child] = 1
                        parent_in_walk[child] = nid
                        stack.append((child, iter(self._children[child])))
                        advanced = True
                        break
                if not advanced:
                    color[nid] = 2
                    stack.pop()
        return None

    # -- equality & hashing --------------------------------------------------

    def _canonical(self) -> dict:
        return {
            "format": FORMAT_MARKER,
            "root": self.root_id,
            "reduced": self.reduced,
            "node_order": list(self.node_order),
            "nodes": [
                {
                    "id": nid,
                    "label": self.nodes[nid].label,
                    "kind": self.nodes[nid].kind,
                    "merged_ids": sorted(self.nodes[nid].merged_ids),
                }
                for nid in self.node_order
            ],
            "edges": [
                [p, c, prov] for (p, c), prov in sorted(self._edges.items())
            ],
        }

    def __eq__(self, other) -> bool:
        return isinstance(other, Ontology) and self._canonical() == other._canonical()

    def content_hash(self) -> str:
        blob = json.dumps(self._canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    # -- serialization -------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self._canonical(), indent=1)

    def to_bytes(self) -> bytes:
        if self.validate():
            raise OntologyError("refusing to serialize an invalid ontology")
        return self.to_json().encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ontology":
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise SchemaError("document", f"not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc) -> "Ontology":
        if not isinstance(doc, dict):
            raise SchemaError("document", "expected a JSON object")
        if doc.get("format") != FORMAT_MARKER:
            raise SchemaError("format", f"expected {FORMAT_MARKER!r}, got {doc.get('format')!r}")
        for key in ("root", "nodes", "edges", "node_order"):
            if key not in doc:
                raise SchemaError(key, "missing required field")
        if not isinstance(doc["root"], str) or not doc["root"]:
            raise SchemaError("root", "must be a non-empty string")
        if not isinstance(doc.get("reduced", False), bool):
            raise SchemaError("reduced", "must be a boolean")

        nodes: list[EventNode] = []
        declared_kind: dict[str, str] = {}
        if not isinstance(doc["nodes"], list):
            raise SchemaError("nodes", "must be a list")
        for i, item in enumerate(doc["nodes"]):
            where = f"nodes[{i}]"
            if not isinstance(item, dict):
                raise SchemaError(where, "must be an object")
            nid = item.get("id")
            if not isinstance(nid, str) or not nid:
                raise SchemaError(f"{where}.id", "must be a non-empty string")
            label = item.get("label", nid)
            if not isinstance(label, str):
                raise SchemaError(f"{where}.label", "must be a string")
            kind = item.get("kind")
            if kind not in _KINDS:
                raise SchemaError(f"{where}.kind", f"unknown kind {kind!r}")
            merged = item.get("merged_ids", [])
            if not isinstance(merged, list) or not all(isinstance(m, str) for m in merged):
                raise SchemaError(f"{where}.merged_ids", "must be a list of strings")
            declared_kind[nid] = kind
            nodes.append(EventNode(nid, label, kind, frozenset(merged)))

        if not isinstance(doc["edges"], list):
            raise SchemaError("edges", "must be a list")
        edges: dict[tuple[str, str], str] = {}
        for i, item in enumerate(doc["edges"]):
            where = f"edges[{i}]"
            if not (isinstance(item, list) and len(item) == 3 and all(isinstance(x, str) for x in item)):
                raise SchemaError(where, "must be [parent, child, provenance]")
            edges[(item[0], item[1])] = item[2]

        if not isinstance(doc["node_order"], list) or not all(
            isinstance(x, str) for x in doc["node_order"]
        ):
            raise SchemaError("node_order", "must be a list of node ids")

        try:
            ont = cls(
                nodes,
                edges,
                root_id=doc["root"],
                node_order=doc["node_order"],
                reduced=doc.get("reduced", False),
            )
        except OntologyError as exc:
            raise SchemaError("document", str(exc)) from None

        for nid, kind in declared_kind.items():
            if ont.nodes[nid].kind != kind:
                raise SchemaError(
                    f"nodes[{list(declared_kind).index(nid)}].kind",
                    f"declared {kind!r} but edges imply {ont.nodes[nid].kind!r}",
                )
        return ont


# -- link (de)serialization ---------------------------------------------------


def links_to_lines(links: Iterable[EventLink], ontology_hash: str) -> str:
    """TSV dump: ``event_id<TAB>node,node,...`` with a hash header line."""
    out = [f"# ontology={ontology_hash}"]
    for link in sorted(links, key=lambda l: l.event_id):
        out.append(f"{link.event_id}\t{','.join(sorted(link.node_ids))}")
    return "\n".join(out) + "\n"


def links_from_lines(text: str) -> tuple[list[EventLink], str | None]:
    """Parse a links TSV dump; returns (links, ontology hash from header or None)."""
    links: list[EventLink] = []
    ont_hash: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("# ")
            if body.startswith("ontology="):
                ont_hash = body.split("=", 1)[1].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise SchemaError(f"line {lineno}", "expected event_id<TAB>node,node,...")
        targets = frozenset(t for t in parts[1].split(",") if t)
        if not targets:
            raise SchemaError(f"line {lineno}", "event has no link targets")
        links.append(EventLink(parts[0], targets))
    return links, ont_hash
