"""Ontology construction pipeline.

Stages, each a pure function from (ontology, links) to new values:

1. ``build_initial``      bottom-up extraction from seed events and triples
2. ``disambiguate_sport`` re-parent sport-specific nodes under their sport
3. ``filter_min_events``  drop nodes backed by too few distinct events
4. ``apply_merges``       manual fusion of semantically equivalent nodes
5. ``remove_redundant``   collapse branch nodes that add no leaf information
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .kb import EventSeed, IngestError, TripleIndex
from .ontology import EventLink, EventNode, Ontology, OntologyError

log = logging.getLogger(__name__)


class BuildError(Exception):
    """Fatal pipeline problem (missing root, impossible merge, bad input)."""


@dataclass(frozen=True)
class BuildConfig:
    root_id: str = "Q1190554"
    event_properties: frozenset[str] = frozenset({"P31", "P361", "P279"})
    node_properties: frozenset[str] = frozenset({"P279"})
    sport_property: str = "P641"
    min_events: int = 10

    def __post_init__(self):
        if not self.root_id:
            raise ValueError("root_id must be non-empty")
        if self.min_events < 1:
            raise ValueError("min_events must be >= 1")

    @property
    def all_properties(self) -> frozenset[str]:
        return self.event_properties | self.node_properties | {self.sport_property}


@dataclass(frozen=True)
class MergeGroup:
    survivor: str
    absorbed: tuple[str, ...]


@dataclass(frozen=True)
class MergeList:
    groups: tuple[MergeGroup, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for group in self.groups:
            ids = {group.survivor, *group.absorbed}
            if group.survivor in group.absorbed:
                raise ValueError(f"survivor {group.survivor!r} absorbs itself")
            if seen & ids:
                raise ValueError(f"id(s) {sorted(seen & ids)} appear in two merge groups")
            seen |= ids


def load_merge_list(path: str | Path) -> MergeList:
    """Read ``survivor_id<TAB>absorbed_id`` pairs, grouped by survivor."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    grouped: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise IngestError(f"{path}:{lineno}: expected survivor<TAB>absorbed")
        grouped.setdefault(parts[0], []).append(parts[1])
    try:
        return MergeList(tuple(MergeGroup(s, tuple(a)) for s, a in grouped.items()))
    except ValueError as exc:
        raise IngestError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class OntologyStats:
    nodes: int
    leaves: int
    relations: int
    events_linked: int
    events_unambiguous: int

    def line(self) -> str:
        return (
            f"|N|={self.nodes} |N_L|={self.leaves} |R|={self.relations} "
            f"|E|={self.events_linked} |E^|={self.events_unambiguous}"
        )


# -- shared graph helpers -----------------------------------------------------


def _root_component(edges: dict[tuple[str, str], str], root_id: str) -> set[str]:
    """Nodes reachable downward from the root (== nodes with an upward root path)."""
    children: dict[str, list[str]] = {}
    for parent, child in edges:
        children.setdefault(parent, []).append(child)
    seen = {root_id}
    stack = [root_id]
    while stack:
        nid = stack.pop()
        for child in children.get(nid, ()):
            if child not in seen:
                seen.add(child)
                stack.append(child)
    return seen


def _break_cycles(
    edges: dict[tuple[str, str], str], root_id: str
) -> tuple[dict[tuple[str, str], str], list[tuple[str, str]]]:
    """Drop back-edges found by a deterministic DFS from the root.

    Children are visited in sorted order; whenever an edge closes a cycle
    (its target is on the current DFS stack) that edge — the one discovered
    when the cycle is found — is removed. Tree edges are never dropped, so
    root connectivity is preserved.
    """
    children: dict[str, list[str]] = {}
    for parent, child in edges:
        children.setdefault(parent, []).append(child)
    for cs in children.values():
        cs.sort()

    dropped: list[tuple[str, str]] = []
    color: dict[str, int] = {root_id: 1}  # 1 = on stack, 2 = done
    stack: list[tuple[str, iter]] = [(root_id, iter(children.get(root_id, ())))]
    while stack:
        nid, it = stack[-1]
        advanced = False
        for child in it:
            if (nid, child) in dropped:
                continue
            state = color.get(child, 0)
            if state == 1:
                dropped.append((nid, child))
                continue
            if state == 0:
                color[child] = 1
                stack.append((child, iter(children.get(child, ()))))
                advanced = True
                break
        if not advanced:
            color[nid] = 2
            stack.pop()
    if not dropped:
        return dict(edges), []
    kept = {pc: prov for pc, prov in edges.items() if pc not in set(dropped)}
    log.warning("dropped %d cycle-closing edge(s): %s", len(dropped), dropped)
    return kept, dropped


def _make_ontology(
    node_ids: Iterable[str],
    edges: dict[tuple[str, str], str],
    root_id: str,
    labels,
    merged: dict[str, frozenset[str]] | None = None,
    reduced: bool = False,
) -> Ontology:
    merged = merged or {}
    nodes = [
        EventNode(nid, labels(nid), merged_ids=merged.get(nid, frozenset()))
        for nid in sorted(set(node_ids) | {root_id})
    ]
    return Ontology(nodes, edges, root_id, reduced=reduced)


# -- stage 1: initial ontology -------------------------------------------------


def build_initial(
    seeds: Sequence[EventSeed], triples: TripleIndex, cfg: BuildConfig
) -> tuple[Ontology, list[EventLink]]:
    """Bottom-up extraction: one hop from each seed event, then transitively up.

    Seed events reach candidate nodes through ``event_properties``; nodes reach
    their parents through ``node_properties``. Only nodes with an upward path
    to the configured root are kept, and events are linked to their surviving
    first-hop nodes.
    """
    if not seeds:
        raise BuildError("no seed events")

    first_hop: dict[str, set[str]] = {}
    for seed in seeds:
        targets: set[str] = set()
        for prop in sorted(cfg.event_properties):
            targets.update(triples.objects(seed.event_id, prop))
        if targets:
            first_hop[seed.event_id] = targets

    # transitive upward closure over node properties
    edges: dict[tuple[str, str], str] = {}
    visited: set[str] = set()
    frontier = sorted(set().union(*first_hop.values())) if first_hop else []
    while frontier:
        nid = frontier.pop()
        if nid in visited:
            continue
        visited.add(nid)
        for prop in sorted(cfg.node_properties):
            for obj in triples.objects(nid, prop):
                edges[(obj, nid)] = prop
                if obj not in visited:
                    frontier.append(obj)

    all_nodes = visited | {obj for obj, _ in edges}
    if cfg.root_id not in all_nodes:
        raise BuildError(
            f"root {cfg.root_id!r} is not reachable from any seed event"
        )

    edges, _ = _break_cycles(edges, cfg.root_id)
    keep = _root_component(edges, cfg.root_id)
    kept_edges = {pc: prov for pc, prov in edges.items() if pc[0] in keep and pc[1] in keep}

    links = []
    for seed in seeds:
        targets = frozenset(first_hop.get(seed.event_id, ()) & keep)
        if targets:
            links.append(EventLink(seed.event_id, targets))

    ont = _make_ontology(keep, kept_edges, cfg.root_id, triples.label)
    log.info("initial ontology: %s", stats(ont, links).line())
    return ont, links


# -- stage 2: sport disambiguation ----------------------------------------------


def disambiguate_sport(
    ont: Ontology, links: Sequence[EventLink], triples: TripleIndex, cfg: BuildConfig
) -> tuple[Ontology, list[EventLink]]:
    """Re-parent every node (and re-link every event) that carries a sport value.

    A node with sport values loses all current parents and hangs directly
    under the sport nodes instead; an event with sport values is re-linked to
    them. Sport targets are connected upward through ``node_properties`` and
    any target that cannot reach the root is skipped and reported.
    """
    prop = cfg.sport_property
    node_sports = {
        nid: triples.objects(nid, prop)
        for nid in ont.nodes
        if nid != ont.root_id and triples.objects(nid, prop)
    }
    event_sports = {
        link.event_id: triples.objects(link.event_id, prop)
        for link in links
        if triples.objects(link.event_id, prop)
    }
    wanted = sorted(
        set().union(*node_sports.values(), *event_sports.values())
        if (node_sports or event_sports)
        else set()
    )
    if not wanted:
        return ont, list(links)

    node_ids = set(ont.nodes)
    edges = ont.edges()

    # Connect each sport upward until it meets the existing ontology.
    resolved: set[str] = set()
    for sport in wanted:
        if sport in node_ids:
            resolved.add(sport)
            continue
        closure_nodes = {sport}
        closure_edges: dict[tuple[str, str], str] = {}
        frontier = [sport]
        while frontier:
            nid = frontier.pop()
            for p in sorted(cfg.node_properties):
                for obj in triples.objects(nid, p):
                    closure_edges[(obj, nid)] = p
                    if obj not in closure_nodes:
                        closure_nodes.add(obj)
                        if obj not in node_ids:  # stop at anchor nodes
                            frontier.append(obj)
        anchors = closure_nodes & node_ids
        if not anchors:
            log.warning("sport %r has no path to the ontology; rewires skipped", sport)
            continue
        down: dict[str, list[str]] = {}
        for parent, child in closure_edges:
            down.setdefault(parent, []).append(child)
        connected = set(anchors)
        stack = sorted(anchors)
        while stack:
            nid = stack.pop()
            for child in down.get(nid, ()):
                if child not in connected:
                    connected.add(child)
                    stack.append(child)
        if sport not in connected:
            log.warning("sport %r has no path to the ontology; rewires skipped", sport)
            continue
        resolved.add(sport)
        node_ids |= connected
        for (parent, child), p in closure_edges.items():
            if parent in connected and child in connected and child not in ont.nodes:
                edges[(parent, child)] = p

    # Re-parent nodes. A sport value sitting below the node would close a
    # cycle, so such values are skipped per node.
    for nid in sorted(node_sports):
        below = ont.descendants_of(nid) if nid in ont.nodes else frozenset()
        valid = [s for s in node_sports[nid] if s in resolved and s != nid and s not in below]
        if not valid:
            skipped = [s for s in node_sports[nid] if s not in resolved or s == nid or s in below]
            if skipped:
                log.warning("node %r keeps its parents; unusable sport value(s) %s", nid, skipped)
            continue
        for pair in [pc for pc in edges if pc[1] == nid]:
            del edges[pair]
        for sport in valid:
            edges[(sport, nid)] = prop

    edges, _ = _break_cycles(edges, ont.root_id)
    keep = _root_component(edges, ont.root_id)
    kept_edges = {pc: p for pc, p in edges.items() if pc[0] in keep and pc[1] in keep}

    # Re-link events with usable sport values; everything else is untouched.
    new_links: list[EventLink] = []
    for link in links:
        sports = [s for s in event_sports.get(link.event_id, ()) if s in resolved and s in keep]
        if sports:
            new_links.append(EventLink(link.event_id, frozenset(sports)))
        else:
            new_links.append(link)

    merged = {nid: ont.nodes[nid].merged_ids for nid in ont.nodes if nid in keep}

    def label(nid: str) -> str:
        if nid in ont.nodes:
            return ont.nodes[nid].label
        return triples.label(nid)

    new_ont = _make_ontology(keep, kept_edges, ont.root_id, label, merged)
    log.info("after sport disambiguation: %s", stats(new_ont, new_links).line())
    return new_ont, new_links


# -- stage 3: minimum-event filter ----------------------------------------------


def filter_min_events(
    ont: Ontology, links: Sequence[EventLink], cfg: BuildConfig
) -> tuple[Ontology, list[EventLink]]:
    """Remove every non-root node backed by fewer than ``min_events`` events.

    A node is backed by every distinct event linked to it or to any of its
    descendants, counted once per node. Counts grow monotonically toward the
    root, so the removed set is downward-closed and survivors keep all their
    parents. Events linked to a removed node re-link to its nearest surviving
    ancestors (the root at worst).
    """
    backing: dict[str, set[int]] = {}
    for idx, link in enumerate(links):
        for target in link.node_ids:
            if target not in ont:
                continue
            backing.setdefault(target, set()).add(idx)
            for anc in ont.ancestors_of(target):
                backing.setdefault(anc, set()).add(idx)

    keep = {ont.root_id} | {
        nid for nid in ont.nodes if len(backing.get(nid, ())) >= cfg.min_events
    }
    kept_edges = {
        pc: prov for pc, prov in ont.edges().items() if pc[0] in keep and pc[1] in keep
    }

    nearest: dict[str, frozenset[str]] = {}

    def surviving_frontier(nid: str) -> frozenset[str]:
        if nid in nearest:
            return nearest[nid]
        found: set[str] = set()
        for parent in ont.parents(nid):
            if parent in keep:
                found.add(parent)
            else:
                found |= surviving_frontier(parent)
        result = frozenset(found)
        nearest[nid] = result
        return result

    new_links: list[EventLink] = []
    for link in links:
        targets: set[str] = set()
        for t in link.node_ids:
            if t not in ont:
                continue
            if t in keep:
                targets.add(t)
            else:
                targets |= surviving_frontier(t)
        if targets:
            new_links.append(EventLink(link.event_id, frozenset(targets)))

    merged = {nid: ont.nodes[nid].merged_ids for nid in keep}
    new_ont = _make_ontology(
        keep, kept_edges, ont.root_id, lambda nid: ont.nodes[nid].label, merged
    )
    log.info("after min-event filter (>=%d): %s", cfg.min_events, stats(new_ont, new_links).line())
    return new_ont, new_links


# -- stage 4: manual merges -------------------------------------------------------


def apply_merges(
    ont: Ontology, links: Sequence[EventLink], merge_list: MergeList
) -> tuple[Ontology, list[EventLink]]:
    """Fuse each absorbed node into its survivor.

    The absorbed node's parents, children, and event links transfer to the
    survivor, and its id (plus anything it had absorbed before) is recorded in
    the survivor's ``merged_ids``. Any merge whose edge transfer would close a
    cycle — merging a node into its own parent or child always does — is
    rejected with a diagnostic.
    """
    id_map: dict[str, str] = {}
    for group in merge_list.groups:
        for node_id in (group.survivor, *group.absorbed):
            if node_id not in ont:
                raise BuildError(f"merge references unknown node {node_id!r}")
        if ont.root_id in group.absorbed:
            raise BuildError("the root node cannot be absorbed")
        for absorbed in group.absorbed:
            id_map[absorbed] = group.survivor

    if not id_map:
        return ont, list(links)

    edges: dict[tuple[str, str], str] = {}
    for (parent, child), prov in sorted(ont.edges().items()):
        p = id_map.get(parent, parent)
        c = id_map.get(child, child)
        if p == c:
            raise BuildError(
                f"merge rejected: edge {parent!r} -> {child!r} becomes a self-loop on {p!r}"
            )
        edges.setdefault((p, c), prov)

    merged: dict[str, frozenset[str]] = {
        nid: ont.nodes[nid].merged_ids for nid in ont.nodes if nid not in id_map
    }
    for group in merge_list.groups:
        extra: set[str] = set()
        for absorbed in group.absorbed:
            extra.add(absorbed)
            extra |= ont.nodes[absorbed].merged_ids
        merged[group.survivor] = merged[group.survivor] | extra

    keep = set(ont.nodes) - set(id_map)
    new_ont = _make_ontology(
        keep, edges, ont.root_id, lambda nid: ont.nodes[nid].label, merged
    )
    cycle = new_ont._find_cycle()
    if cycle:
        raise BuildError(f"merge rejected: would create cycle {' -> '.join(cycle)}")

    new_links = [
        EventLink(l.event_id, frozenset(id_map.get(t, t) for t in l.node_ids)) for l in links
    ]
    log.info("after %d merge group(s): %s", len(merge_list.groups), stats(new_ont, new_links).line())
    return new_ont, new_links


# -- stage 5: redundancy removal ---------------------------------------------------


def remove_redundant(
    ont: Ontology, links: Sequence[EventLink] | None = None
) -> tuple[Ontology, list[EventLink] | None]:
    """Collapse every branch node whose reachable-leaf set equals a child's.

    Such a node adds no leaf information: one of its children already covers
    exactly the same leaves. Removal splices the node out (its parents connect
    directly to its children), which preserves the reachable-leaf set of every
    surviving node, so the criterion can be evaluated in one pass from the
    deepest node upward; ties are broken by node id. The result carries
    ``reduced=True`` and is a fixpoint: a second application changes nothing.

    When ``links`` are given, events linked to a removed node follow it into
    the equal-leaf child that made it redundant.
    """
    if ont.validate():
        raise BuildError("remove_redundant requires a valid ontology")

    depth = ont.longest_depths()
    order = sorted(ont.nodes, key=lambda nid: (-depth[nid], nid))
    children: dict[str, set[str]] = {nid: set(ont.children(nid)) for nid in ont.nodes}
    parents: dict[str, set[str]] = {nid: set(ont.parents(nid)) for nid in ont.nodes}
    prov = ont.edges()
    leaf_set = {nid: ont.leaves_under(nid) for nid in ont.nodes}

    replaced_by: dict[str, str] = {}
    for nid in order:
        if nid == ont.root_id or not children[nid]:
            continue
        equal = next(
            (c for c in sorted(children[nid]) if leaf_set[c] == leaf_set[nid]), None
        )
        if equal is None:
            continue
        replaced_by[nid] = equal
        for p in parents[nid]:
            children[p].discard(nid)
        for c in children[nid]:
            parents[c].discard(nid)
        for p in parents[nid]:
            for c in children[nid]:
                if c not in children[p]:
                    children[p].add(c)
                    parents[c].add(p)
                    prov.setdefault((p, c), prov[(p, nid)])
        del children[nid], parents[nid]

    keep = set(children)
    edges = {
        (p, c): prov[(p, c)] for p in keep for c in children[p]
    }
    merged = {nid: ont.nodes[nid].merged_ids for nid in keep}
    new_ont = _make_ontology(
        keep, edges, ont.root_id, lambda nid: ont.nodes[nid].label, merged, reduced=True
    )

    def survivor(nid: str) -> str:
        while nid in replaced_by:
            nid = replaced_by[nid]
        return nid

    new_links = None
    if links is not None:
        new_links = [
            EventLink(l.event_id, frozenset(survivor(t) if t in replaced_by else t for t in l.node_ids))
            for l in links
        ]
    log.info("redundancy removal: %d -> %d nodes", len(ont), len(new_ont))
    return new_ont, new_links


# -- statistics ---------------------------------------------------------------------


def stats(ont: Ontology, links: Sequence[EventLink]) -> OntologyStats:
    """Node, leaf, relation, and event-link counts for an ontology."""
    linked = 0
    unambiguous = 0
    for link in links:
        targets = [t for t in link.node_ids if t in ont]
        if not targets:
            continue
        linked += 1
        reachable_leaves: set[str] = set()
        for t in targets:
            reachable_leaves |= ont.leaves_under(t)
        if len(reachable_leaves) == 1:
            unambiguous += 1
    return OntologyStats(
        nodes=len(ont),
        leaves=len(ont.leaf_order),
        relations=ont.edge_count(),
        events_linked=linked,
        events_unambiguous=unambiguous,
    )
