"""Human-in-the-loop refinement sessions with hierarchical decision propagation.

A session walks an annotator through the candidate nodes of an ontology.
Selecting a node as a leaf collapses its whole subtree into it and confirms
its ancestors as branch nodes; rejecting a node removes it together with every
descendant left without a root path. Either way many candidates disappear per
decision, which is what keeps the annotation count far below the node count.

Sessions are append-only decision logs: the derived ontology is always the
deterministic replay of the log over the base ontology, so crashes are
recoverable and undo is just "pop and replay".
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

from .ontology import EventLink, EventNode, Ontology

ACTION_SELECT = "select_leaf"
ACTION_REJECT = "reject"
ACTION_SKIP = "skip"
ACTIONS = (ACTION_SELECT, ACTION_REJECT, ACTION_SKIP)
UNDO_MARKER = "undo"


class RefinementError(Exception):
    pass


class NotACandidateError(RefinementError):
    def __init__(self, node_id: str):
        super().__init__(f"node {node_id!r} is not an open candidate")
        self.node_id = node_id


class SessionIncompleteError(RefinementError):
    def __init__(self, remaining: int):
        super().__init__(f"{remaining} candidates remain")
        self.remaining = remaining


@dataclass(frozen=True)
class Decision:
    node_id: str
    action: str
    annotator: str = ""
    timestamp: float = 0.0


@dataclass(frozen=True)
class CandidateView:
    node_id: str
    label: str
    kind: str
    ancestors: list[str]
    children: list[str]
    event_count: int
    descendant_count: int
    rank: int


@dataclass(frozen=True)
class PropagationSummary:
    decision: Decision
    removed_candidates: list[str]
    removed_nodes: list[str]

    def to_dict(self) -> dict:
        return {
            "node_id": self.decision.node_id,
            "action": self.decision.action,
            "removed_candidates": self.removed_candidates,
            "removed_nodes": self.removed_nodes,
        }


def _rebuild(
    ont: Ontology, keep: set[str], edges: dict, merged: dict[str, frozenset[str]]
) -> Ontology:
    nodes = [
        EventNode(nid, ont.nodes[nid].label, merged_ids=merged.get(nid, ont.nodes[nid].merged_ids))
        for nid in keep
    ]
    return Ontology(nodes, edges, ont.root_id, reduced=ont.reduced)


class RefinementSession:
    """Mutable session state; one writer at a time, replay-deterministic."""

    def __init__(self, base_ontology: Ontology, base_links: Sequence[EventLink]):
        if base_ontology.validate():
            raise RefinementError("refinement requires a valid base ontology")
        self.base_ontology = base_ontology
        self.base_links = list(base_links)
        self.decisions: list[Decision] = []
        self._lock = threading.Lock()
        self._reset_derived()

    def _reset_derived(self) -> None:
        self._derived: tuple[Ontology, list[EventLink]] = (
            self.base_ontology,
            list(self.base_links),
        )
        self.candidates: set[str] = set(self.base_ontology.nodes) - {self.base_ontology.root_id}
        self.total_candidates = len(self.candidates)
        self._skip_gen: dict[str, int] = {}
        self._skip_counter = 0

    def snapshot(self) -> tuple[Ontology, list[EventLink]]:
        """Consistent (ontology, links) pair; never a half-applied decision."""
        return self._derived

    @property
    def derived_ontology(self) -> Ontology:
        return self._derived[0]

    @property
    def derived_links(self) -> list[EventLink]:
        return self._derived[1]

    # -- ordering -------------------------------------------------------------

    def _priority_key(self, node_id: str):
        return (
            self._skip_gen.get(node_id, 0),
            -len(self.derived_ontology.descendants_of(node_id)),
            node_id,
        )

    def _ordered_candidates(self) -> list[str]:
        return sorted(self.candidates, key=self._priority_key)

    def is_complete(self) -> bool:
        return not self.candidates

    def next_candidate(self) -> CandidateView | None:
        """Highest-priority open candidate, or None when the session is done.

        Nodes with more descendants come first (deciding them propagates the
        most), ties go to the smaller id, and skipped nodes drop to the end of
        the queue in skip order.
        """
        with self._lock:
            if not self.candidates:
                return None
            ordered = self._ordered_candidates()
            node_id = ordered[0]
            return self._view(node_id, rank=1)

    def _view(self, node_id: str, rank: int) -> CandidateView:
        ont = self.derived_ontology
        node = ont.node(node_id)
        chain: list[str] = []
        cursor = node_id
        while cursor != ont.root_id:
            parents = ont.parents(cursor)
            if not parents:
                break
            cursor = min(parents)
            chain.append(ont.nodes[cursor].label)
        children = [ont.nodes[c].label for c in ont.children(node_id)[:10]]
        covered = {node_id} | ont.descendants_of(node_id)
        event_count = sum(
            1 for link in self.derived_links if link.node_ids & covered
        )
        return CandidateView(
            node_id=node_id,
            label=node.label,
            kind=node.kind,
            ancestors=chain,
            children=children,
            event_count=event_count,
            descendant_count=len(covered) - 1,
            rank=rank,
        )

    # -- decisions --------------------------------------------------------------

    def decide(self, node_id: str, action: str, annotator: str = "", timestamp: float | None = None) -> PropagationSummary:
        """Apply one decision and return what it swept out of the candidate set."""
        if action not in ACTIONS:
            raise RefinementError(f"unknown action {action!r}")
        with self._lock:
            if node_id not in self.candidates:
                raise NotACandidateError(node_id)
            decision = Decision(
                node_id, action, annotator, time.time() if timestamp is None else timestamp
            )
            summary = self._apply(decision)
            self.decisions.append(decision)
            return summary

    def _apply(self, decision: Decision) -> PropagationSummary:
        if decision.action == ACTION_SKIP:
            self._skip_counter += 1
            self._skip_gen[decision.node_id] = self._skip_counter
            return PropagationSummary(decision, [], [])
        if decision.action == ACTION_SELECT:
            return self._apply_select(decision)
        return self._apply_reject(decision)

    def _apply_select(self, decision: Decision) -> PropagationSummary:
        ont = self.derived_ontology
        nid = decision.node_id
        collapsed = ont.descendants_of(nid)
        confirmed = ont.ancestors_of(nid)

        keep = set(ont.nodes) - collapsed
        edges = {
            pc: prov
            for pc, prov in ont.edges().items()
            if pc[0] in keep and pc[1] in keep
        }
        # A collapsed node may hang under a parent outside the selected
        # subtree (shared child in a DAG); keep that parent connected to the
        # absorbed content.
        for (parent, child), prov in ont.edges().items():
            if child in collapsed and parent in keep and parent != nid:
                if parent not in confirmed and parent != nid:
                    edges.setdefault((parent, nid), prov)

        absorbed = set(collapsed)
        for cid in collapsed:
            absorbed |= ont.nodes[cid].merged_ids
        merged = {nid: ont.nodes[nid].merged_ids | frozenset(absorbed)}

        new_links = []
        for link in self.derived_links:
            targets = frozenset(nid if t in collapsed else t for t in link.node_ids)
            new_links.append(EventLink(link.event_id, targets))
        self._derived = (_rebuild(ont, keep, edges, merged), new_links)

        swept = ({nid} | collapsed | confirmed) & self.candidates
        self.candidates -= swept
        return PropagationSummary(decision, sorted(swept), sorted(collapsed))

    def _apply_reject(self, decision: Decision) -> PropagationSummary:
        ont = self.derived_ontology
        nid = decision.node_id
        remaining = set(ont.nodes) - {nid}
        edges = {
            pc: prov
            for pc, prov in ont.edges().items()
            if pc[0] in remaining and pc[1] in remaining
        }
        # descendants survive only where another root path exists
        children: dict[str, list[str]] = {}
        for parent, child in edges:
            children.setdefault(parent, []).append(child)
        connected = {ont.root_id}
        stack = [ont.root_id]
        while stack:
            cursor = stack.pop()
            for child in children.get(cursor, ()):
                if child not in connected:
                    connected.add(child)
                    stack.append(child)
        removed = set(ont.nodes) - connected
        edges = {
            pc: prov for pc, prov in edges.items() if pc[0] in connected and pc[1] in connected
        }
        new_links = []
        for link in self.derived_links:
            targets = frozenset(t for t in link.node_ids if t not in removed)
            if targets:
                new_links.append(EventLink(link.event_id, targets))
        self._derived = (_rebuild(ont, connected, edges, {}), new_links)

        swept = removed & self.candidates
        self.candidates -= swept
        return PropagationSummary(decision, sorted(swept), sorted(removed))

    def undo(self) -> Decision:
        """Pop the last decision and replay the remaining log from the base."""
        with self._lock:
            if not self.decisions:
                raise RefinementError("nothing to undo")
            undone = self.decisions.pop()
            log = self.decisions
            self.decisions = []
            self._reset_derived()
            for decision in log:
                if decision.node_id not in self.candidates:
                    raise RefinementError(
                        f"log replay failed: {decision.node_id!r} not a candidate"
                    )
                self._apply(decision)
                self.decisions.append(decision)
            return undone

    # -- completion ---------------------------------------------------------------

    def progress(self) -> dict:
        with self._lock:
            return {
                "decided": len(self.decisions),
                "remaining": len(self.candidates),
                "total": self.total_candidates,
            }

    def finalize(self) -> tuple[Ontology, list[EventLink]]:
        """The refined ontology and links; only for completed sessions."""
        with self._lock:
            if self.candidates:
                raise SessionIncompleteError(len(self.candidates))
            violations = self.derived_ontology.validate()
            if violations:
                raise RefinementError(f"derived ontology invalid: {violations}")
            return self.derived_ontology, list(self.derived_links)

    # -- log (de)serialization -------------------------------------------------------

    def log_lines(self) -> list[str]:
        return [
            f"{d.timestamp:.6f}\t{d.annotator}\t{d.node_id}\t{d.action}"
            for d in self.decisions
        ]

    @classmethod
    def replay(
        cls,
        base_ontology: Ontology,
        base_links: Sequence[EventLink],
        lines: Sequence[str],
    ) -> "RefinementSession":
        """Rebuild a session from log lines; ``undo`` marker lines pop the log."""
        session = cls(base_ontology, base_links)
        for lineno, raw in enumerate(lines, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise RefinementError(f"log line {lineno}: expected 4 tab-separated fields")
            ts, annotator, node_id, action = parts
            if action == UNDO_MARKER:
                session.undo()
                continue
            if action not in ACTIONS:
                raise RefinementError(f"log line {lineno}: unknown action {action!r}")
            try:
                stamp = float(ts)
            except ValueError:
                raise RefinementError(f"log line {lineno}: bad timestamp {ts!r}") from None
            session.decide(node_id, action, annotator, stamp)
        return session
