"""HTTP front door for a refinement session.

Endpoints (JSON bodies):

* ``GET  /session/next``          next candidate view, or ``{"done": true}``
* ``POST /session/decision``      ``{"node_id": ..., "action": ...}``
* ``POST /session/undo``
* ``GET  /session/progress``      ``{"decided", "remaining", "total"}``
* ``GET  /ontology/context/<id>`` node, ancestors, children, event count
* ``GET  /session/export``        refined ontology document (complete sessions)

Decisions on nodes that are no longer candidates answer 409 so a stale client
can refetch instead of double-submitting. Decisions append to the session log
file as they happen (undo appends an ``undo`` marker), and an existing log is
replayed on startup, so a crashed service resumes where it stopped.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

from .ontology import EventLink, Ontology
from .refinement import (
    ACTIONS,
    UNDO_MARKER,
    NotACandidateError,
    RefinementError,
    RefinementSession,
    SessionIncompleteError,
)

log = logging.getLogger(__name__)


class SessionService:
    """Session plus its append-only on-disk log."""

    def __init__(
        self,
        ontology: Ontology,
        links: Sequence[EventLink],
        log_path: str | Path | None = None,
        annotator: str = "",
    ):
        self.annotator = annotator
        self.log_path = Path(log_path) if log_path else None
        if self.log_path and self.log_path.exists():
            lines = self.log_path.read_text(encoding="utf-8").splitlines()
            self.session = RefinementSession.replay(ontology, links, lines)
            log.info("resumed session with %d decision(s)", len(self.session.decisions))
        else:
            self.session = RefinementSession(ontology, links)
        self._log_lock = threading.Lock()

    def _append_log(self, line: str) -> None:
        if not self.log_path:
            return
        with self._log_lock:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def decide(self, node_id: str, action: str) -> dict:
        summary = self.session.decide(node_id, action, annotator=self.annotator)
        decision = summary.decision
        self._append_log(
            f"{decision.timestamp:.6f}\t{decision.annotator}\t{decision.node_id}\t{decision.action}"
        )
        return summary.to_dict()

    def undo(self) -> dict:
        undone = self.session.undo()
        self._append_log(f"{undone.timestamp:.6f}\t{self.annotator}\t{undone.node_id}\t{UNDO_MARKER}")
        return {"undone": undone.node_id, "action": undone.action}


class _Handler(BaseHTTPRequestHandler):
    service: SessionService  # set by make_server
    ui_dir: Path | None = None

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s " + fmt, self.address_string(), *args)

    # -- helpers ---------------------------------------------------------------

    def _send_json(self, payload, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self._cors()
        self.end_headers()
        self.wfile.write(body)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            parsed = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError("body is not valid JSON")
        if not isinstance(parsed, dict):
            raise ValueError("body must be a JSON object")
        return parsed

    # -- routes ------------------------------------------------------------------

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.end_headers()

    def do_GET(self):
        session = self.service.session
        if self.path == "/session/next":
            view = session.next_candidate()
            if view is None:
                self._send_json({"done": True})
            else:
                self._send_json({"done": False, **asdict(view)})
        elif self.path == "/session/progress":
            self._send_json(session.progress())
        elif self.path == "/session/export":
            try:
                ontology, _ = session.finalize()
            except SessionIncompleteError as exc:
                self._send_json({"error": str(exc), "remaining": exc.remaining}, 409)
                return
            body = ontology.to_bytes()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            self.end_headers()
            self.wfile.write(body)
        elif self.path.startswith("/ontology/context/"):
            node_id = self.path.rsplit("/", 1)[1]
            ont, links = session.snapshot()
            if node_id not in ont:
                self._send_json({"error": f"unknown node {node_id!r}"}, 404)
                return
            node = ont.node(node_id)
            covered = {node_id} | ont.descendants_of(node_id)
            events = sum(1 for l in links if l.node_ids & covered)
            self._send_json(
                {
                    "id": node_id,
                    "label": node.label,
                    "kind": node.kind,
                    "ancestors": sorted(ont.ancestors_of(node_id)),
                    "children": list(ont.children(node_id)),
                    "event_count": events,
                }
            )
        elif self.ui_dir is not None:
            self._serve_static()
        else:
            self._send_json({"error": "not found"}, 404)

    def do_POST(self):
        try:
            body = self._read_body()
        except ValueError as exc:
            self._send_json({"error": str(exc)}, 400)
            return
        if self.path == "/session/decision":
            node_id = body.get("node_id")
            action = body.get("action")
            if not isinstance(node_id, str) or action not in ACTIONS:
                self._send_json({"error": "need node_id and a valid action"}, 400)
                return
            try:
                summary = self.service.decide(node_id, action)
            except NotACandidateError as exc:
                self._send_json({"error": str(exc)}, 409)
                return
            self._send_json(summary)
        elif self.path == "/session/undo":
            try:
                self._send_json(self.service.undo())
            except RefinementError as exc:
                self._send_json({"error": str(exc)}, 400)
        else:
            self._send_json({"error": "not found"}, 404)

    # -- optional static UI ---------------------------------------------------------

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript; charset=utf-8",
        ".css": "text/css; charset=utf-8",
        ".map": "application/json",
    }

    def _serve_static(self) -> None:
        name = self.path.lstrip("/") or "index.html"
        target = (self.ui_dir / name).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, 404)
            return
        body = target.read_bytes()
        self.send_response(200)
        self.send_header(
            "Content-Type", self._CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        )
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    service: SessionService,
    host: str = "127.0.0.1",
    port: int = 0,
    ui_dir: str | Path | None = None,
) -> ThreadingHTTPServer:
    """Build the HTTP server; ``port=0`` picks a free port (see ``server_port``)."""
    handler = type("BoundHandler", (_Handler,), {
        "service": service,
        "ui_dir": Path(ui_dir) if ui_dir else None,
    })
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(server: ThreadingHTTPServer) -> None:
    host, port = server.server_address[:2]
    print(f"refinement service listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
