import json
import threading
import urllib.error
import urllib.request

import pytest

from ontoevent.ontology import Ontology
from ontoevent.server import SessionService, make_server


@pytest.fixture
def service(toy5, toy5_links, tmp_path):
    return SessionService(toy5, toy5_links, log_path=tmp_path / "session.log", annotator="t")


@pytest.fixture
def base_url(service):
    httpd = make_server(service, port=0)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    host, port = httpd.server_address[:2]
    yield f"http://{host}:{port}"
    httpd.shutdown()
    httpd.server_close()


def get(url):
    with urllib.request.urlopen(url, timeout=5) as resp:
        return resp.status, json.loads(resp.read().decode())


def post(url, payload):
    body = json.dumps(payload).encode()
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read().decode())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read().decode())


class TestEndpoints:
    def test_next_and_progress(self, base_url):
        status, payload = get(base_url + "/session/next")
        assert status == 200 and payload["done"] is False
        assert payload["node_id"] == "B1"
        status, progress = get(base_url + "/session/progress")
        assert progress == {"decided": 0, "remaining": 5, "total": 5}

    def test_decision_flow(self, base_url):
        status, summary = post(
            base_url + "/session/decision", {"node_id": "B1", "action": "select_leaf"}
        )
        assert status == 200
        assert set(summary["removed_candidates"]) == {"B1", "L1", "L2"}
        _, progress = get(base_url + "/session/progress")
        assert progress["decided"] == 1 and progress["remaining"] == 2

    def test_stale_decision_conflicts(self, base_url):
        post(base_url + "/session/decision", {"node_id": "B1", "action": "select_leaf"})
        status, payload = post(
            base_url + "/session/decision", {"node_id": "L1", "action": "select_leaf"}
        )
        assert status == 409
        assert "candidate" in payload["error"]

    def test_bad_action_rejected(self, base_url):
        status, _ = post(base_url + "/session/decision", {"node_id": "B1", "action": "zap"})
        assert status == 400

    def test_undo_round_trip(self, base_url):
        post(base_url + "/session/decision", {"node_id": "B1", "action": "select_leaf"})
        status, payload = post(base_url + "/session/undo", {})
        assert status == 200 and payload["undone"] == "B1"
        _, progress = get(base_url + "/session/progress")
        assert progress == {"decided": 0, "remaining": 5, "total": 5}

    def test_undo_empty_is_400(self, base_url):
        status, _ = post(base_url + "/session/undo", {})
        assert status == 400

    def test_context_endpoint(self, base_url):
        status, payload = get(base_url + "/ontology/context/B1")
        assert status == 200
        assert payload["kind"] == "branch"
        assert payload["children"] == ["L1", "L2"]
        assert payload["event_count"] == 3

    def test_context_unknown_404(self, base_url):
        try:
            get(base_url + "/ontology/context/NOPE")
            raise AssertionError("expected 404")
        except urllib.error.HTTPError as err:
            assert err.code == 404

    def test_export_requires_completion(self, base_url, toy5):
        try:
            get(base_url + "/session/export")
            raise AssertionError("expected 409")
        except urllib.error.HTTPError as err:
            assert err.code == 409
            assert json.loads(err.read().decode())["remaining"] == 5
        post(base_url + "/session/decision", {"node_id": "B1", "action": "select_leaf"})
        post(base_url + "/session/decision", {"node_id": "B2", "action": "select_leaf"})
        status, doc = get(base_url + "/session/export")
        assert status == 200
        exported = Ontology.from_dict(doc)
        assert exported.validate() == []
        assert set(exported.leaf_ids) == {"B1", "B2"}

    def test_unknown_route_404(self, base_url):
        try:
            get(base_url + "/nope")
            raise AssertionError("expected 404")
        except urllib.error.HTTPError as err:
            assert err.code == 404


class TestLogPersistence:
    def test_decisions_append_and_resume(self, toy5, toy5_links, tmp_path):
        log_path = tmp_path / "s.log"
        service = SessionService(toy5, toy5_links, log_path=log_path, annotator="kim")
        service.decide("B1", "select_leaf")
        service.decide("B2", "skip")
        service.undo()
        lines = log_path.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].endswith("kim\tB1\tselect_leaf")
        assert lines[2].endswith("\tB2\tundo")

        resumed = SessionService(toy5, toy5_links, log_path=log_path)
        assert resumed.session.derived_ontology == service.session.derived_ontology
        assert resumed.session.progress() == service.session.progress()
