"""HTTP surface tests: endpoint contracts, idempotency tokens, stale-revision
rejection, and parity between the service layer and the HTTP path."""

from __future__ import annotations

import pytest
from fastapi.testclient import TestClient

from weldwatch.config import UpdateConfig
from weldwatch.http_api import create_app
from weldwatch.mlp import TrainConfig
from weldwatch.service import MonitorService

FAST_UPDATE = UpdateConfig(
    train_cfg=TrainConfig(learning_rate=3e-3, epochs=60, shuffle_seed=7),
    freeze_hidden=1,
)


@pytest.fixture()
def client_service(fast_run, tmp_path):
    service = MonitorService.bootstrap(
        fast_run.model,
        fast_run.bank,
        fast_run.split.train_known,
        update_cfg=FAST_UPDATE,
        state_dir=tmp_path / "state",
    )
    return TestClient(create_app(service)), service


def _detect_payload(fast_run, n=None, token=None):
    records = fast_run.split.withheld_unknown.records
    if n is not None:
        records = records[:n]
    return {
        "request_token": token,
        "samples": [
            {
                "sample_id": r.sample_id,
                "features": [float(v) for v in r.features],
                "truth_label": r.label,
            }
            for r in records
        ],
    }


class TestReadEndpoints:
    def test_state(self, client_service):
        client, service = client_service
        body = client.get("/state").json()
        assert body["revision"] == 1
        assert body["counts"]["known_classes"] == len(service.state.label_map)
        assert body["counts"]["flagged"] == 0

    def test_metrics_initially_unavailable(self, client_service):
        client, _ = client_service
        body = client.get("/metrics").json()
        assert body["available"] is False

    def test_unknown_sample_404(self, client_service):
        client, _ = client_service
        assert client.get("/samples/nope").status_code == 404


class TestDetectEndpoint:
    def test_detect_flags_and_reports(self, client_service, fast_run):
        client, _ = client_service
        resp = client.post("/detect", json=_detect_payload(fast_run))
        assert resp.status_code == 200
        body = resp.json()
        assert body["revision"] == 2
        assert body["flagged_added"] > 0
        outcomes = {d["outcome"] for d in body["decisions"]}
        assert "unknown" in outcomes
        assert body["metrics"]["n_unknown"] == len(body["decisions"])

    def test_truth_unknown_flag(self, client_service, fast_run):
        client, _ = client_service
        payload = _detect_payload(fast_run, n=4)
        for s in payload["samples"]:
            s["truth_label"] = None
            s["truth_unknown"] = True
        body = client.post("/detect", json=payload).json()
        assert body["metrics"]["n_unknown"] == 4

    def test_invalid_features_rejected(self, client_service):
        client, _ = client_service
        resp = client.post(
            "/detect",
            json={"samples": [{"sample_id": "x", "features": [1.0]}]},
        )
        assert resp.status_code == 400

    def test_idempotent_token(self, client_service, fast_run):
        client, service = client_service
        payload = _detect_payload(fast_run, n=6, token="T1")
        first = client.post("/detect", json=payload).json()
        rev = service.state.revision
        second = client.post("/detect", json=payload).json()
        assert service.state.revision == rev
        assert second["replayed"] is True
        assert second["decisions"] == first["decisions"]


class TestClustersAndSamples:
    def test_clusters_listing(self, client_service, fast_run):
        client, _ = client_service
        client.post("/detect", json=_detect_payload(fast_run))
        body = client.get("/clusters").json()
        assert body["flagged_total"] > 0
        assert body["clusters"]
        sizes = [c["size"] for c in body["clusters"]]
        assert sum(sizes) == body["flagged_total"]
        member = body["clusters"][0]["members"][0]
        assert member["similarity"] is not None
        assert member["distance_to_centroid"] is not None

    def test_sample_detail(self, client_service, fast_run):
        client, _ = client_service
        client.post("/detect", json=_detect_payload(fast_run, n=3))
        sid = fast_run.split.withheld_unknown.records[0].sample_id
        body = client.get(f"/samples/{sid}").json()
        assert body["sample_id"] == sid
        assert body["decisions"]
        assert body["similarity"] is not None


class TestLabelsEndpoint:
    def _prepare(self, client, fast_run):
        client.post("/detect", json=_detect_payload(fast_run))
        return client.get("/clusters").json()

    def test_label_round_trip(self, client_service, fast_run):
        client, service = client_service
        clusters = self._prepare(client, fast_run)
        target = max(clusters["clusters"], key=lambda c: c["size"])
        n_classes = len(clusters["class_labels"])
        flagged = clusters["flagged_total"]
        resp = client.post(
            "/labels",
            json={
                "request_token": "L1",
                "expected_revision": clusters["revision"],
                "assignments": [{"cluster_id": target["cluster_id"], "label": "damaged_tool"}],
            },
        )
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["class_labels"]) == n_classes + 1
        assert body["flagged_total"] == flagged - target["size"]
        assert service.state.model.n_classes == n_classes + 1

    def test_resubmit_same_token_no_second_update(self, client_service, fast_run):
        client, service = client_service
        clusters = self._prepare(client, fast_run)
        target = clusters["clusters"][0]
        payload = {
            "request_token": "L2",
            "assignments": [{"cluster_id": target["cluster_id"], "label": "dup_fault"}],
        }
        first = client.post("/labels", json=payload).json()
        rev = service.state.revision
        second = client.post("/labels", json=payload).json()
        assert service.state.revision == rev
        assert second["replayed"] is True
        assert second["revision"] == first["revision"]

    def test_stale_revision_409(self, client_service, fast_run):
        client, _ = client_service
        clusters = self._prepare(client, fast_run)
        resp = client.post(
            "/labels",
            json={
                "request_token": "L3",
                "expected_revision": clusters["revision"] - 1,
                "assignments": [{"cluster_id": 0, "label": "x"}],
            },
        )
        assert resp.status_code == 409
        assert "stale" in resp.json()["detail"]

    def test_unknown_cluster_404(self, client_service, fast_run):
        client, _ = client_service
        self._prepare(client, fast_run)
        resp = client.post(
            "/labels",
            json={"request_token": "L4", "assignments": [{"cluster_id": 42, "label": "x"}]},
        )
        assert resp.status_code == 404

    def test_server_rejection_preserves_state(self, client_service, fast_run):
        client, service = client_service
        self._prepare(client, fast_run)
        state_before = service.state
        resp = client.post(
            "/labels",
            json={"request_token": "L5", "assignments": [{"cluster_id": 0, "label": ""}]},
        )
        assert resp.status_code == 400
        assert service.state is state_before


class TestUpdateEndpoint:
    def test_explicit_update_consumes_staged(self, client_service, fast_run):
        client, service = client_service
        client.post("/detect", json=_detect_payload(fast_run))
        clusters = client.get("/clusters").json()
        target = clusters["clusters"][0]
        client.post(
            "/labels",
            json={
                "request_token": "U1",
                "update": False,
                "assignments": [{"cluster_id": target["cluster_id"], "label": "later_fault"}],
            },
        )
        assert len(service.state.staged) == target["size"]
        resp = client.post("/update", json={"request_token": "U2", "epochs": 30}).json()
        assert resp["updated"] is True
        assert "later_fault" in resp["class_labels"]

    def test_parity_with_service_layer(self, client_service, fast_run):
        # detection via HTTP equals detection via the library on identical input
        client, service = client_service
        records = fast_run.split.withheld_unknown.records[:5]
        http_body = client.post("/detect", json=_detect_payload(fast_run, n=5)).json()
        from weldwatch.detector import detect_batch

        lib = detect_batch(
            service.state.bank,
            service.state.model,
            fast_run.split.withheld_unknown.feature_matrix()[:5],
        )
        for via_http, via_lib in zip(http_body["decisions"], lib):
            assert via_http["outcome"] == via_lib.outcome
            assert via_http["class_id"] == via_lib.class_id
            assert via_http["indicator"] == list(via_lib.indicator)
