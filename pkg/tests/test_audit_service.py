"""Adjudication API: item flow, judgment validation, export, tables."""

from __future__ import annotations

import json

import pytest
from fastapi.testclient import TestClient

from critic_loop.audit import JudgmentJournal, sample_positives
from critic_loop.gateway import DecodingConfig, make_scripted_provider
from critic_loop.pipeline import run_stage_one
from critic_loop.prompts import RELEVANCE_ARGUMENT
from critic_loop.service import AuditService, create_app
from critic_loop.store import RunStore, config_digest_of, make_tick_clock
from tests.conftest import make_corpus
from tests.test_pipeline import build_script


@pytest.fixture
def setup(small_codebook, tmp_path):
    corpus = make_corpus(20)
    keys = {(p.id, "alpha") for p in corpus}
    store = RunStore.open(tmp_path / "run", config_digest_of({"t": "svc"}), clock=make_tick_clock())
    script = build_script(corpus, small_codebook, keys)
    run_stage_one(corpus, small_codebook, make_scripted_provider(script), store,
                  DecodingConfig(model_id="m"))
    batch = sample_positives(store, "alpha", 8, seed=5)
    service = AuditService(
        batches={batch.batch_id: batch},
        journal=JudgmentJournal(tmp_path / "judgments.jsonl"),
        codebook=small_codebook,
        corpus=corpus,
    )
    return service, batch


def client_for(service, token=None) -> TestClient:
    return TestClient(create_app(service, token=token))


class TestBatchListing:
    def test_lists_batches_with_progress(self, setup):
        service, batch = setup
        client = client_for(service)
        rows = client.get("/api/batches").json()
        assert rows == [
            {"batch_id": batch.batch_id, "code_id": "alpha", "total": 8, "judged": 0}
        ]


class TestNextItem:
    def test_serves_passage_definition_and_rationale(self, setup):
        service, batch = setup
        client = client_for(service)
        payload = client.get(f"/api/batches/{batch.batch_id}/next?rater=r1").json()
        assert payload["done"] is False
        item = payload["item"]
        assert item["passage_id"] == batch.items[0].passage_id
        assert item["code"]["title"] == "Alpha"
        assert item["code"]["exclusions"]
        assert item["rationale"] == batch.items[0].rationale
        assert "passage" in item["basis_notice"].lower()
        assert payload["progress"] == {"judged": 0, "total": 8}

    def test_advances_after_judgment_and_resumes(self, setup):
        service, batch = setup
        client = client_for(service)
        for k in range(3):
            item = client.get(f"/api/batches/{batch.batch_id}/next?rater=r1").json()["item"]
            assert item["passage_id"] == batch.items[k].passage_id
            response = client.post(
                f"/api/batches/{batch.batch_id}/judgments",
                json={"passage_id": item["passage_id"], "valid": True, "rater_id": "r1"},
            )
            assert response.status_code == 200
        payload = client.get(f"/api/batches/{batch.batch_id}/next?rater=r1").json()
        assert payload["progress"] == {"judged": 3, "total": 8}
        assert payload["item"]["passage_id"] == batch.items[3].passage_id

    def test_done_when_batch_exhausted(self, setup):
        service, batch = setup
        client = client_for(service)
        for item in batch.items:
            client.post(
                f"/api/batches/{batch.batch_id}/judgments",
                json={"passage_id": item.passage_id, "valid": True, "rater_id": "r1"},
            )
        payload = client.get(f"/api/batches/{batch.batch_id}/next?rater=r1").json()
        assert payload["done"] is True
        assert payload["item"] is None

    def test_raters_are_isolated(self, setup):
        service, batch = setup
        client = client_for(service)
        client.post(
            f"/api/batches/{batch.batch_id}/judgments",
            json={"passage_id": batch.items[0].passage_id, "valid": True, "rater_id": "r1"},
        )
        other = client.get(f"/api/batches/{batch.batch_id}/next?rater=r2").json()
        assert other["item"]["passage_id"] == batch.items[0].passage_id

    def test_unknown_batch_404(self, setup):
        service, _ = setup
        assert client_for(service).get("/api/batches/nope/next").status_code == 404


class TestSubmitJudgment:
    def test_invalid_without_class_is_422(self, setup):
        service, batch = setup
        client = client_for(service)
        response = client.post(
            f"/api/batches/{batch.batch_id}/judgments",
            json={"passage_id": batch.items[0].passage_id, "valid": False},
        )
        assert response.status_code == 422
        assert "error class" in response.json()["detail"]

    def test_valid_with_class_is_422(self, setup):
        service, batch = setup
        client = client_for(service)
        response = client.post(
            f"/api/batches/{batch.batch_id}/judgments",
            json={
                "passage_id": batch.items[0].passage_id,
                "valid": True,
                "error_classes": [RELEVANCE_ARGUMENT],
            },
        )
        assert response.status_code == 422

    def test_unknown_passage_is_422(self, setup):
        service, batch = setup
        response = client_for(service).post(
            f"/api/batches/{batch.batch_id}/judgments",
            json={"passage_id": "stranger", "valid": True},
        )
        assert response.status_code == 422

    def test_submission_echoes_stored_record(self, setup):
        service, batch = setup
        client = client_for(service)
        body = {
            "passage_id": batch.items[0].passage_id,
            "valid": False,
            "error_classes": [RELEVANCE_ARGUMENT],
            "notes": "debates the criterion",
            "rater_id": "r9",
        }
        stored = client.post(f"/api/batches/{batch.batch_id}/judgments", json=body).json()
        assert stored["stored"] is True
        assert stored["judgment"]["error_classes"] == [RELEVANCE_ARGUMENT]
        assert stored["judgment"]["notes"] == "debates the criterion"


class TestExport:
    def test_export_round_trips_submissions(self, setup):
        service, batch = setup
        client = client_for(service)
        submitted = []
        for i, item in enumerate(batch.items[:4]):
            body = {
                "passage_id": item.passage_id,
                "valid": i % 2 == 0,
                "error_classes": [] if i % 2 == 0 else [RELEVANCE_ARGUMENT],
                "rater_id": "r1",
            }
            client.post(f"/api/batches/{batch.batch_id}/judgments", json=body)
            submitted.append(body)
        text = client.get(f"/api/batches/{batch.batch_id}/export").text
        lines = [json.loads(l) for l in text.strip().splitlines()]
        assert len(lines) == 4
        by_pid = {l["passage_id"]: l for l in lines}
        for body in submitted:
            record = by_pid[body["passage_id"]]
            assert record["valid"] == body["valid"]
            assert record["error_classes"] == body["error_classes"]

    def test_resubmission_exports_latest_only(self, setup):
        service, batch = setup
        client = client_for(service)
        pid = batch.items[0].passage_id
        for notes in ("first", "second"):
            client.post(
                f"/api/batches/{batch.batch_id}/judgments",
                json={"passage_id": pid, "valid": True, "notes": notes, "rater_id": "r1"},
            )
        text = client.get(f"/api/batches/{batch.batch_id}/export").text
        lines = [json.loads(l) for l in text.strip().splitlines()]
        assert len(lines) == 1
        assert lines[0]["notes"] == "second"


class TestErrorRatesEndpoint:
    def test_rates_reflect_judgments(self, setup):
        service, batch = setup
        client = client_for(service)
        for i, item in enumerate(batch.items):
            client.post(
                f"/api/batches/{batch.batch_id}/judgments",
                json={
                    "passage_id": item.passage_id,
                    "valid": i >= 2,
                    "error_classes": [] if i >= 2 else [RELEVANCE_ARGUMENT],
                    "rater_id": "r1",
                },
            )
        rows = client.get("/api/tables/error-rates").json()["rows"]
        assert rows == [
            {
                "code_id": "alpha",
                "md_rate": 0.25,
                "mi_rate": 0.0,
                "total_rate": 0.25,
                "n": 8,
            }
        ]


class TestBearerToken:
    def test_token_required_when_configured(self, setup):
        service, batch = setup
        client = client_for(service, token="hunter2")
        assert client.get("/api/batches").status_code == 401
        ok = client.get("/api/batches", headers={"Authorization": "Bearer hunter2"})
        assert ok.status_code == 200
