import pytest
from fastapi.testclient import TestClient

from idclean import load_manifest, load_removal_list
from idclean.cleaning import VerdictLog
from idclean.outliers import build_report
from idclean.scoring import score_all
from idclean.service import PLACEHOLDER_PNG, ReviewSession, create_app


@pytest.fixture()
def session(tmp_path, planted):
    manifest, embeddings, truth = planted
    scores = score_all(manifest, embeddings)
    report = build_report(scores, manifest, embeddings, fraction=0.03)
    sess = ReviewSession(
        report=report,
        manifest=manifest,
        verdicts=VerdictLog(tmp_path / "verdicts.jsonl"),
        image_root=None,
        out_dir=tmp_path / "out",
        scores=scores,
        embeddings=embeddings,
    )
    return sess, truth, tmp_path


@pytest.fixture()
def client(session):
    sess, truth, tmp_path = session
    return TestClient(create_app(sess)), sess, truth, tmp_path


class TestQueueAndDetail:
    def test_queue_lists_flagged_with_status(self, client):
        c, sess, truth, _ = client
        rows = c.get("/api/queue").json()
        assert len(rows) == 3
        assert {r["identity_id"] for r in rows} == set(truth.contaminated)
        assert all(r["status"] == "pending" for r in rows)
        scores = [r["id_score"] for r in rows]
        assert scores == sorted(scores, reverse=True)

    def test_identity_detail(self, client):
        c, sess, truth, _ = client
        ident = sess.report.entries[0].identity_id
        detail = c.get(f"/api/identity/{ident}").json()
        assert detail["identity_id"] == ident
        assert len(detail["samples"]) == sess.report.entries[0].sample_count
        assert detail["flagged_pairs"]
        assert not detail["no_specific_pair"]
        queued = {s["sample_id"] for s in detail["samples"] if s["in_queue"]}
        assert queued == set(detail["review_queue"])
        assert detail["effective_verdict"] is None

    def test_unknown_identity_404(self, client):
        c, *_ = client
        assert c.get("/api/identity/nope").status_code == 404

    def test_empty_queue_banner_flag(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03,
                              pair_threshold=1e9)
        sess = ReviewSession(report=report, manifest=manifest,
                             verdicts=VerdictLog(), out_dir=tmp_path)
        c = TestClient(create_app(sess))
        ident = report.entries[0].identity_id
        detail = c.get(f"/api/identity/{ident}").json()
        assert detail["no_specific_pair"]
        assert detail["flagged_pairs"] == []
        assert detail["review_queue"] == []


class TestVerdicts:
    def test_post_then_done_and_durable(self, client):
        c, sess, truth, tmp_path = client
        ident = sess.report.entries[0].identity_id
        entry = sess.report.entries[0]
        body = {
            "identity_id": ident,
            "mislabel_type": "TYPE_A",
            "removed_samples": entry.review_queue,
            "reviewer": "tester",
        }
        r = c.post("/api/verdict", json=body)
        assert r.status_code == 200
        assert r.json()["ok"] is True
        # durable before the response: the log file already holds the record
        log_lines = (tmp_path / "verdicts.jsonl").read_text().splitlines()
        assert len(log_lines) == 1
        rows = {x["identity_id"]: x for x in c.get("/api/queue").json()}
        assert rows[ident]["status"] == "done"
        detail = c.get(f"/api/identity/{ident}").json()
        assert detail["effective_verdict"]["mislabel_type"] == "TYPE_A"

    def test_unknown_identity_rejected_log_untouched(self, client):
        c, sess, _, tmp_path = client
        r = c.post("/api/verdict", json={"identity_id": "ghost", "mislabel_type": "TYPE_B"})
        assert r.status_code == 404
        assert not (tmp_path / "verdicts.jsonl").exists()

    def test_bad_type_rejected(self, client):
        c, sess, *_ = client
        ident = sess.report.entries[0].identity_id
        r = c.post("/api/verdict", json={"identity_id": ident, "mislabel_type": "TYPE_Z"})
        assert r.status_code == 400

    def test_high_variation_with_samples_rejected(self, client):
        c, sess, *_ = client
        e = sess.report.entries[0]
        r = c.post("/api/verdict", json={
            "identity_id": e.identity_id,
            "mislabel_type": "HIGH_VARIATION",
            "removed_samples": e.review_queue,
        })
        assert r.status_code == 400

    def test_foreign_sample_rejected(self, client):
        c, sess, *_ = client
        e0, e1 = sess.report.entries[0], sess.report.entries[1]
        r = c.post("/api/verdict", json={
            "identity_id": e0.identity_id,
            "mislabel_type": "TYPE_A",
            "removed_samples": e1.review_queue[:1],
        })
        assert r.status_code == 400

    def test_supersede(self, client):
        c, sess, *_ = client
        ident = sess.report.entries[1].identity_id
        c.post("/api/verdict", json={"identity_id": ident, "mislabel_type": "TYPE_B"})
        c.post("/api/verdict", json={"identity_id": ident,
                                     "mislabel_type": "HIGH_VARIATION"})
        detail = c.get(f"/api/identity/{ident}").json()
        assert detail["effective_verdict"]["mislabel_type"] == "HIGH_VARIATION"
        progress = c.get("/api/progress").json()
        assert progress == {"pending": 2, "done": 1, "total": 3}


class TestApply:
    def _review_all(self, c, sess, truth):
        for e in sess.report.entries:
            c.post("/api/verdict", json={
                "identity_id": e.identity_id,
                "mislabel_type": "TYPE_A",
                "removed_samples": truth.contaminated[e.identity_id],
            })

    def test_apply_writes_outputs_and_census(self, client):
        c, sess, truth, tmp_path = client
        self._review_all(c, sess, truth)
        r = c.post("/api/apply", json={"min_remaining": 3})
        assert r.status_code == 200
        census = r.json()
        assert census["samples_before"] - census["samples_after"] == 6
        assert census["identities_before"] == census["identities_after"]
        assert census["flagged_identities"] == 3
        cleaned = load_manifest(sess.out_dir / "cleaned_manifest.csv")
        assert cleaned.sample_count == census["samples_after"]
        removals = load_removal_list(sess.out_dir / "removals.csv")
        assert len(removals) == 6

    def test_apply_without_verdicts_rejected(self, client):
        c, *_ = client
        assert c.post("/api/apply", json={}).status_code == 400

    def test_high_variation_only_changes_nothing(self, client):
        c, sess, truth, _ = client
        ident = sess.report.entries[0].identity_id
        c.post("/api/verdict", json={"identity_id": ident,
                                     "mislabel_type": "HIGH_VARIATION"})
        census = c.post("/api/apply", json={}).json()
        assert census["samples_before"] == census["samples_after"]
        cleaned = load_manifest(sess.out_dir / "cleaned_manifest.csv")
        assert cleaned.sample_count == sess.manifest.sample_count

    def test_single_flight(self, session):
        sess, truth, _ = session
        app = create_app(sess)
        c = TestClient(app)
        e = sess.report.entries[0]
        c.post("/api/verdict", json={
            "identity_id": e.identity_id,
            "mislabel_type": "TYPE_A",
            "removed_samples": truth.contaminated[e.identity_id],
        })
        # hold the single-flight lock as if another apply were in flight
        app.state.apply_lock.acquire()
        try:
            r = c.post("/api/apply", json={})
            assert r.status_code == 409
        finally:
            app.state.apply_lock.release()
        assert c.post("/api/apply", json={}).status_code == 200


class TestReportsAndImages:
    def test_histogram_endpoint(self, client):
        c, *_ = client
        data = c.get("/api/report/histogram", params={"bins": 10}).json()
        assert len(data["bins"]) == 10
        assert data["total"] == 100

    def test_roc_endpoint(self, client):
        c, *_ = client
        data = c.get("/api/report/roc", params={"negatives": 500, "seed": 4}).json()
        assert 0.9 <= data["auc"] <= 1.0
        assert data["negatives"] == 500

    def test_roc_missing_embeddings_404(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03)
        sess = ReviewSession(report=report, manifest=manifest,
                             verdicts=VerdictLog(), out_dir=tmp_path)
        c = TestClient(create_app(sess))
        assert c.get("/api/report/roc").status_code == 404
        assert c.get("/api/report/histogram").status_code == 404

    def test_placeholder_for_missing_images(self, client):
        c, sess, *_ = client
        sample = sess.manifest.samples[0].sample_id
        r = c.get(f"/img/{sample}")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content == PLACEHOLDER_PNG

    def test_unknown_sample_404(self, client):
        c, *_ = client
        assert c.get("/img/ghost").status_code == 404

    def test_real_image_served(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        scores = score_all(manifest, embeddings)
        report = build_report(scores, manifest, embeddings, fraction=0.03)
        root = tmp_path / "imgs"
        rec = manifest.samples[0]
        target = root / rec.image_path
        target.parent.mkdir(parents=True)
        target.write_bytes(b"\xff\xd8\xffjpegdata")
        sess = ReviewSession(report=report, manifest=manifest, verdicts=VerdictLog(),
                             image_root=root, out_dir=tmp_path)
        c = TestClient(create_app(sess))
        r = c.get(f"/img/{rec.sample_id}")
        assert r.content == b"\xff\xd8\xffjpegdata"
        assert r.headers["content-type"] == "image/jpeg"

    def test_path_traversal_rejected(self, tmp_path, planted):
        manifest, embeddings, _ = planted
        from idclean.dataset_io import SampleRecord, build_manifest

        sneaky = build_manifest(
            list(manifest.samples) + [SampleRecord("evil", "id0000", "../../etc/passwd", 0)]
        )
        scores = score_all(sneaky, embeddings)
        report = build_report(scores, sneaky, embeddings, fraction=0.03)
        root = tmp_path / "imgs"
        root.mkdir()
        sess = ReviewSession(report=report, manifest=sneaky, verdicts=VerdictLog(),
                             image_root=root, out_dir=tmp_path)
        c = TestClient(create_app(sess))
        assert c.get("/img/evil").status_code == 403


class TestToken:
    def test_token_required_when_configured(self, session):
        sess, *_ = session
        sess.token = "sekrit"
        c = TestClient(create_app(sess))
        assert c.get("/api/queue").status_code == 401
        assert c.get("/api/queue", headers={"X-Review-Token": "sekrit"}).status_code == 200
        sample = sess.manifest.samples[0].sample_id
        assert c.get(f"/img/{sample}").status_code == 401
