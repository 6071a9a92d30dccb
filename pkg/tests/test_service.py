"""Tests for the interactive correction-session HTTP service."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

import langcorr.checkpoint as ckpt
import langcorr.gridworld as gw
import langcorr.language as lang
import langcorr.metaloop as ml
import langcorr.model as mdl
import langcorr.pusher as pu
import langcorr.runs as runs
from langcorr.config import RunConfig
from langcorr.nn import AdamState
from langcorr.service import MAX_ROUNDS, PUSHER_FRAME_STRIDE, create_app


def make_checkpoint(tmp_root, domain):
    cfg = RunConfig(domain=domain, seed=1)
    model_cfg = runs.make_model_config(cfg)
    store = mdl.build_params(model_cfg)
    path = tmp_root / f"{domain}.ckpt"
    ckpt.save(path, store, AdamState(store),
              runs.checkpoint_config(cfg, model_cfg))
    return path, store, model_cfg


@pytest.fixture(scope="module")
def grid_service(tmp_path_factory):
    path, store, model_cfg = make_checkpoint(tmp_path_factory.mktemp("g"), "grid")
    return TestClient(create_app(path)), store, model_cfg


@pytest.fixture(scope="module")
def pusher_client(tmp_path_factory):
    path, _, _ = make_checkpoint(tmp_path_factory.mktemp("p"), "pusher")
    return TestClient(create_app(path))


def open_session(client, seed=0):
    res = client.post("/sessions", json={"task_seed": seed})
    assert res.status_code == 200, res.text
    return res.json()


class TestEndpoints:
    def test_health_reports_model_identity(self, grid_service):
        client, store, model_cfg = grid_service
        data = client.get("/health").json()
        assert data["status"] == "ok"
        assert data["domain"] == "grid"
        assert data["config_fingerprint"] == model_cfg.fingerprint()
        assert data["n_parameters"] == sum(v.size for v in store.params.values())
        assert data["max_rounds"] == MAX_ROUNDS

    def test_grammar_matches_language_module(self, grid_service):
        client, _, _ = grid_service
        assert client.get("/grammar").json() == lang.grammar_json("grid")

    def test_session_creation_echoes_task(self, grid_service):
        client, _, _ = grid_service
        data = open_session(client, seed=3)
        task = gw.sample_task(3, "test", vocab=lang.grid_vocab())
        assert data["task_id"] == task.task_id
        assert data["instruction"] == task.instruction
        assert data["status"] == "awaiting-rollout"
        assert data["grammar"] == lang.grammar_json("grid")

    def test_missing_task_seed_rejected(self, grid_service):
        client, _, _ = grid_service
        res = client.post("/sessions", json={})
        assert res.status_code == 422
        assert res.json()["code"] == "missing-field"

    def test_domain_mismatch_rejected(self, grid_service):
        client, _, _ = grid_service
        res = client.post("/sessions", json={"task_seed": 0, "domain": "pusher"})
        assert res.status_code == 409
        assert res.json()["code"] == "domain-mismatch"

    def test_unknown_session_404(self, grid_service):
        client, _, _ = grid_service
        assert client.get("/sessions/deadbeef").status_code == 404
        assert client.post("/sessions/deadbeef/rollout").status_code == 404


class TestSessionProtocol:
    def test_status_machine_rejects_out_of_order_calls(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        # correction before any rollout
        res = client.post(f"/sessions/{sid}/correction", json={"auto": True})
        assert res.status_code == 409 and res.json()["code"] == "wrong-status"
        assert client.post(f"/sessions/{sid}/rollout").status_code == 200
        # second rollout without an intervening correction
        res = client.post(f"/sessions/{sid}/rollout")
        assert res.status_code == 409 and res.json()["code"] == "wrong-status"

    def test_unknown_word_rejected(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        client.post(f"/sessions/{sid}/rollout")
        res = client.post(f"/sessions/{sid}/correction",
                          json={"phrase": "enter the chartreuse room"})
        assert res.status_code == 422
        body = res.json()
        assert body["code"] == "unknown-word"
        assert "chartreuse" in body["message"]
        assert body["detail"]["phrase"] == "enter the chartreuse room"

    def test_known_words_outside_grammar_rejected(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        client.post(f"/sessions/{sid}/rollout")
        phrase = "the enter room blue"  # valid words, invalid production
        assert phrase not in lang.enumerate_phrases(lang.grid_templates())
        res = client.post(f"/sessions/{sid}/correction", json={"phrase": phrase})
        assert res.status_code == 422
        assert res.json()["code"] == "not-in-grammar"

    def test_manual_grammar_phrase_advances_round(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        client.post(f"/sessions/{sid}/rollout")
        phrase = "enter the blue room"
        res = client.post(f"/sessions/{sid}/correction", json={"phrase": phrase})
        assert res.status_code == 200
        body = res.json()
        assert body["status"] == "awaiting-rollout" and body["kind"] == "human"
        assert body["tokens"] == [int(t) for t in
                                  lang.tokenize(phrase, lang.grid_vocab()).ids]

    def test_complete_phrase_closes_session(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        client.post(f"/sessions/{sid}/rollout")
        res = client.post(f"/sessions/{sid}/correction",
                          json={"phrase": lang.COMPLETE_PHRASE})
        assert res.status_code == 200 and res.json()["status"] == "complete"
        assert client.post(f"/sessions/{sid}/rollout").status_code == 409

    def test_sessions_are_isolated(self, grid_service):
        client, _, _ = grid_service
        a = open_session(client, seed=0)["session_id"]
        b = open_session(client, seed=1)["session_id"]
        client.post(f"/sessions/{a}/rollout")
        # advancing a does not change b's status, and vice versa
        assert client.get(f"/sessions/{b}").json()["status"] == "awaiting-rollout"
        assert client.get(f"/sessions/{a}").json()["status"] == "awaiting-correction"
        client.post(f"/sessions/{b}/rollout")
        client.post(f"/sessions/{b}/correction", json={"auto": True})
        snap_a = client.get(f"/sessions/{a}").json()
        assert snap_a["status"] == "awaiting-correction"
        assert len(snap_a["rollouts"]) == 1

    def test_snapshot_is_stable_and_consistent(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client, seed=2)["session_id"]
        roll = client.post(f"/sessions/{sid}/rollout").json()
        one = client.get(f"/sessions/{sid}").json()
        two = client.get(f"/sessions/{sid}").json()
        assert one == two
        assert one["completions"] == [roll["completion"]]
        assert one["rollouts"][0]["frames"] == roll["frames"]
        assert one["max_rounds"] == MAX_ROUNDS

    def test_grid_frames_cover_every_step(self, grid_service):
        client, _, _ = grid_service
        sid = open_session(client)["session_id"]
        roll = client.post(f"/sessions/{sid}/rollout").json()
        assert len(roll["frames"]) == roll["n_steps"] + 1
        frame = roll["frames"][0]
        assert frame["kind"] == "grid"
        assert len(frame["grid"]) == gw.HEIGHT
        assert all(len(row) == gw.WIDTH for row in frame["grid"])


class TestAutoSession:
    def drive(self, client, seed):
        """All-auto session; returns per-round completions."""
        sid = open_session(client, seed=seed)["session_id"]
        completions = []
        while True:
            snap = client.get(f"/sessions/{sid}").json()
            if snap["status"] != "awaiting-rollout":
                break
            roll = client.post(f"/sessions/{sid}/rollout").json()
            completions.append(roll["completion"])
            res = client.post(f"/sessions/{sid}/correction", json={"auto": True})
            if res.status_code == 409:
                assert res.json()["code"] == "round-limit"
                break
            assert res.status_code == 200
        return completions

    def test_matches_offline_evaluation(self, grid_service):
        client, store, model_cfg = grid_service
        seed = 5
        completions = self.drive(client, seed)
        task = gw.sample_task(seed, "test", vocab=lang.grid_vocab())
        corr_fn = ml.make_correction_fn("grid")
        offline, _ = ml.meta_test(store, model_cfg, [task], corr_fn,
                                  c_max=len(completions) - 1, seed=seed)
        assert completions == [float(x) for x in offline[0]]

    def test_round_limit_enforced(self, grid_service):
        client, _, _ = grid_service
        # the untrained policy cannot finish, so an all-auto session must be
        # stopped by the server at the round cap
        completions = self.drive(client, seed=6)
        assert len(completions) == MAX_ROUNDS


class TestPusherService:
    def test_frames_are_strided_with_final_state(self, pusher_client):
        data = open_session(pusher_client, seed=0)
        sid = data["session_id"]
        roll = pusher_client.post(f"/sessions/{sid}/rollout").json()
        n_states = roll["n_steps"] + 1
        expected = len(range(0, n_states, PUSHER_FRAME_STRIDE))
        if (n_states - 1) % PUSHER_FRAME_STRIDE != 0:
            expected += 1
        assert len(roll["frames"]) == expected
        assert roll["frames"][0]["gripper"] is not None

    def test_domain_mismatch_against_grid_request(self, pusher_client):
        res = pusher_client.post("/sessions", json={"task_seed": 0,
                                                    "domain": "grid"})
        assert res.status_code == 409
        assert res.json()["code"] == "domain-mismatch"

    def test_auto_session_matches_offline(self, pusher_client, tmp_path_factory):
        # re-derive the model identity from the health fingerprint
        seed = 1
        sid = open_session(pusher_client, seed=seed)["session_id"]
        roll = pusher_client.post(f"/sessions/{sid}/rollout").json()
        cfg = RunConfig(domain="pusher", seed=1)
        model_cfg = runs.make_model_config(cfg)
        store = mdl.build_params(model_cfg)
        assert pusher_client.get("/health").json()["config_fingerprint"] == \
            model_cfg.fingerprint()
        task = pu.sample_task(seed, "test")
        corr_fn = ml.make_correction_fn("pusher")
        offline, _ = ml.meta_test(store, model_cfg, [task], corr_fn,
                                  c_max=0, seed=seed)
        assert roll["completion"] == pytest.approx(float(offline[0, 0]))
