"""HTTP/JSON service for interactive correction sessions.

A session replays the evaluation loop with a human supplying corrections:
each rollout runs the frozen policy (argmax) conditioned on the correction
history, the caller inspects the rendered trajectory, then submits a
grammar phrase (or "auto" to delegate to the scripted correction function).
Driving a session entirely with "auto" reproduces the offline evaluation
results for the same task and seed.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import gridworld as gw
from . import language as lang
from . import metaloop as ml
from . import pusher as pu
from . import runs

MAX_ROUNDS = 10
PUSHER_FRAME_STRIDE = 5


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


@dataclass
class Session:
    id: str
    task: object
    domain: str
    seed: int
    status: str = "awaiting-rollout"  # -> awaiting-correction -> ... -> complete
    history: list = field(default_factory=list)  # metaloop Rounds
    rollouts: list = field(default_factory=list)  # summaries per round
    corrections: list = field(default_factory=list)
    last_rollout: dict | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def round_index(self) -> int:
        return len(self.rollouts)


def _frames(domain: str, rollout: dict, task) -> list[dict]:
    states = rollout["states"]
    if domain == "grid":
        picked = states
    else:
        picked = states[::PUSHER_FRAME_STRIDE]
        if states and states[-1] is not picked[-1]:
            picked = picked + [states[-1]]
    mod = gw if domain == "grid" else pu
    return [mod.render_payload(s, task) for s in picked]


def create_app(checkpoint_path) -> FastAPI:
    store, _, model_cfg, trained_mode = runs.load_checkpoint(checkpoint_path)
    domain = model_cfg.domain
    vocab = runs.domain_vocab(domain)
    templates = (lang.grid_templates() if domain == "grid"
                 else lang.pusher_templates())
    allowed = set(lang.enumerate_phrases(
        [t for t in templates if t["name"] != "instruction"]))
    allowed.add(lang.COMPLETE_PHRASE)
    corr_fn = ml.make_correction_fn(domain, mode=trained_mode,
                                    gpr=model_cfg.gpr_mode, vocab=vocab)
    grammar = lang.grammar_json(domain)
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    app = FastAPI(title="correction sessions")

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"code": exc.code, "message": exc.message,
                                     "detail": exc.detail})

    def get_session(sid: str) -> Session:
        with registry_lock:
            sess = sessions.get(sid)
        if sess is None:
            raise ApiError(404, "unknown-session", f"no session {sid!r}")
        return sess

    def run_round(sess: Session) -> dict:
        tasks = [sess.task]
        histories = [[ml.empty_round(domain)] + sess.history]
        z_im, z_cm = ml.encode_contexts(store, model_cfg, tasks, histories,
                                        vocab)
        rngs = {0: np.random.default_rng((sess.seed, 0xE7A1,
                                          sess.round_index, 0))}
        out = ml.rollout_batch(store, model_cfg, tasks, z_im, z_cm,
                               False, rngs)[0]
        return out

    @app.get("/health")
    def health():
        return {"status": "ok", "domain": domain,
                "config_fingerprint": model_cfg.fingerprint(),
                "n_parameters": int(sum(v.size for v in store.params.values())),
                "correction_mode": trained_mode,
                "max_rounds": MAX_ROUNDS}

    @app.get("/grammar")
    def get_grammar():
        return grammar

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        req_domain = body.get("domain", domain)
        if req_domain != domain:
            raise ApiError(409, "domain-mismatch",
                           f"this service runs a {domain} policy",
                           detail={"requested": req_domain})
        seed = body.get("task_seed")
        if seed is None:
            raise ApiError(422, "missing-field", "task_seed is required")
        try:
            if domain == "grid":
                task = gw.sample_task(int(seed), "test", vocab=vocab)
            else:
                task = pu.sample_task(int(seed), "test")
        except (TypeError, ValueError) as e:
            raise ApiError(422, "bad-task-seed", str(e)) from e
        sess = Session(id=uuid.uuid4().hex, task=task, domain=domain,
                       seed=int(seed))
        with registry_lock:
            sessions[sess.id] = sess
        return {"session_id": sess.id, "task_id": task.task_id,
                "instruction": task.instruction, "status": sess.status,
                "grammar": grammar, "max_rounds": MAX_ROUNDS}

    @app.post("/sessions/{sid}/rollout")
    def advance_rollout(sid: str):
        sess = get_session(sid)
        with sess.lock:
            if sess.status != "awaiting-rollout":
                raise ApiError(409, "wrong-status",
                               f"rollout not allowed in status {sess.status}")
            out = run_round(sess)
            sess.last_rollout = out
            frames = _frames(domain, out, sess.task)
            summary = {"round": sess.round_index,
                       "completion": out["completion"],
                       "n_steps": len(out["actions"]),
                       "frames": frames}
            sess.rollouts.append(summary)
            sess.status = "awaiting-correction"
            return {"round": summary["round"],
                    "completion": summary["completion"],
                    "n_steps": summary["n_steps"],
                    "frames": frames, "status": sess.status}

    @app.post("/sessions/{sid}/correction")
    async def submit_correction(sid: str, request: Request):
        body = await request.json()
        sess = get_session(sid)
        phrase = body.get("phrase")
        auto = bool(body.get("auto")) or phrase == "auto"
        with sess.lock:
            if sess.status != "awaiting-correction":
                raise ApiError(409, "wrong-status",
                               f"correction not allowed in status {sess.status}")
            rnd = sess.round_index - 1  # correction follows rollout rnd
            if auto:
                event = corr_fn(sess.last_rollout, sess.task,
                                np.random.default_rng((sess.seed, 0xE7A2,
                                                       rnd, 0)))
                phrase = (lang.detokenize(event.text, vocab)
                          if event.text is not None else "")
            else:
                if not phrase:
                    raise ApiError(422, "missing-field", "phrase is required")
                try:
                    tokens = lang.tokenize(phrase, vocab)
                except lang.VocabError as e:
                    raise ApiError(422, "unknown-word", str(e),
                                   detail={"phrase": phrase}) from e
                if phrase not in allowed:
                    raise ApiError(422, "not-in-grammar",
                                   f"phrase {phrase!r} is not producible by "
                                   f"the correction grammar")
                kind = "complete" if phrase == lang.COMPLETE_PHRASE else "human"
                event = lang.CorrectionEvent(kind=kind, text=tokens)
            if not event.done and sess.round_index >= MAX_ROUNDS:
                raise ApiError(409, "round-limit",
                               f"round limit {MAX_ROUNDS} reached")
            sess.corrections.append({"round": rnd, "phrase": phrase,
                                     "auto": auto, "kind": event.kind,
                                     "tokens": [int(t) for t in event.text.ids]
                                     if event.text is not None else None,
                                     "scalar": event.scalar})
            if event.done:
                sess.status = "complete"
            else:
                sess.history.append(ml.subsample_round(domain,
                                                       sess.last_rollout, event))
                sess.status = "awaiting-rollout"
            return {"round": rnd, "phrase": phrase, "kind": event.kind,
                    "tokens": sess.corrections[-1]["tokens"],
                    "status": sess.status}

    @app.get("/sessions/{sid}")
    def get_state(sid: str):
        sess = get_session(sid)
        with sess.lock:
            return {
                "session_id": sess.id,
                "task_id": sess.task.task_id,
                "domain": sess.domain,
                "instruction": sess.task.instruction,
                "status": sess.status,
                "seed": sess.seed,
                "completions": [r["completion"] for r in sess.rollouts],
                "corrections": sess.corrections,
                "rollouts": sess.rollouts,
                "max_rounds": MAX_ROUNDS,
            }

    return app
