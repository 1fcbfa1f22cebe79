"""HTTP/JSON API over a trained checkpoint: sessions, rankings, explanations, feedback.

The checkpoint is loaded read-only at startup; the feedback store is the only
mutable state. Writes are serialized per user and journaled to disk before the
response is sent, so replaying the journal after a crash reproduces the
overrides. Demo-grade: no authentication, permissive CORS for the companion UI.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import defaultdict
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import explanation as expl
from .argumentation import build_taf, taf_to_json
from .data import load_interactions
from .model import Checkpoint, load_checkpoint, predict
from .explanation import FeedbackStore

logger = logging.getLogger(__name__)

SESSION_TTL_SECONDS = 3600.0
DISPLAY_NEUTRAL_EPS = 0.05


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class SessionRequest(BaseModel):
    user: str
    context: dict[str, str] = Field(default_factory=dict)


class FeedbackRequest(BaseModel):
    feature: str
    direction: Literal["like", "dislike"]


class Session:
    def __init__(self, session_id: str, user_idx: int, situation: dict[int, int], created: float):
        self.session_id = session_id
        self.user_idx = user_idx
        self.situation = situation
        self.created = created


def create_app(
    checkpoint: Checkpoint | str | Path,
    journal_path: str | Path | None = None,
    interactions_path: str | Path | None = None,
    cors_origins: list[str] | None = None,
    feedback_step: float = expl.DEFAULT_FEEDBACK_STEP,
    session_ttl: float = SESSION_TTL_SECONDS,
) -> FastAPI:
    if not isinstance(checkpoint, Checkpoint):
        checkpoint = load_checkpoint(checkpoint)
    catalog = checkpoint.catalog

    consumed: dict[int, set[int]] = defaultdict(set)
    if interactions_path is not None:
        for inter in load_interactions(interactions_path, catalog):
            if inter.user_id in catalog.users:
                consumed[catalog.users.index(inter.user_id)].add(catalog.items.index(inter.item_id))

    journal_path = Path(journal_path) if journal_path is not None else None
    if journal_path is not None and journal_path.exists():
        store = FeedbackStore.replay_file(journal_path)
        logger.info("replayed %d journal entries from %s", len(store.journal), journal_path)
    else:
        store = FeedbackStore()

    app = FastAPI(title="argrec", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = app.state
    state.checkpoint = checkpoint
    state.store = store
    state.sessions: dict[str, Session] = {}
    state.sessions_lock = threading.Lock()
    state.user_locks: defaultdict[int, threading.Lock] = defaultdict(threading.Lock)
    state.journal_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(Exception)
    async def _unhandled(request: Request, exc: Exception):
        logger.exception("unhandled error")
        return JSONResponse(status_code=500, content={"code": "internal", "message": str(exc)})

    def _resolve_situation(context: dict[str, str]) -> dict[int, int]:
        if checkpoint.kind == "mf" or not checkpoint.config.context_aware:
            return {}
        situation: dict[int, int] = {}
        for factor_name, condition_name in context.items():
            if factor_name not in catalog.factors:
                raise ApiError(404, "unknown_factor", f"unknown contextual factor {factor_name!r}")
            try:
                cond = catalog.condition_index(factor_name, condition_name)
            except KeyError:
                raise ApiError(
                    404, "unknown_condition",
                    f"unknown condition {condition_name!r} for factor {factor_name!r}",
                ) from None
            situation[catalog.factors.index(factor_name)] = cond
        missing = [
            catalog.factors.names[f] for f in range(catalog.n_factors) if f not in situation
        ]
        if missing:
            raise ApiError(
                400, "incomplete_context",
                f"this checkpoint is context-aware; missing factors: {', '.join(missing)}",
            )
        return situation

    def _session(session_id: str) -> Session:
        with state.sessions_lock:
            session = state.sessions.get(session_id)
            if session is not None and time.monotonic() - session.created > session_ttl:
                del state.sessions[session_id]
                session = None
        if session is None:
            raise ApiError(404, "unknown_session", f"unknown or expired session {session_id!r}")
        return session

    def _candidates(session: Session) -> list[int]:
        seen = consumed.get(session.user_idx, set())
        return [i for i in range(catalog.n_items) if i not in seen]

    def _rating(session: Session, item_idx: int, overrides) -> float:
        return checkpoint.rating(session.user_idx, item_idx, session.situation, overrides)

    @app.get("/meta")
    def meta():
        return {
            "variant": checkpoint.variant,
            "users": list(catalog.users.names),
            "factors": {
                catalog.factors.names[f]: [
                    catalog.condition_names[c] for c in catalog.factor_conditions[f]
                ]
                for f in range(catalog.n_factors)
            },
            "n_items": catalog.n_items,
            "context_required": checkpoint.kind == "factor" and checkpoint.config.context_aware,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionRequest):
        if body.user not in catalog.users:
            raise ApiError(404, "unknown_user", f"unknown user {body.user!r}")
        user_idx = catalog.users.index(body.user)
        situation = _resolve_situation(body.context)
        key = f"{user_idx}|" + ",".join(f"{f}:{c}" for f, c in sorted(situation.items()))
        session_id = hashlib.sha1(key.encode()).hexdigest()[:16]
        with state.sessions_lock:
            session = state.sessions.get(session_id)
            if session is None or time.monotonic() - session.created > session_ttl:
                session = Session(session_id, user_idx, situation, time.monotonic())
                state.sessions[session_id] = session
        return {"session_id": session_id}

    @app.get("/sessions/{session_id}/recommendations")
    def recommendations(session_id: str, n: int = 10):
        session = _session(session_id)
        if n < 1:
            raise ApiError(400, "bad_request", "n must be >= 1")
        overrides = state.store.snapshot()
        ranked = sorted(
            ((_rating(session, i, overrides), i) for i in _candidates(session)),
            key=lambda pair: (-pair[0], pair[1]),
        )
        return [
            {
                "item": catalog.items.names[i],
                "rating": r,
                "scenario": expl.classify_scenario(r),
            }
            for r, i in ranked[:n]
        ]

    @app.get("/sessions/{session_id}/explanations/{item}")
    def explanations(session_id: str, item: str, mode: str = "template"):
        session = _session(session_id)
        if mode not in ("template", "taf", "contrastive"):
            raise ApiError(400, "bad_request", f"unknown mode {mode!r}")
        if checkpoint.kind == "mf":
            raise ApiError(400, "bad_request", "the mf baseline has no explanations")
        overrides = state.store.snapshot()
        if mode == "contrastive":
            candidates = _candidates(session)
            if len(candidates) < 2:
                raise ApiError(409, "too_few_candidates",
                               "contrastive explanation needs at least 2 candidate items")
            result = expl.contrastive_explanation(
                session.user_idx, session.situation, candidates,
                checkpoint.space, catalog, checkpoint.config, overrides=overrides,
            )
            return result.to_dict()
        if item not in catalog.items:
            raise ApiError(404, "unknown_item", f"unknown item {item!r}")
        item_idx = catalog.items.index(item)
        breakdown = predict(
            session.user_idx, item_idx, session.situation,
            checkpoint.space, catalog, checkpoint.config, overrides=overrides,
        )
        if mode == "taf":
            return taf_to_json(build_taf(breakdown, catalog, DISPLAY_NEUTRAL_EPS), catalog)
        taf = build_taf(breakdown, catalog, DISPLAY_NEUTRAL_EPS)
        return expl.template_explanation(breakdown, taf, catalog).to_dict()

    @app.post("/sessions/{session_id}/feedback")
    def feedback(session_id: str, body: FeedbackRequest):
        session = _session(session_id)
        if checkpoint.kind == "mf":
            raise ApiError(400, "bad_request", "the mf baseline does not accept feature feedback")
        if body.feature not in catalog.features:
            raise ApiError(404, "unknown_feature", f"unknown feature {body.feature!r}")
        feature_idx = catalog.features.index(body.feature)
        affected = catalog.items_with_feature(feature_idx)

        with state.user_locks[session.user_idx]:
            before = state.store.snapshot()
            old_ratings = {i: _rating(session, i, before) for i in affected}
            model_rating = predict(
                session.user_idx,
                affected[0],
                session.situation,
                checkpoint.space,
                catalog,
                checkpoint.config,
            ).feature_ratings[feature_idx] if affected else 0.0
            entry = expl.plan_feedback(
                state.store, session.user_idx, feature_idx, body.direction,
                step=feedback_step, model_rating=model_rating,
            )
            # write-ahead: the journal line is durable before the store mutates
            if journal_path is not None:
                with state.journal_lock, journal_path.open("a") as fh:
                    fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
                    fh.flush()
            state.store.commit(entry)
            after = state.store.snapshot()

        updated = [
            {
                "item": catalog.items.names[i],
                "old_rating": old_ratings[i],
                "new_rating": _rating(session, i, after),
            }
            for i in affected
        ]
        return {"updated": updated, "override": entry.new}

    return app
