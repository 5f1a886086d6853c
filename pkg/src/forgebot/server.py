"""HTTP surface: webhook endpoints, runner callback, health probe.

Deliveries are acknowledged with 202 immediately; decoding and workflow
execution happen after the response so provider timeouts never fire.
"""

from __future__ import annotations

import logging
import os

from fastapi import BackgroundTasks, FastAPI, Request, Response

from . import __version__
from .config import Config
from .engine import Engine
from .gateway import (
    DecodeError,
    DeliveryLedger,
    RawDelivery,
    decode_event,
    decode_runner_completion,
    verify_gitlab_token,
    verify_signature,
)
from .model import Provider

logger = logging.getLogger(__name__)


def create_app(config: Config, engine: Engine, secret: bytes | None = None) -> FastAPI:
    if secret is None:
        secret = os.environ.get(config.secret_env, "").encode()
    app = FastAPI(title="forgebot")
    ledger = DeliveryLedger(capacity=config.dedup_capacity)

    def process(delivery: RawDelivery) -> None:
        try:
            event = decode_event(
                delivery, config.configured_repos, config.base_branches_by_repo
            )
        except DecodeError as exc:
            logger.warning("undecodable delivery: %s", exc)
            return
        if event is None:
            return
        if not ledger.admit(event.delivery_id):
            logger.info("duplicate delivery %s dropped", event.delivery_id)
            return
        engine.submit(event)
        engine.run()

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "build": __version__}

    @app.post("/webhook/github", status_code=202)
    async def github_webhook(request: Request, background: BackgroundTasks) -> Response:
        body = await request.body()
        signature = request.headers.get("X-Hub-Signature-256", "")
        if not secret or not verify_signature(secret, body, signature):
            return Response(status_code=401)
        delivery = RawDelivery(
            provider=Provider.GITHUB, headers=dict(request.headers), body=body
        )
        background.add_task(process, delivery)
        return Response(status_code=202)

    @app.post("/webhook/gitlab", status_code=202)
    async def gitlab_webhook(request: Request, background: BackgroundTasks) -> Response:
        body = await request.body()
        token = request.headers.get("X-Gitlab-Token", "")
        if not secret or not verify_gitlab_token(secret, token):
            return Response(status_code=401)
        delivery = RawDelivery(
            provider=Provider.GITLAB, headers=dict(request.headers), body=body
        )
        background.add_task(process, delivery)
        return Response(status_code=202)

    @app.post("/runner/complete", status_code=202)
    async def runner_complete(request: Request, background: BackgroundTasks) -> Response:
        body = await request.body()

        def handle() -> None:
            event = decode_runner_completion(body)
            if event is not None and ledger.admit(event.delivery_id):
                engine.submit(event)
                engine.run()

        background.add_task(handle)
        return Response(status_code=202)

    return app
