import hashlib
import hmac
import json

from fastapi.testclient import TestClient

from forgebot import __version__
from forgebot.scenario import build_engine
from forgebot.server import create_app

from conftest import MIRROR, make_config, make_forge

SECRET = b"server-secret"


def make_client():
    forge, shas = make_forge()
    config = make_config()
    engine = build_engine(forge, config)
    app = create_app(config, engine, secret=SECRET)
    return TestClient(app), forge, engine


def signed_headers(body, kind, delivery_id="gh-1"):
    digest = hmac.new(SECRET, body, hashlib.sha256).hexdigest()
    return {
        "X-GitHub-Event": kind,
        "X-GitHub-Delivery": delivery_id,
        "X-Hub-Signature-256": f"sha256={digest}",
    }


def pr_opened_body(number=1):
    return json.dumps(
        {
            "action": "opened",
            "repository": {"full_name": "coq/coq"},
            "pull_request": {"number": number},
        }
    ).encode()


def test_healthz_reports_build():
    client, _, _ = make_client()
    response = client.get("/healthz")
    assert response.status_code == 200
    assert response.json() == {"status": "ok", "build": __version__}


def test_github_delivery_processed_after_ack():
    client, forge, _ = make_client()
    body = pr_opened_body()
    response = client.post(
        "/webhook/github", content=body, headers=signed_headers(body, "pull_request")
    )
    assert response.status_code == 202
    # background task ran before TestClient returned: candidate pushed
    assert "pr-1" in forge.state.repos[MIRROR].branches


def test_bad_signature_rejected():
    client, forge, _ = make_client()
    body = pr_opened_body()
    headers = signed_headers(body, "pull_request")
    headers["X-Hub-Signature-256"] = "sha256=" + "0" * 64
    assert client.post("/webhook/github", content=body, headers=headers).status_code == 401
    assert client.post("/webhook/github", content=body).status_code == 401
    assert "pr-1" not in forge.state.repos[MIRROR].branches


def test_duplicate_delivery_dropped():
    client, _, engine = make_client()
    body = pr_opened_body()
    headers = signed_headers(body, "pull_request", delivery_id="same-id")
    client.post("/webhook/github", content=body, headers=headers)
    before = len(engine.transcript.entries)
    client.post("/webhook/github", content=body, headers=headers)
    assert len(engine.transcript.entries) == before


def test_gitlab_token_checked():
    client, _, _ = make_client()
    body = json.dumps(
        {
            "project": {"path_with_namespace": "coq/coq"},
            "object_attributes": {"id": 1, "sha": "a" * 40, "status": "success"},
        }
    ).encode()
    headers = {
        "X-Gitlab-Event": "Pipeline Hook",
        "X-Gitlab-Event-UUID": "gl-1",
        "X-Gitlab-Token": SECRET.decode(),
    }
    assert client.post("/webhook/gitlab", content=body, headers=headers).status_code == 202
    headers["X-Gitlab-Token"] = "wrong"
    assert client.post("/webhook/gitlab", content=body, headers=headers).status_code == 401


def test_runner_completion_endpoint():
    client, _, engine = make_client()
    body = json.dumps({"repo": "coq/coq", "token": "min-feedbeef", "failure": "timeout"})
    response = client.post("/runner/complete", content=body.encode())
    assert response.status_code == 202
    # unknown request id: accepted, then dropped by the minimizer workflow
    assert engine.transcript.actions() == []
