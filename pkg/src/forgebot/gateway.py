"""Webhook edge: authenticate deliveries, deduplicate, normalize into Events."""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

from .model import (
    BaseBranchPushed,
    CardRemoved,
    CommentEdited,
    CommentPosted,
    CommitInfo,
    Event,
    IssueOpened,
    JobFinished,
    PipelineFinished,
    PrClosed,
    PrOpened,
    PrSynchronized,
    Provider,
    PushToBranch,
    RepoId,
    RunnerJobCompleted,
)

logger = logging.getLogger(__name__)


class DecodeError(ValueError):
    """Body could not be parsed; carries provider and event-kind for logging."""

    def __init__(self, provider: Provider, kind: str, reason: str):
        super().__init__(f"{provider.value} {kind}: {reason}")
        self.provider = provider
        self.kind = kind


@dataclass
class RawDelivery:
    provider: Provider
    headers: dict[str, str]
    body: bytes
    received_at: float = 0.0

    def header(self, name: str) -> str:
        # HTTP header names are case-insensitive
        for k, v in self.headers.items():
            if k.lower() == name.lower():
                return v
        return ""


def verify_signature(secret: bytes, body: bytes, signature_header: str) -> bool:
    """Check a GitHub-style `sha256=<hex>` HMAC header in constant time."""
    if not secret:
        raise ValueError("empty webhook secret")
    if not signature_header.startswith("sha256="):
        return False
    expected = hmac.new(secret, body, hashlib.sha256).hexdigest()
    return hmac.compare_digest("sha256=" + expected, signature_header)


def verify_gitlab_token(secret: bytes, token_header: str) -> bool:
    """GitLab sends the shared secret verbatim in X-Gitlab-Token."""
    if not secret:
        raise ValueError("empty webhook secret")
    return hmac.compare_digest(secret, token_header.encode())


@dataclass
class DeliveryLedger:
    """Bounded set of recently seen delivery ids with FIFO eviction."""

    capacity: int = 4096
    _seen: OrderedDict[str, None] = field(default_factory=OrderedDict)

    def admit(self, delivery_id: str) -> bool:
        """Record an unseen id (True) or reject a redelivery (False)."""
        if delivery_id in self._seen:
            return False
        self._seen[delivery_id] = None
        while len(self._seen) > self.capacity:
            self._seen.popitem(last=False)
        return True


def _github_repo(payload: dict) -> RepoId:
    full = payload["repository"]["full_name"]
    owner, name = full.split("/", 1)
    return RepoId(Provider.GITHUB, owner, name)


def _gitlab_repo(payload: dict) -> RepoId:
    full = payload["project"]["path_with_namespace"]
    owner, name = full.split("/", 1)
    return RepoId(Provider.GITLAB, owner, name)


def _push_commits(payload: dict) -> tuple[CommitInfo, ...]:
    return tuple(
        CommitInfo(sha=c["id"], message=c["message"]) for c in payload.get("commits", [])
    )


def decode_event(
    delivery: RawDelivery,
    configured_repos: set[RepoId],
    base_branches: dict[RepoId, set[str]],
) -> Event | None:
    """Normalize a verified provider payload, or None for unrecognized kinds.

    Events for repositories absent from configuration are dropped here as well.
    """
    if delivery.provider is Provider.GITHUB:
        kind = delivery.header("X-GitHub-Event")
        delivery_id = delivery.header("X-GitHub-Delivery")
    else:
        kind = delivery.header("X-Gitlab-Event")
        delivery_id = delivery.header("X-Gitlab-Event-UUID")

    try:
        payload = json.loads(delivery.body)
    except ValueError as exc:
        raise DecodeError(delivery.provider, kind, str(exc)) from exc

    try:
        decoded = _decode(delivery.provider, kind, payload)
    except (KeyError, TypeError) as exc:
        raise DecodeError(delivery.provider, kind, f"missing field: {exc}") from exc
    if decoded is None:
        logger.info("dropping unrecognized %s event %r", delivery.provider.value, kind)
        return None
    repo, body = decoded
    if repo not in configured_repos:
        logger.info("dropping event for unconfigured repo %s", repo)
        return None
    if isinstance(body, PushToBranch) and body.branch in base_branches.get(repo, set()):
        body = BaseBranchPushed(branch=body.branch, commits=body.commits)
    return Event(delivery_id=delivery_id, repo=repo, payload=body)


def _decode(provider: Provider, kind: str, payload: dict):
    if provider is Provider.GITHUB:
        return _decode_github(kind, payload)
    return _decode_gitlab(kind, payload)


def _decode_github(kind: str, payload: dict):
    if kind == "pull_request":
        repo = _github_repo(payload)
        number = payload["pull_request"]["number"]
        action = payload["action"]
        if action == "opened":
            return repo, PrOpened(number=number)
        if action == "synchronize":
            return repo, PrSynchronized(number=number)
        if action == "closed":
            return repo, PrClosed(number=number, merged=payload["pull_request"].get("merged", False))
        return None
    if kind == "issue_comment":
        repo = _github_repo(payload)
        action = payload["action"]
        if action not in ("created", "edited"):
            return None
        issue = payload["issue"]
        cls = CommentPosted if action == "created" else CommentEdited
        return repo, cls(
            issue_number=issue["number"],
            comment_id=payload["comment"]["id"],
            author=payload["comment"]["user"]["login"],
            body=payload["comment"]["body"],
            is_pull_request="pull_request" in issue,
        )
    if kind == "issues":
        if payload["action"] != "opened":
            return None
        repo = _github_repo(payload)
        issue = payload["issue"]
        return repo, IssueOpened(
            number=issue["number"],
            author=issue["user"]["login"],
            body=issue.get("body") or "",
        )
    if kind == "push":
        repo = _github_repo(payload)
        ref = payload["ref"]
        if not ref.startswith("refs/heads/"):
            return None
        branch = ref[len("refs/heads/"):]
        return repo, PushToBranch(branch=branch, commits=_push_commits(payload))
    if kind == "project_card":
        if payload["action"] != "deleted":
            return None
        repo = _github_repo(payload)
        card = payload["project_card"]
        content_url = card.get("content_url", "")
        number = int(content_url.rsplit("/", 1)[1]) if content_url else 0
        return repo, CardRemoved(
            board=card["project_name"],
            column=card["column_name"],
            pr_number=number,
            actor=payload["sender"]["login"],
        )
    return None


def _decode_gitlab(kind: str, payload: dict):
    if kind == "Pipeline Hook":
        repo = _gitlab_repo(payload)
        attrs = payload["object_attributes"]
        if attrs["status"] in ("success", "failed", "canceled"):
            return repo, PipelineFinished(
                pipeline_id=attrs["id"], sha=attrs["sha"], status=attrs["status"]
            )
        return None
    if kind == "Job Hook":
        # GitLab job hooks carry project_name rather than a project object
        repo = (
            _gitlab_repo(payload)
            if "project" in payload
            else _gitlab_repo_from_job(payload)
        )
        status = payload["build_status"]
        if status not in ("success", "failed", "canceled"):
            return None
        return repo, JobFinished(
            job_id=payload["build_id"],
            job_name=payload["build_name"],
            status={"failed": "failure"}.get(status, status),
            sha=payload["sha"],
            web_url=payload.get("build_url", ""),
        )
    return None


def _gitlab_repo_from_job(payload: dict) -> RepoId:
    full = payload["project_name"].replace(" ", "")
    owner, name = full.split("/", 1)
    return RepoId(Provider.GITLAB, owner, name)


def decode_runner_completion(body: bytes) -> Event | None:
    """Decode the job runner's completion callback (POST /runner/complete)."""
    payload = json.loads(body)
    repo_owner, repo_name = payload["repo"].split("/", 1)
    repo = RepoId(Provider.GITHUB, repo_owner, repo_name)
    return Event(
        delivery_id=payload["token"],
        repo=repo,
        payload=RunnerJobCompleted(
            request_id=payload["token"],
            reduced_case=payload.get("reduced_case"),
            failure=payload.get("failure"),
        ),
    )
