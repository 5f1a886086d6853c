"""Bug-minimizer gateway: manual trigger commands, CI-based proposals, and
result delivery.

The minimizer itself is an opaque external runner; this module only dispatches
scripts to it and posts its results back. Scripts are forwarded verbatim —
sandboxing and resource limits are the runner's contract.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from .ci_bridge import CiBridgeWorkflow
from .config import Config
from .engine import BotWorkflow
from .model import (
    CommentEdited,
    CommentPosted,
    DispatchJob,
    Event,
    IssueOpened,
    JobFinished,
    PostComment,
    RepoId,
    RunnerJobCompleted,
)
from .ports import ForgePort


class RequestKind(enum.Enum):
    MANUAL = "manual"
    CI_PROPOSED = "ci_proposed"


@dataclass(frozen=True)
class MinimizationRequest:
    id: str
    repo: RepoId
    issue_number: int
    comment_id: int
    author: str
    script: str
    kind: RequestKind


class MinimizeUsageError(ValueError):
    """Command present but no script block followed it."""


def parse_minimize_command(body: str, bot_handle: str) -> str | None:
    """Extract the script from `@<handle> minimize` plus a fenced code block.

    Returns None when no command line is present; raises MinimizeUsageError
    when the command appears without a code block.
    """
    lines = body.splitlines()
    command = f"@{bot_handle} minimize"
    for i, line in enumerate(lines):
        if line.strip().lower() != command.lower():
            continue
        script_lines: list[str] | None = None
        for rest in lines[i + 1 :]:
            stripped = rest.strip()
            if script_lines is None:
                if stripped.startswith("```"):
                    script_lines = []
                elif stripped:
                    break  # non-blank text before any fence: malformed
            else:
                if stripped.startswith("```"):
                    return "\n".join(script_lines)
                script_lines.append(rest)
        raise MinimizeUsageError("minimize command without a fenced script block")
    return None


def request_id(repo: RepoId, issue_number: int, comment_id: int, script: str) -> str:
    digest = hashlib.sha1(
        f"{repo}:{issue_number}:{comment_id}:{script}".encode()
    ).hexdigest()
    return f"min-{digest[:16]}"


class MinimizerWorkflow(BotWorkflow):
    name = "minimizer_gateway"
    subscribed_events = frozenset(
        {CommentPosted, CommentEdited, IssueOpened, JobFinished, RunnerJobCompleted}
    )

    def __init__(self, ci_bridge: CiBridgeWorkflow):
        self._ci_bridge = ci_bridge
        self.outstanding: dict[str, MinimizationRequest] = {}
        self._proposed: set[tuple[str, int, str, str]] = set()
        self._handled_comments: set[tuple[str, int, str]] = set()

    def handle(self, event: Event, port: ForgePort, config: Config, now: float):
        payload = event.payload

        if isinstance(payload, RunnerJobCompleted):
            return self._on_complete(payload)

        if isinstance(payload, JobFinished):
            return self._on_job(event, port, config)

        rc = config.for_source(event.repo)
        if rc is None:
            return []

        if isinstance(payload, (CommentPosted, CommentEdited)):
            issue_number, comment_id = payload.issue_number, payload.comment_id
            author, body = payload.author, payload.body
        else:  # IssueOpened: same grammar applies to the issue body
            issue_number, comment_id = payload.number, 0
            author, body = payload.author, payload.body
        if author == config.bot_handle:
            return []

        try:
            script = parse_minimize_command(body, config.bot_handle)
        except MinimizeUsageError:
            return [
                PostComment(
                    repo=event.repo,
                    issue_number=issue_number,
                    body=rc.templates.minimizer_usage.format(bot_handle=config.bot_handle),
                )
            ]
        if script is None:
            return []
        script_key = hashlib.sha256(script.encode()).hexdigest()
        key = (str(event.repo), comment_id, script_key)
        if comment_id and key in self._handled_comments:
            return []
        self._handled_comments.add(key)

        req = MinimizationRequest(
            id=request_id(event.repo, issue_number, comment_id, script),
            repo=event.repo,
            issue_number=issue_number,
            comment_id=comment_id,
            author=author,
            script=script,
            kind=RequestKind.MANUAL,
        )
        if req.id in self.outstanding:
            return []
        self.outstanding[req.id] = req
        return [DispatchJob(repo=event.repo, request_id=req.id, script=script)]

    def _on_job(self, event: Event, port: ForgePort, config: Config):
        rc = config.for_mirror(event.repo)
        payload = event.payload
        if rc is None or payload.status != "failure":
            return []
        if payload.job_name not in rc.reverse_dep_jobs:
            return []
        origin = self._ci_bridge.resolve(rc.repo, payload.sha)
        if origin is None:
            return []
        pr_number, _origin_sha = origin
        dedup = (str(rc.repo), pr_number, payload.job_name, payload.sha)
        if dedup in self._proposed:
            return []
        self._proposed.add(dedup)
        outcome = port.get_job_outcome(event.repo, payload)
        body = (
            f"The reverse-dependency job `{payload.job_name}` failed on this PR's "
            f"merge candidate. I can try to minimize the failure; to trigger it, "
            f"post the following comment:\n\n"
            f"@{config.bot_handle} minimize\n"
            f"```\n{outcome.script}\n```"
        )
        return [PostComment(repo=rc.repo, issue_number=pr_number, body=body)]

    def _on_complete(self, payload: RunnerJobCompleted):
        req = self.outstanding.pop(payload.request_id, None)
        if req is None:
            return []  # unknown or duplicate completion
        if payload.reduced_case is not None:
            body = (
                f"@{req.author}, minimization succeeded. Reduced test case:\n\n"
                f"```\n{payload.reduced_case}\n```"
            )
        else:
            body = f"@{req.author}, minimization failed: {payload.failure}"
        return [PostComment(repo=req.repo, issue_number=req.issue_number, body=body)]
