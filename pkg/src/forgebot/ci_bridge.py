"""GitHub-to-GitLab CI bridging: merge-candidate sync and status mapping.

For every open PR, a merge candidate (merge of PR head and base head) is
force-pushed to the mirror branch `<prefix><number>`. Pipeline results on the
mirror are mapped back to the originating PR head as check runs, with error
excerpts on failure and artifact links for documentation jobs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .config import Config, RepoConfig
from .engine import BotWorkflow
from .model import (
    BaseBranchPushed,
    CreateCheckRun,
    DeleteBranch,
    Event,
    JobFinished,
    PrClosed,
    PrOpened,
    PrSnapshot,
    PrState,
    PrSynchronized,
    PushBranch,
    RepoId,
    ToyCommit,
)
from .ports import CommitGraph, ForgePort, JobOutcome, MergeConflict

EXCERPT_WINDOW_LINES = 40
EXCERPT_MAX_BYTES = 64 * 1024

DEFAULT_ERROR_PATTERNS = (
    r"^Error:",
    r"^.*\bError\b.*$",
    r"^make.*\*\*\*",
)


@dataclass(frozen=True)
class Candidate:
    commit: ToyCommit
    push: PushBranch


@dataclass(frozen=True)
class Conflict:
    files: tuple[str, ...] = ()


SyncPlan = Candidate | Conflict


@dataclass(frozen=True)
class CandidateRecord:
    pr_number: int
    origin_head_sha: str
    base_sha: str
    candidate_sha: str
    pushed_at: float


def candidate_message(pr_number: int, head_sha: str, base_sha: str) -> str:
    return f"CI merge candidate for PR #{pr_number}: {head_sha} over {base_sha}"


def plan_sync(pr: PrSnapshot, graph: CommitGraph, rc: RepoConfig) -> SyncPlan:
    """Synthesize the merge candidate for a PR, or report a conflict."""
    if rc.mirror is None:
        raise ValueError(f"no mirror configured for {rc.repo}")
    message = candidate_message(pr.number, pr.head.sha, pr.base.sha)
    try:
        commit = graph.synthesize_merge(pr.base.sha, pr.head.sha, message)
    except MergeConflict as exc:
        return Conflict(files=tuple(str(exc).split(", ")))
    # Ship every ancestor the mirror might lack, like a git pack.
    pack = tuple(
        graph.get(sha)
        for sha in sorted(graph.ancestors(pr.base.sha) | graph.ancestors(pr.head.sha))
    ) + (commit,)
    push = PushBranch(
        repo=rc.mirror,
        branch=f"{rc.branch_prefix}{pr.number}",
        sha=commit.sha,
        force=True,
        new_commits=pack,
    )
    return Candidate(commit=commit, push=push)


def map_to_origin(
    records: dict[int, CandidateRecord], tested_sha: str
) -> tuple[int, str] | None:
    """Resolve a tested candidate sha to (pr_number, origin head sha)."""
    for record in records.values():
        if record.candidate_sha == tested_sha:
            return record.pr_number, record.origin_head_sha
    return None


def summarize_failure(
    log: str, patterns: tuple[str, ...] = DEFAULT_ERROR_PATTERNS
) -> str:
    """Extract the error excerpt from a CI log.

    Patterns are tried in priority order; the excerpt runs from the first line
    the winning pattern matches through at most 40 further lines. Falls back to
    the last 40 lines, and is always capped at 64 KiB.
    """
    lines = log.splitlines()
    start = None
    for pattern in patterns:
        compiled = re.compile(pattern)
        for i, line in enumerate(lines):
            if compiled.search(line):
                start = i
                break
        if start is not None:
            break
    if start is None:
        window = lines[-EXCERPT_WINDOW_LINES:]
    else:
        window = lines[start : start + EXCERPT_WINDOW_LINES + 1]
    excerpt = "\n".join(window)
    return excerpt.encode()[:EXCERPT_MAX_BYTES].decode(errors="ignore")


def report(
    outcome: JobOutcome,
    origin: tuple[int, str],
    docs_job_names: frozenset[str],
    source_repo: RepoId,
) -> list[CreateCheckRun]:
    """Check-run actions mirroring one mirror job result onto the origin sha."""
    _pr_number, origin_sha = origin
    conclusion = {"success": "success", "failure": "failure", "canceled": "cancelled"}[
        outcome.status
    ]
    links = [outcome.web_url] if outcome.web_url else []
    if outcome.status == "failure":
        summary = summarize_failure(outcome.log)
        if outcome.web_url:
            summary += f"\n\nFull log: {outcome.web_url}"
    elif outcome.status == "success" and outcome.job_name in docs_job_names:
        parts = ["Documentation artifacts:"]
        for name, link in outcome.artifact_links:
            parts.append(f"- [{name}]({link})")
            links.append(link)
        summary = "\n".join(parts)
    else:
        summary = f"Job {outcome.job_name} finished: {outcome.status}."
    return [
        CreateCheckRun(
            repo=source_repo,
            sha=origin_sha,
            name=outcome.job_name,
            conclusion=conclusion,
            summary=summary,
            links=tuple(links),
        )
    ]


class CiBridgeWorkflow(BotWorkflow):
    name = "ci_bridge"
    subscribed_events = frozenset(
        {PrOpened, PrSynchronized, PrClosed, BaseBranchPushed, JobFinished}
    )

    def __init__(self) -> None:
        self._records: dict[RepoId, dict[int, CandidateRecord]] = {}

    def records_for(self, source_repo: RepoId) -> dict[int, CandidateRecord]:
        return self._records.setdefault(source_repo, {})

    def resolve(self, source_repo: RepoId, tested_sha: str) -> tuple[int, str] | None:
        return map_to_origin(self.records_for(source_repo), tested_sha)

    def handle(self, event: Event, port: ForgePort, config: Config, now: float):
        payload = event.payload
        if isinstance(payload, JobFinished):
            return self._on_job(event, port, config)

        rc = config.for_source(event.repo)
        if rc is None or rc.mirror is None:
            return []
        records = self.records_for(event.repo)

        if isinstance(payload, PrClosed):
            records.pop(payload.number, None)
            return [DeleteBranch(repo=rc.mirror, branch=f"{rc.branch_prefix}{payload.number}")]

        graph = port.get_commit_graph(event.repo)
        if isinstance(payload, (PrOpened, PrSynchronized)):
            prs = [port.get_pr_snapshot(event.repo, payload.number)]
        else:  # BaseBranchPushed: resync every open PR targeting that branch
            prs = [
                pr
                for pr in port.list_open_prs(event.repo)
                if pr.base.branch_name == payload.branch
            ]

        actions = []
        for pr in prs:
            if pr.state is not PrState.OPEN:
                continue
            plan = plan_sync(pr, graph, rc)
            if isinstance(plan, Conflict):
                records.pop(pr.number, None)
            else:
                records[pr.number] = CandidateRecord(
                    pr_number=pr.number,
                    origin_head_sha=pr.head.sha,
                    base_sha=pr.base.sha,
                    candidate_sha=plan.commit.sha,
                    pushed_at=now,
                )
                actions.append(plan.push)
        return actions

    def _on_job(self, event: Event, port: ForgePort, config: Config):
        rc = config.for_mirror(event.repo)
        if rc is None:
            return []
        payload = event.payload
        origin = self.resolve(rc.repo, payload.sha)
        if origin is None:
            return []  # stale pipeline for a superseded candidate
        outcome = port.get_job_outcome(event.repo, payload)
        return report(outcome, origin, rc.docs_jobs, rc.repo)
