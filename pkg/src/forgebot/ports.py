"""Forge access interface: read queries (state triggers) and the action executor.

Two implementations exist: the live HTTP adapter (`forgebot.live`) and the
deterministic in-memory forge (`forgebot.mockforge`). Both must pass the same
contract-test suite.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Protocol

from .model import Action, JobFinished, Milestone, PrSnapshot, RepoId, ToyCommit


class NotFound(LookupError):
    """Queried entity does not exist on the forge."""


class ConfigurationError(ValueError):
    """Query refers to something absent from configuration (e.g. unknown team)."""


class TransportError(RuntimeError):
    """Retryable transport-level failure of the live adapter."""


class ActionStatus(enum.Enum):
    APPLIED = "applied"
    NOOP = "noop"
    FAILED = "failed"


@dataclass(frozen=True)
class ActionResult:
    status: ActionStatus
    detail: str = ""


@dataclass(frozen=True)
class JobOutcome:
    """Result of one CI job on the mirror, as reported back to the origin."""

    job_name: str
    status: str  # success | failure | canceled
    log: str
    web_url: str
    artifact_links: tuple[tuple[str, str], ...] = ()
    script: str = ""


def toy_sha(parents: tuple[str, ...], files: frozenset[str], message: str) -> str:
    """Deterministic content hash for toy commits (stable across runs)."""
    h = hashlib.sha1()
    h.update("\0".join(sorted(parents)).encode())
    h.update(b"\1")
    h.update("\0".join(sorted(files)).encode())
    h.update(b"\1")
    h.update(message.encode())
    return h.hexdigest()


class MergeConflict(Exception):
    """Head and base touched overlapping files since their merge base."""


class CommitGraph:
    """Read-only view of a repository's commit DAG with file-level merges."""

    def __init__(self, commits: dict[str, ToyCommit]):
        self._commits = dict(commits)

    def __contains__(self, sha: str) -> bool:
        return sha in self._commits

    def get(self, sha: str) -> ToyCommit:
        try:
            return self._commits[sha]
        except KeyError:
            raise NotFound(f"unknown commit {sha}") from None

    def ancestors(self, sha: str) -> set[str]:
        """All commits reachable from sha, inclusive."""
        seen: set[str] = set()
        stack = [sha]
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(self.get(cur).parents)
        return seen

    def merge_base(self, a: str, b: str) -> str:
        """Deepest common ancestor; ties broken by sha for determinism."""
        common = self.ancestors(a) & self.ancestors(b)
        if not common:
            raise NotFound(f"no common ancestor of {a} and {b}")
        # A best common ancestor is one that no other common ancestor descends
        # from being strictly above it; pick maximal elements, then lowest sha.
        best = [
            c
            for c in common
            if not any(c != o and c in self.ancestors(o) for o in common)
        ]
        return min(best)

    def changed_since(self, head: str, base: str) -> frozenset[str]:
        """Union of touched files on commits reachable from head but not base."""
        files: set[str] = set()
        for sha in self.ancestors(head) - self.ancestors(base):
            files |= self.get(sha).files
        return frozenset(files)

    def synthesize_merge(self, base_head: str, pr_head: str, message: str) -> ToyCommit:
        """Create (but do not store) the merge commit of two heads.

        Raises MergeConflict when both sides touched a common file since the
        merge base.
        """
        base = self.merge_base(base_head, pr_head)
        ours = self.changed_since(base_head, base)
        theirs = self.changed_since(pr_head, base)
        overlap = ours & theirs
        if overlap:
            raise MergeConflict(", ".join(sorted(overlap)))
        parents = (base_head, pr_head)
        files = ours | theirs
        return ToyCommit(
            sha=toy_sha(parents, frozenset(files), message),
            parents=parents,
            files=frozenset(files),
            message=message,
        )


class ForgePort(Protocol):
    """Typed query-and-mutation capability shared by live and mock forges."""

    def get_pr_snapshot(self, repo: RepoId, number: int) -> PrSnapshot: ...

    def is_team_member(self, org: str, team: str, user: str) -> bool: ...

    def apply(self, action: Action) -> ActionResult: ...

    def get_commit_graph(self, repo: RepoId) -> CommitGraph: ...

    def get_commit(self, repo: RepoId, sha: str) -> ToyCommit: ...

    def list_open_prs(self, repo: RepoId) -> list[PrSnapshot]: ...

    def get_job_outcome(self, repo: RepoId, event: JobFinished) -> JobOutcome: ...

    def get_milestone(self, repo: RepoId, number: int) -> Milestone: ...

    def list_milestones(self, repo: RepoId) -> list[Milestone]: ...

    def get_board_cards(self, repo: RepoId, board: str) -> dict[str, list[int]]: ...
