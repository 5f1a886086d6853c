"""Shared domain vocabulary: repositories, refs, labels, PR snapshots, events, actions.

Everything here is an immutable value object; equality is structural so tests
can compare transcripts directly.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

SHA_RE = re.compile(r"^[0-9a-f]{40}$")

DEFAULT_NEEDS_PREFIX = "needs: "
DEFAULT_KIND_PREFIX = "kind: "


class InvalidInput(ValueError):
    """Raised when a domain value violates its invariants."""


class Provider(enum.Enum):
    GITHUB = "github"
    GITLAB = "gitlab"


@dataclass(frozen=True, order=True)
class RepoId:
    provider: Provider
    owner: str
    name: str

    def __post_init__(self) -> None:
        for part in (self.owner, self.name):
            if not part or any(c.isspace() for c in part):
                raise InvalidInput(f"bad repo identifier: {self.owner!r}/{self.name!r}")

    @property
    def slug(self) -> str:
        return f"{self.owner}/{self.name}"

    def __str__(self) -> str:
        return f"{self.provider.value}/{self.slug}"


@dataclass(frozen=True)
class GitRef:
    repo: RepoId
    branch_name: str
    sha: str

    def __post_init__(self) -> None:
        if not SHA_RE.match(self.sha):
            raise InvalidInput(f"not a full 40-hex sha: {self.sha!r}")


class LabelCategory(enum.Enum):
    NEEDS = "needs"
    KIND = "kind"
    OTHER = "other"


@dataclass(frozen=True, order=True)
class Label:
    name: str
    category: LabelCategory


def classify_label(
    name: str,
    needs_prefix: str = DEFAULT_NEEDS_PREFIX,
    kind_prefix: str = DEFAULT_KIND_PREFIX,
) -> Label:
    """Assign a label to a category from its configurable name prefix."""
    if not name:
        raise InvalidInput("empty label name")
    if name.startswith(needs_prefix):
        category = LabelCategory.NEEDS
    elif name.startswith(kind_prefix):
        category = LabelCategory.KIND
    else:
        category = LabelCategory.OTHER
    return Label(name=name, category=category)


@dataclass(frozen=True)
class Milestone:
    title: str
    description: str
    number: int

    def __post_init__(self) -> None:
        if self.number <= 0:
            raise InvalidInput("milestone number must be positive")


class CiVerdict(enum.Enum):
    PENDING = "pending"
    SUCCESS = "success"
    FAILURE = "failure"
    NONE = "none"


class PrState(enum.Enum):
    OPEN = "open"
    CLOSED = "closed"
    MERGED = "merged"


@dataclass(frozen=True)
class PrSnapshot:
    number: int
    author: str
    head: GitRef
    base: GitRef
    labels: frozenset[Label]
    milestone: Milestone | None
    assignees: frozenset[str]
    approved_reviews: int
    changes_requested_reviews: int
    ci_verdict: CiVerdict
    state: PrState
    title: str

    def __post_init__(self) -> None:
        if self.number <= 0:
            raise InvalidInput("PR number must be positive")
        if self.approved_reviews < 0 or self.changes_requested_reviews < 0:
            raise InvalidInput("review counts must be non-negative")

    def has_label(self, name: str) -> bool:
        return any(l.name == name for l in self.labels)


@dataclass(frozen=True)
class CommitInfo:
    """Commit identity and message, as carried in push event payloads."""

    sha: str
    message: str


# --- Event payload variants (closed sum) ---


@dataclass(frozen=True)
class PrOpened:
    number: int


@dataclass(frozen=True)
class PrSynchronized:
    number: int


@dataclass(frozen=True)
class PrClosed:
    number: int
    merged: bool


@dataclass(frozen=True)
class BaseBranchPushed:
    branch: str
    commits: tuple[CommitInfo, ...]


@dataclass(frozen=True)
class PushToBranch:
    branch: str
    commits: tuple[CommitInfo, ...]


@dataclass(frozen=True)
class CommentPosted:
    issue_number: int
    comment_id: int
    author: str
    body: str
    is_pull_request: bool


@dataclass(frozen=True)
class CommentEdited:
    issue_number: int
    comment_id: int
    author: str
    body: str
    is_pull_request: bool


@dataclass(frozen=True)
class IssueOpened:
    number: int
    author: str
    body: str


@dataclass(frozen=True)
class PipelineFinished:
    pipeline_id: int
    sha: str
    status: str


@dataclass(frozen=True)
class JobFinished:
    job_id: int
    job_name: str
    status: str
    sha: str
    web_url: str


@dataclass(frozen=True)
class CardRemoved:
    board: str
    column: str
    pr_number: int
    actor: str


@dataclass(frozen=True)
class ClockTick:
    at: float  # seconds since epoch, monotonic per engine


@dataclass(frozen=True)
class RunnerJobCompleted:
    """Completion callback from the external job runner port."""

    request_id: str
    reduced_case: str | None
    failure: str | None


EventPayload = (
    PrOpened
    | PrSynchronized
    | PrClosed
    | BaseBranchPushed
    | PushToBranch
    | CommentPosted
    | CommentEdited
    | IssueOpened
    | PipelineFinished
    | JobFinished
    | CardRemoved
    | ClockTick
    | RunnerJobCompleted
)


@dataclass(frozen=True)
class Event:
    delivery_id: str
    repo: RepoId
    payload: EventPayload

    @property
    def kind(self) -> type:
        return type(self.payload)


# --- Actions ---


@dataclass(frozen=True)
class Action:
    """Base for state-changing requests; every action targets one repository."""

    repo: RepoId


@dataclass(frozen=True)
class AddLabel(Action):
    pr_number: int
    label: str


@dataclass(frozen=True)
class RemoveLabel(Action):
    pr_number: int
    label: str


@dataclass(frozen=True)
class PostComment(Action):
    issue_number: int
    body: str


@dataclass(frozen=True)
class UpdateComment(Action):
    comment_id: int
    body: str


@dataclass(frozen=True)
class ClosePr(Action):
    pr_number: int


@dataclass(frozen=True)
class SetMilestone(Action):
    pr_number: int
    milestone_number: int


@dataclass(frozen=True)
class MergePr(Action):
    pr_number: int
    message: str
    signed: bool


@dataclass(frozen=True)
class ToyCommit:
    """Desk-scale commit: content-addressed by parents, touched files, message."""

    sha: str
    parents: tuple[str, ...]
    files: frozenset[str]
    message: str


@dataclass(frozen=True)
class PushBranch(Action):
    branch: str
    sha: str
    force: bool
    # Commits not yet known to the target repository travel with the push,
    # like a git pack.
    new_commits: tuple[ToyCommit, ...] = field(default=())


@dataclass(frozen=True)
class DeleteBranch(Action):
    branch: str


@dataclass(frozen=True)
class CreateCheckRun(Action):
    sha: str
    name: str
    conclusion: str
    summary: str
    links: tuple[str, ...] = field(default=())


@dataclass(frozen=True)
class SetCommitStatus(Action):
    sha: str
    state: str
    context: str
    description: str


@dataclass(frozen=True)
class AddCardToColumn(Action):
    board: str
    column: str
    pr_number: int


@dataclass(frozen=True)
class MoveCard(Action):
    board: str
    pr_number: int
    to_column: str


@dataclass(frozen=True)
class DispatchJob(Action):
    request_id: str
    script: str
