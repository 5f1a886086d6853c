"""Merge-on-command: parse the comment command, validate the whole policy at
once, and perform the templated signed merge.

Policy evaluation reports every violated criterion in a single comment rather
than failing one criterion at a time.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from .config import Config, MergePolicy
from .engine import BotWorkflow
from .model import (
    Action,
    CommentEdited,
    CommentPosted,
    Event,
    LabelCategory,
    MergePr,
    PostComment,
    PrSnapshot,
    PrState,
    CiVerdict,
)
from .ports import ActionResult, ActionStatus, ForgePort, MergeConflict


class ViolationCode(enum.Enum):
    NOT_MAINTAINER = "the commenter is not an authorized maintainer"
    HAS_NEEDS_LABEL = "the PR carries a blocking `needs:` label"
    NO_KIND_LABEL = "the PR has no `kind:` label"
    NO_MILESTONE = "the PR has no milestone"
    NO_ASSIGNEE = "the PR has no assignee"
    INSUFFICIENT_REVIEWS = "the PR lacks required approving reviews"
    CHANGES_REQUESTED = "a review requests changes"
    WRONG_BASE = "the PR does not target an allowed base branch"
    CI_NOT_GREEN = "CI has not passed on the PR"
    CONFLICT = "the PR has merge conflicts with its base branch"
    SELF_MERGE = "PR authors may not merge their own PR"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    detail: str


def parse_merge_command(comment_body: str, bot_handle: str) -> bool:
    """True iff some line, after trimming, is `@<handle> merge now`.

    The verb phrase is case-insensitive; the handle match is exact.
    """
    prefix = f"@{bot_handle}"
    for line in comment_body.splitlines():
        line = line.strip()
        if line.startswith(prefix) and line[len(prefix):].strip().lower() == "merge now":
            return True
    return False


def evaluate_policy(
    snapshot: PrSnapshot,
    commenter: str,
    membership: bool,
    policy: MergePolicy,
    mergeable: bool = True,
) -> list[Violation]:
    """Return every violated merge criterion, in stable enum order."""
    violations: list[Violation] = []

    def add(code: ViolationCode, detail: str = "") -> None:
        violations.append(Violation(code, detail or code.value))

    if not membership:
        add(ViolationCode.NOT_MAINTAINER, f"@{commenter} is not in the authorized team")
    forbidden = sorted(
        l.name for l in snapshot.labels if l.category in policy.forbidden_categories
    )
    if forbidden:
        add(ViolationCode.HAS_NEEDS_LABEL, f"blocking labels: {', '.join(forbidden)}")
    if policy.require_kind_label and not any(
        l.category is LabelCategory.KIND for l in snapshot.labels
    ):
        add(ViolationCode.NO_KIND_LABEL)
    if policy.require_milestone and snapshot.milestone is None:
        add(ViolationCode.NO_MILESTONE)
    if policy.require_assignee and not snapshot.assignees:
        add(ViolationCode.NO_ASSIGNEE)
    if snapshot.approved_reviews < policy.min_approvals:
        add(
            ViolationCode.INSUFFICIENT_REVIEWS,
            f"{snapshot.approved_reviews} of {policy.min_approvals} required approvals",
        )
    if policy.forbid_changes_requested and snapshot.changes_requested_reviews > 0:
        add(ViolationCode.CHANGES_REQUESTED)
    if (
        policy.allowed_base_branches
        and snapshot.base.branch_name not in policy.allowed_base_branches
    ):
        add(ViolationCode.WRONG_BASE, f"base is {snapshot.base.branch_name}")
    if policy.require_ci_success and snapshot.ci_verdict is not CiVerdict.SUCCESS:
        add(ViolationCode.CI_NOT_GREEN, f"CI verdict: {snapshot.ci_verdict.value}")
    if not mergeable:
        add(ViolationCode.CONFLICT)
    if policy.forbid_self_merge and commenter == snapshot.author:
        add(ViolationCode.SELF_MERGE)
    return violations


def render_report(pr_number: int, violations: list[Violation]) -> str:
    lines = [f"Cannot merge PR #{pr_number} yet; the following must be addressed first:"]
    for v in violations:
        lines.append(f"- {v.detail}")
    return "\n".join(lines)


def merge_message(snapshot: PrSnapshot, template: str) -> str:
    reviewed_by = "\n".join(
        f"Reviewed-by: {a}" for a in sorted(snapshot.assignees)
    )
    return template.format(
        number=snapshot.number, title=snapshot.title, reviewed_by=reviewed_by
    )


def _command_key(comment_id: int, bot_handle: str) -> tuple[int, str]:
    # The command grammar is a fixed phrase, so hashing the canonical phrase
    # keys "the same command in the same comment".
    digest = hashlib.sha256(f"@{bot_handle} merge now".encode()).hexdigest()
    return (comment_id, digest)


class MergeServiceWorkflow(BotWorkflow):
    name = "merge_service"
    subscribed_events = frozenset({CommentPosted, CommentEdited})

    def __init__(self) -> None:
        self._honored: set[tuple[str, int, str]] = set()

    def handle(self, event: Event, port: ForgePort, config: Config, now: float):
        rc = config.for_source(event.repo)
        payload = event.payload
        if rc is None or not payload.is_pull_request:
            return []
        if payload.author == config.bot_handle:
            return []
        if not parse_merge_command(payload.body, config.bot_handle):
            return []
        comment_id, digest = _command_key(payload.comment_id, config.bot_handle)
        key = (str(event.repo), comment_id, digest)
        if key in self._honored:
            return []
        self._honored.add(key)

        snapshot = port.get_pr_snapshot(event.repo, payload.issue_number)
        if snapshot.state is PrState.MERGED:
            return [
                PostComment(
                    repo=event.repo,
                    issue_number=snapshot.number,
                    body=f"PR #{snapshot.number} is already merged.",
                )
            ]
        if snapshot.state is PrState.CLOSED:
            return [
                PostComment(
                    repo=event.repo,
                    issue_number=snapshot.number,
                    body=f"PR #{snapshot.number} is closed; reopen it before merging.",
                )
            ]

        membership = port.is_team_member(
            event.repo.owner, rc.policy.authorized_team, payload.author
        )
        graph = port.get_commit_graph(event.repo)
        try:
            graph.synthesize_merge(snapshot.base.sha, snapshot.head.sha, "mergeability probe")
            mergeable = True
        except MergeConflict:
            mergeable = False

        violations = evaluate_policy(
            snapshot, payload.author, membership, rc.policy, mergeable
        )
        if violations:
            return [
                PostComment(
                    repo=event.repo,
                    issue_number=snapshot.number,
                    body=render_report(snapshot.number, violations),
                )
            ]
        return [
            MergePr(
                repo=event.repo,
                pr_number=snapshot.number,
                message=merge_message(snapshot, rc.templates.merge_commit),
                signed=True,
            )
        ]

    def on_result(
        self,
        event: Event,
        action: Action,
        result: ActionResult,
        port: ForgePort,
        config: Config,
    ):
        # A merge that raced to unmergeable gets an explanatory comment, no retry.
        if isinstance(action, MergePr) and result.status is ActionStatus.FAILED:
            return [
                PostComment(
                    repo=action.repo,
                    issue_number=action.pr_number,
                    body=f"The merge of PR #{action.pr_number} failed: {result.detail}",
                )
            ]
        return []
