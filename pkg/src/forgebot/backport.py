"""Backport tracking on the release manager's project board.

Merged PRs whose milestone requests backporting are queued in the request
column; pushes to the release branch move them to the shipped column; a card
removed by the RM counts as a rejection and retargets the PR's milestone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .config import Config
from .engine import BotWorkflow
from .model import (
    AddCardToColumn,
    CardRemoved,
    CommitInfo,
    Event,
    MoveCard,
    PostComment,
    PrClosed,
    PrState,
    PushToBranch,
    RepoId,
    SetMilestone,
)
from .ports import ForgePort, NotFound

DEFAULT_REQUEST_COLUMN = "Backport requested"
DEFAULT_SHIPPED_COLUMN = "Shipped"

MERGE_TITLE_RE = re.compile(r"Merge PR #(\d+)")
CHERRY_PICK_RE = re.compile(r"\(cherry picked from commit ([0-9a-f]{40})\)")


class MilestoneDirectiveError(ValueError):
    """Directive keyword present but the line does not parse."""


@dataclass(frozen=True)
class BackportSpec:
    release_branch: str
    request_column: str = DEFAULT_REQUEST_COLUMN
    shipped_column: str = DEFAULT_SHIPPED_COLUMN
    rejection_milestone: int | None = None


def parse_milestone_metadata(description: str, bot_handle: str) -> BackportSpec | None:
    """Extract the backport directive from a milestone description.

    Grammar, line-anchored and whitespace-tolerant:
        <handle>: backport to <branch>
        <handle>: backport to <branch> (request inclusion column: X; shipped
                  column: Y; rejection milestone: N)
    """
    keyword = re.compile(rf"^\s*{re.escape(bot_handle)}:\s*backport\b(.*)$")
    directive = re.compile(
        rf"^\s*{re.escape(bot_handle)}:\s*backport\s+to\s+(\S+)\s*(?:\((.*)\))?\s*$"
    )
    for line in description.splitlines():
        if not keyword.match(line):
            continue
        m = directive.match(line)
        if not m:
            raise MilestoneDirectiveError(f"malformed backport directive: {line.strip()!r}")
        branch, options_text = m.group(1), m.group(2)
        spec = BackportSpec(release_branch=branch)
        if options_text:
            for option in options_text.split(";"):
                if ":" not in option:
                    raise MilestoneDirectiveError(f"malformed option {option.strip()!r}")
                key, _, value = option.partition(":")
                key, value = key.strip().lower(), value.strip()
                if key == "request inclusion column":
                    spec = BackportSpec(
                        spec.release_branch, value, spec.shipped_column, spec.rejection_milestone
                    )
                elif key == "shipped column":
                    spec = BackportSpec(
                        spec.release_branch, spec.request_column, value, spec.rejection_milestone
                    )
                elif key == "rejection milestone":
                    if not value.isdigit():
                        raise MilestoneDirectiveError(
                            f"rejection milestone must be a number, got {value!r}"
                        )
                    spec = BackportSpec(
                        spec.release_branch, spec.request_column, spec.shipped_column, int(value)
                    )
                else:
                    raise MilestoneDirectiveError(f"unknown option {key!r}")
        if spec.request_column == spec.shipped_column:
            raise MilestoneDirectiveError("request and shipped columns must differ")
        return spec
    return None


def referenced_pr(
    commit: CommitInfo, port: ForgePort, repo: RepoId
) -> int | None:
    """PR number a release-branch commit ships, by merge title or cherry-pick trailer."""
    m = MERGE_TITLE_RE.search(commit.message)
    if m:
        return int(m.group(1))
    m = CHERRY_PICK_RE.search(commit.message)
    if m:
        try:
            original = port.get_commit(repo, m.group(1))
        except NotFound:
            return None
        t = MERGE_TITLE_RE.search(original.message)
        if t:
            return int(t.group(1))
    return None


class BackportTrackerWorkflow(BotWorkflow):
    name = "backport_tracker"
    subscribed_events = frozenset({PrClosed, PushToBranch, CardRemoved})

    def __init__(self) -> None:
        self._reported_bad_directives: set[tuple[str, int]] = set()

    def handle(self, event: Event, port: ForgePort, config: Config, now: float):
        rc = config.for_source(event.repo)
        if rc is None:
            return []
        payload = event.payload

        if isinstance(payload, PrClosed):
            if not payload.merged:
                return []
            snapshot = port.get_pr_snapshot(event.repo, payload.number)
            if snapshot.state is not PrState.MERGED or snapshot.milestone is None:
                return []
            try:
                spec = parse_milestone_metadata(
                    snapshot.milestone.description, config.bot_handle
                )
            except MilestoneDirectiveError as exc:
                key = (str(event.repo), snapshot.milestone.number)
                if key in self._reported_bad_directives:
                    return []
                self._reported_bad_directives.add(key)
                return [
                    PostComment(
                        repo=event.repo,
                        issue_number=snapshot.number,
                        body=(
                            f"Milestone {snapshot.milestone.title!r} has a backport "
                            f"directive I cannot parse: {exc}"
                        ),
                    )
                ]
            if spec is None:
                return []
            return [
                AddCardToColumn(
                    repo=event.repo,
                    board=rc.board,
                    column=spec.request_column,
                    pr_number=snapshot.number,
                )
            ]

        if isinstance(payload, PushToBranch):
            specs = self._active_specs(port, event.repo, config.bot_handle)
            specs = [s for s in specs if s.release_branch == payload.branch]
            if not specs:
                return []
            cards = port.get_board_cards(event.repo, rc.board)
            actions = []
            moved: set[int] = set()
            for commit in payload.commits:
                number = referenced_pr(commit, port, event.repo)
                if number is None or number in moved:
                    continue
                for spec in specs:
                    if number in cards.get(spec.request_column, []):
                        actions.append(
                            MoveCard(
                                repo=event.repo,
                                board=rc.board,
                                pr_number=number,
                                to_column=spec.shipped_column,
                            )
                        )
                        moved.add(number)
                        break
            return actions

        if isinstance(payload, CardRemoved):
            if payload.actor == config.bot_handle:
                return []  # our own MoveCard shows up as a removal
            if payload.board != rc.board:
                return []
            specs = self._active_specs(port, event.repo, config.bot_handle)
            for spec in specs:
                if spec.request_column != payload.column:
                    continue
                actions = []
                if spec.rejection_milestone is not None:
                    actions.append(
                        SetMilestone(
                            repo=event.repo,
                            pr_number=payload.pr_number,
                            milestone_number=spec.rejection_milestone,
                        )
                    )
                actions.append(
                    PostComment(
                        repo=event.repo,
                        issue_number=payload.pr_number,
                        body=rc.templates.backport_rejection.format(
                            pr_number=payload.pr_number
                        ),
                    )
                )
                return actions
            return []

        return []

    def _active_specs(
        self, port: ForgePort, repo: RepoId, bot_handle: str
    ) -> list[BackportSpec]:
        specs = []
        for milestone in port.list_milestones(repo):
            try:
                spec = parse_milestone_metadata(milestone.description, bot_handle)
            except MilestoneDirectiveError:
                continue
            if spec is not None:
                specs.append(spec)
        return specs
