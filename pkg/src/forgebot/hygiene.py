"""PR hygiene: the `needs: rebase` label and the warn-then-close stale policy.

A PR is stale when it has carried an unresolved merge conflict past the warn
threshold; mere inactivity never triggers anything. Resolving the conflict at
any point cancels the episode.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ci_bridge import Candidate, Conflict, SyncPlan, plan_sync
from .config import DAY, Config, RepoConfig
from .engine import BotWorkflow
from .model import (
    Action,
    AddLabel,
    BaseBranchPushed,
    ClockTick,
    ClosePr,
    Event,
    PostComment,
    PrClosed,
    PrOpened,
    PrSnapshot,
    PrState,
    PrSynchronized,
    RemoveLabel,
    RepoId,
)
from .ports import ForgePort


@dataclass
class StaleState:
    pr_number: int
    labeled_since: float
    warned_at: float | None = None


def on_sync_outcome(
    pr: PrSnapshot,
    outcome: SyncPlan,
    now: float,
    states: dict[int, StaleState],
    rebase_label: str,
) -> list[Action]:
    """Maintain the rebase label (and the stale episode) from a sync outcome."""
    if isinstance(outcome, Conflict):
        if pr.number not in states:
            states[pr.number] = StaleState(pr_number=pr.number, labeled_since=now)
        if pr.has_label(rebase_label):
            return []
        return [AddLabel(repo=pr.head.repo, pr_number=pr.number, label=rebase_label)]
    # clean candidate: episode over
    states.pop(pr.number, None)
    if pr.has_label(rebase_label):
        return [RemoveLabel(repo=pr.head.repo, pr_number=pr.number, label=rebase_label)]
    return []


def stale_scan(
    states: dict[int, StaleState],
    now: float,
    rc: RepoConfig,
    repo: RepoId,
) -> list[Action]:
    """Warn once past warn_after, close once past the additional grace period."""
    actions: list[Action] = []
    for number in sorted(states):
        state = states[number]
        if state.warned_at is None:
            if now - state.labeled_since >= rc.stale.warn_after:
                days = int((now - state.labeled_since) / DAY)
                actions.append(
                    PostComment(
                        repo=repo,
                        issue_number=number,
                        body=rc.templates.stale_warning.format(
                            pr_number=number,
                            days=days,
                            grace_days=int(rc.stale.grace / DAY),
                        ),
                    )
                )
                state.warned_at = now
        elif now - state.warned_at >= rc.stale.grace:
            days = int((now - state.warned_at) / DAY)
            actions.append(
                PostComment(
                    repo=repo,
                    issue_number=number,
                    body=rc.templates.stale_closure.format(pr_number=number, days=days),
                )
            )
            actions.append(ClosePr(repo=repo, pr_number=number))
            del states[number]
    return actions


class PrHygieneWorkflow(BotWorkflow):
    name = "pr_hygiene"
    subscribed_events = frozenset(
        {PrOpened, PrSynchronized, PrClosed, BaseBranchPushed, ClockTick}
    )

    def __init__(self) -> None:
        self._states: dict[RepoId, dict[int, StaleState]] = {}

    def states_for(self, repo: RepoId) -> dict[int, StaleState]:
        return self._states.setdefault(repo, {})

    def handle(self, event: Event, port: ForgePort, config: Config, now: float):
        rc = config.for_source(event.repo)
        if rc is None:
            return []
        payload = event.payload
        states = self.states_for(event.repo)

        if isinstance(payload, PrClosed):
            states.pop(payload.number, None)
            return []

        if isinstance(payload, ClockTick):
            self._refresh(event.repo, port, rc, states)
            return stale_scan(states, payload.at, rc, event.repo)

        if rc.mirror is None:
            return []
        graph = port.get_commit_graph(event.repo)
        if isinstance(payload, (PrOpened, PrSynchronized)):
            prs = [port.get_pr_snapshot(event.repo, payload.number)]
        else:
            prs = [
                pr
                for pr in port.list_open_prs(event.repo)
                if pr.base.branch_name == payload.branch
            ]
        actions: list[Action] = []
        for pr in prs:
            if pr.state is not PrState.OPEN:
                continue
            actions.extend(
                on_sync_outcome(pr, plan_sync(pr, graph, rc), now, states, rc.rebase_label)
            )
        return actions

    def _refresh(self, repo, port, rc, states) -> None:
        """Drop episodes whose PR was closed or manually unlabeled."""
        open_labeled = {
            pr.number
            for pr in port.list_open_prs(repo)
            if pr.has_label(rc.rebase_label)
        }
        for number in list(states):
            if number not in open_labeled:
                del states[number]
