"""Trigger-action core: event routing, ordered action execution, scheduling.

Events for one repository are handled strictly in arrival order; workflows
subscribed to an event run sequentially in registration order. Handlers are
pure (reads only); all effects flow through the returned actions, which the
engine applies and records in the transcript.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone

from .config import Config
from .model import Action, ClockTick, Event, RepoId
from .ports import ActionResult, ForgePort

logger = logging.getLogger(__name__)


class BotWorkflow:
    """Base for workflows: a name, subscriptions, and a pure handler."""

    name: str = "workflow"
    subscribed_events: frozenset[type] = frozenset()

    def handle(
        self, event: Event, port: ForgePort, config: Config, now: float
    ) -> list[Action]:
        raise NotImplementedError

    def on_result(
        self,
        event: Event,
        action: Action,
        result: ActionResult,
        port: ForgePort,
        config: Config,
    ) -> list[Action]:
        """Follow-up actions after one of this workflow's actions was applied."""
        return []


@dataclass(frozen=True)
class TranscriptEntry:
    delivery_id: str
    repo: RepoId
    event_kind: str
    workflow: str
    actions: tuple[Action, ...]
    results: tuple[ActionResult, ...]
    failed: str = ""


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    final_digest: str = ""

    def actions(self) -> list[Action]:
        return [a for e in self.entries for a in e.actions]

    def render(self) -> str:
        lines = []
        for e in self.entries:
            lines.append(f"event {e.delivery_id} {e.repo} {e.event_kind} -> {e.workflow}")
            if e.failed:
                lines.append(f"  failed: {e.failed}")
            for a, r in zip(e.actions, e.results):
                lines.append(f"  {a!r} => {r.status.value} {r.detail}")
        lines.append(f"digest {self.final_digest}")
        return "\n".join(lines) + "\n"


@dataclass
class ScheduleEntry:
    name: str
    period: float  # seconds, >= 60
    last_fired: float | None = None


class Engine:
    """Routes events to workflows and executes their actions in order."""

    def __init__(
        self,
        port: ForgePort,
        config: Config,
        workflows: list[BotWorkflow],
        schedule: list[ScheduleEntry] | None = None,
    ):
        self.port = port
        self.config = config
        self.workflows = workflows
        self.schedule = schedule or []
        for entry in self.schedule:
            if entry.period < 60:
                raise ValueError(f"schedule period below one minute: {entry.name}")
        self.now = 0.0
        self.transcript = Transcript()
        self._queues: dict[RepoId, deque[Event]] = {}

    def submit(self, event: Event) -> None:
        if event.repo not in self.config.configured_repos:
            logger.info("ignoring event for unconfigured repo %s", event.repo)
            return
        self._queues.setdefault(event.repo, deque()).append(event)

    def run(self) -> None:
        """Drain all queues, round-robin over repositories (deterministic)."""
        while any(self._queues.values()):
            for repo in sorted(self._queues, key=str):
                queue = self._queues[repo]
                if queue:
                    self.dispatch(queue.popleft())

    def tick(self, now: float) -> None:
        """Advance the clock and emit ClockTicks for due schedule entries."""
        if now < self.now:
            return
        self.now = now
        for entry in self.schedule:
            due = entry.last_fired is None or now - entry.last_fired >= entry.period
            if not due:
                continue
            entry.last_fired = now
            for rc in self.config.repositories:
                self.submit(
                    Event(
                        delivery_id=f"tick-{entry.name}-{rc.repo.slug}-{now:.0f}",
                        repo=rc.repo,
                        payload=ClockTick(at=now),
                    )
                )

    def dispatch(self, event: Event) -> list[TranscriptEntry]:
        if isinstance(event.payload, ClockTick):
            self.now = max(self.now, event.payload.at)
        entries: list[TranscriptEntry] = []
        for wf in self.workflows:
            if event.kind not in wf.subscribed_events:
                continue
            try:
                self.port.read_only = True
                actions = wf.handle(event, self.port, self.config, self.now)
            except Exception as exc:  # workflow failures are isolated
                logger.exception("workflow %s failed on %s", wf.name, event.delivery_id)
                entries.append(
                    TranscriptEntry(
                        delivery_id=event.delivery_id,
                        repo=event.repo,
                        event_kind=event.kind.__name__,
                        workflow=wf.name,
                        actions=(),
                        results=(),
                        failed=f"{type(exc).__name__}: {exc}",
                    )
                )
                continue
            finally:
                self.port.read_only = False

            applied: list[Action] = []
            results: list[ActionResult] = []
            pending = deque(actions)
            while pending:
                action = pending.popleft()
                result = self.port.apply(action)
                applied.append(action)
                results.append(result)
                self._log_action(event, wf, action, result)
                pending.extendleft(
                    reversed(wf.on_result(event, action, result, self.port, self.config))
                )
            entries.append(
                TranscriptEntry(
                    delivery_id=event.delivery_id,
                    repo=event.repo,
                    event_kind=event.kind.__name__,
                    workflow=wf.name,
                    actions=tuple(applied),
                    results=tuple(results),
                )
            )
        self.transcript.entries.extend(entries)
        return entries

    def _log_action(self, event: Event, wf: BotWorkflow, action: Action, result) -> None:
        ts = datetime.fromtimestamp(self.now, tz=timezone.utc).isoformat()
        logger.info(
            "ts=%s repo=%s wf=%s action=%s result=%s",
            ts,
            event.repo.slug,
            wf.name,
            type(action).__name__,
            result.status.value,
        )
