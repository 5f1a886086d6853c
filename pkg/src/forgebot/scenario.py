"""Line-oriented scenario scripts driven against the mock forge.

Steps:
    config <file>             bot configuration for the run (YAML)
    seed <file>               initial forge state (JSON, symbolic commit ids)
    deliver <file>            webhook delivery (JSON wrapper: provider, kind,
                              delivery_id, body = provider-standard payload)
    advance <duration>        move the injected clock forward (e.g. 30d, 12h)
    mutate <op> <args>        out-of-band human action on the forge (for
                              changes that arrive by webhook in production
                              but have no event here, e.g. set-milestone)
    expect-action <Kind> [k=v ...]   next matching action must appear
    expect-state <predicate> <args>  predicate over current forge state

Payload bodies may embed placeholders resolved at delivery time:
    ${branch:<provider/owner/name>:<branch>}  current branch head sha
    ${sha:<symbolic-id>}                      sha of a seeded commit

Identical scripts always yield identical transcripts.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .backport import BackportTrackerWorkflow
from .ci_bridge import CiBridgeWorkflow
from .config import Config, load_config
from .engine import BotWorkflow, Engine, ScheduleEntry, Transcript
from .gateway import DeliveryLedger, RawDelivery, decode_event, verify_signature
from .hygiene import PrHygieneWorkflow
from .merge_service import MergeServiceWorkflow
from .minimizer import MinimizerWorkflow
from .mockforge import MockForge, load_seed
from .model import Event, PrState, Provider, RepoId, RunnerJobCompleted

SCENARIO_SECRET = b"scenario-secret"

DURATION_UNITS = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": 86400.0}

PLACEHOLDER_RE = re.compile(r"\$\{(branch|sha):([^}]*)\}")


class ScenarioError(AssertionError):
    """An expectation failed; the message carries the transcript context."""


def build_workflows() -> list[BotWorkflow]:
    """The five bot workflows, in their fixed registration order."""
    ci_bridge = CiBridgeWorkflow()
    return [
        ci_bridge,
        PrHygieneWorkflow(),
        MergeServiceWorkflow(),
        BackportTrackerWorkflow(),
        MinimizerWorkflow(ci_bridge),
    ]


def build_engine(port, config: Config) -> Engine:
    return Engine(
        port,
        config,
        build_workflows(),
        schedule=[ScheduleEntry(name="stale-scan", period=86400.0)],
    )


def parse_duration(text: str) -> float:
    m = re.fullmatch(r"(\d+(?:\.\d+)?)([smhd])", text)
    if not m:
        raise ValueError(f"bad duration {text!r}")
    return float(m.group(1)) * DURATION_UNITS[m.group(2)]


def _parse_repo(text: str) -> RepoId:
    provider, owner, name = text.split("/", 2)
    return RepoId(Provider(provider), owner, name)


class MockRunner:
    """Completes every dispatched minimizer job with a canned reduction."""

    def __init__(self) -> None:
        self._completed: set[str] = set()

    def pending(self, forge: MockForge) -> list[tuple[RepoId, str, str]]:
        out = []
        for repo_id in sorted(forge.state.repos, key=str):
            for rid, script in forge.state.repos[repo_id].dispatched_jobs:
                if rid not in self._completed:
                    out.append((repo_id, rid, script))
        return out

    def complete(self, repo: RepoId, rid: str, script: str) -> Event:
        self._completed.add(rid)
        reduced = f"(* reduced from {len(script)}-character script *)\nGoal False.\nAdmitted."
        return Event(
            delivery_id=f"runner-{rid}",
            repo=repo,
            payload=RunnerJobCompleted(request_id=rid, reduced_case=reduced, failure=None),
        )


@dataclass
class ScenarioRunner:
    config: Config | None = None
    duplicate_deliveries: bool = False
    forge: MockForge = field(default_factory=MockForge)
    shas: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.engine: Engine | None = None
        self.ledger = DeliveryLedger()
        self.runner = MockRunner()
        self._cursor = 0
        if self.config is not None:
            self.engine = build_engine(self.forge, self.config)

    def run_file(self, path: str | Path) -> Transcript:
        path = Path(path)
        for lineno, raw in enumerate(path.read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                self.step(line, base_dir=path.parent)
            except ScenarioError as exc:
                raise ScenarioError(f"{path.name}:{lineno}: {exc}") from None
        assert self.engine is not None, "scenario never loaded a config"
        self.engine.transcript.final_digest = self.forge.digest()
        return self.engine.transcript

    # -- steps --

    def step(self, line: str, base_dir: Path) -> None:
        parts = shlex.split(line)
        op, args = parts[0], parts[1:]
        if op == "config":
            self.config = load_config(base_dir / args[0])
            self.engine = build_engine(self.forge, self.config)
        elif op == "seed":
            state, shas = load_seed(base_dir / args[0])
            self.forge.state = state
            self.shas.update(shas)
        elif op == "deliver":
            self.deliver_file(base_dir / args[0])
        elif op == "advance":
            self.advance(parse_duration(args[0]))
        elif op == "mutate":
            self.mutate(args[0], args[1:])
        elif op == "expect-action":
            self.expect_action(args[0], args[1:])
        elif op == "expect-state":
            self.expect_state(args[0], args[1:])
        else:
            raise ValueError(f"unknown scenario step {op!r}")

    def deliver_file(self, path: Path) -> None:
        wrapper = json.loads(path.read_text())
        self.deliver(wrapper)

    def deliver(self, wrapper: dict) -> None:
        assert self.engine is not None
        count = 2 if self.duplicate_deliveries else 1
        for _ in range(count):
            self._deliver_once(wrapper)

    def _deliver_once(self, wrapper: dict) -> None:
        engine = self.engine
        assert engine is not None
        provider_name = wrapper["provider"]
        if provider_name == "runner":
            event = Event(
                delivery_id=wrapper["delivery_id"],
                repo=_parse_repo(self._resolve_str(wrapper["repo"])),
                payload=RunnerJobCompleted(
                    request_id=wrapper["body"]["token"],
                    reduced_case=wrapper["body"].get("reduced_case"),
                    failure=wrapper["body"].get("failure"),
                ),
            )
        else:
            provider = Provider(provider_name)
            body = json.dumps(self._resolve(wrapper["body"]), sort_keys=True).encode()
            headers = self._headers(provider, wrapper)
            delivery = RawDelivery(provider=provider, headers=headers, body=body)
            if provider is Provider.GITHUB:
                if not verify_signature(
                    SCENARIO_SECRET, body, headers["X-Hub-Signature-256"]
                ):
                    raise ScenarioError("delivery failed signature verification")
            event = decode_event(
                delivery,
                self.config.configured_repos,
                self.config.base_branches_by_repo,
            )
            if event is None:
                return
        if not self.ledger.admit(event.delivery_id):
            return
        engine.submit(event)
        engine.run()
        self._drain_runner()

    def _headers(self, provider: Provider, wrapper: dict) -> dict[str, str]:
        body = json.dumps(self._resolve(wrapper["body"]), sort_keys=True).encode()
        if provider is Provider.GITHUB:
            signature = hmac.new(SCENARIO_SECRET, body, hashlib.sha256).hexdigest()
            return {
                "X-GitHub-Event": wrapper["kind"],
                "X-GitHub-Delivery": wrapper["delivery_id"],
                "X-Hub-Signature-256": f"sha256={signature}",
            }
        return {
            "X-Gitlab-Event": wrapper["kind"],
            "X-Gitlab-Event-UUID": wrapper["delivery_id"],
            "X-Gitlab-Token": SCENARIO_SECRET.decode(),
        }

    def advance(self, seconds: float) -> None:
        assert self.engine is not None
        self.engine.tick(self.engine.now + seconds)
        self.engine.run()
        self._drain_runner()

    def _drain_runner(self) -> None:
        engine = self.engine
        assert engine is not None
        while True:
            pending = self.runner.pending(self.forge)
            if not pending:
                return
            for repo, rid, script in pending:
                engine.submit(self.runner.complete(repo, rid, script))
            engine.run()

    def mutate(self, op: str, args: list[str]) -> None:
        args = [self._resolve_str(a) for a in args]
        if op == "set-milestone":
            repo, number, milestone = _parse_repo(args[0]), int(args[1]), int(args[2])
            self.forge.state.repo(repo).prs[number].milestone = milestone
        elif op == "remove-label":
            repo, number, label = _parse_repo(args[0]), int(args[1]), args[2]
            self.forge.state.repo(repo).prs[number].labels.discard(label)
        else:
            raise ValueError(f"unknown mutation {op!r}")

    # -- placeholders --

    def _resolve(self, obj):
        if isinstance(obj, dict):
            return {k: self._resolve(v) for k, v in obj.items()}
        if isinstance(obj, list):
            return [self._resolve(v) for v in obj]
        if isinstance(obj, str):
            return self._resolve_str(obj)
        return obj

    def _resolve_str(self, text: str) -> str:
        def repl(m: re.Match) -> str:
            kind, arg = m.group(1), m.group(2)
            if kind == "sha":
                return self.shas[arg]
            repo_text, branch = arg.rsplit(":", 1)
            repo = _parse_repo(repo_text)
            return self.forge.state.repo(repo).branches[branch]

        return PLACEHOLDER_RE.sub(repl, text)

    # -- expectations --

    def expect_action(self, kind: str, pairs: list[str]) -> None:
        assert self.engine is not None
        actions = self.engine.transcript.actions()
        wanted = {k: self._resolve_str(v) for k, v in (p.split("=", 1) for p in pairs)}
        for i in range(self._cursor, len(actions)):
            action = actions[i]
            if type(action).__name__ != kind:
                continue
            if all(self._field_matches(action, k, v) for k, v in wanted.items()):
                self._cursor = i + 1
                return
        tail = "\n".join(f"  {a!r}" for a in actions[self._cursor :])
        raise ScenarioError(
            f"no action matching {kind} {wanted} at or after position "
            f"{self._cursor}; remaining actions:\n{tail or '  (none)'}"
        )

    @staticmethod
    def _field_matches(action, key: str, value: str) -> bool:
        if not hasattr(action, key):
            return False
        actual = getattr(action, key)
        if isinstance(actual, bool):
            return value.lower() == str(actual).lower()
        if isinstance(actual, int):
            return value.isdigit() and int(value) == actual
        if key == "repo":
            return str(actual) == value
        if value.startswith("contains:"):
            return value[len("contains:"):] in str(actual)
        return str(actual) == value

    def expect_state(self, predicate: str, args: list[str]) -> None:
        args = [self._resolve_str(a) for a in args]
        ok, detail = self._check_state(predicate, args)
        if not ok:
            raise ScenarioError(f"expect-state {predicate} {args} failed: {detail}")

    def _check_state(self, predicate: str, args: list[str]) -> tuple[bool, str]:
        state = self.forge.state
        if predicate in ("label-present", "label-absent"):
            repo, number, label = _parse_repo(args[0]), int(args[1]), args[2]
            labels = state.repo(repo).prs[number].labels
            present = label in labels
            want = predicate == "label-present"
            return present == want, f"labels are {sorted(labels)}"
        if predicate == "pr-state":
            repo, number, expected = _parse_repo(args[0]), int(args[1]), args[2]
            actual = state.repo(repo).prs[number].state
            return actual == expected, f"PR state is {actual}"
        if predicate == "pr-merged-signed":
            repo, number = _parse_repo(args[0]), int(args[1])
            pr = state.repo(repo).prs[number]
            return (
                pr.state == "merged" and pr.merge_signed,
                f"state={pr.state} signed={pr.merge_signed}",
            )
        if predicate == "card-in-column":
            repo, board, column, number = (
                _parse_repo(args[0]), args[1], args[2], int(args[3]),
            )
            cards = state.repo(repo).boards.get(board, {}).get(column, [])
            return number in cards, f"column {column!r} holds {cards}"
        if predicate == "no-card":
            repo, board, number = _parse_repo(args[0]), args[1], int(args[2])
            board_state = state.repo(repo).boards.get(board, {})
            held = [c for c, prs in board_state.items() if number in prs]
            return not held, f"card present in {held}"
        if predicate == "branch-at":
            repo, branch, sha = _parse_repo(args[0]), args[1], args[2]
            actual = state.repo(repo).branches.get(branch)
            return actual == sha, f"branch head is {actual}"
        if predicate == "branch-absent":
            repo, branch = _parse_repo(args[0]), args[1]
            return branch not in state.repo(repo).branches, "branch exists"
        if predicate == "check-run":
            repo, name, conclusion = _parse_repo(args[0]), args[1], args[2]
            runs = [
                r for r in state.repo(repo).check_runs
                if r.name == name and r.conclusion == conclusion
            ]
            return bool(runs), f"check runs: {state.repo(repo).check_runs}"
        raise ValueError(f"unknown predicate {predicate!r}")


def run_scenario(
    path: str | Path,
    config: Config | None = None,
    duplicate_deliveries: bool = False,
) -> Transcript:
    runner = ScenarioRunner(config=config, duplicate_deliveries=duplicate_deliveries)
    return runner.run_file(path)
