"""Deterministic in-memory forge: state model, pure action transition, seeding.

The mock implements the same port contract as the live adapter and is the test
bed for every workflow. `step` is a pure function so small action sequences can
be model-checked by brute force.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .model import (
    Action,
    AddCardToColumn,
    AddLabel,
    ClosePr,
    CreateCheckRun,
    DeleteBranch,
    DispatchJob,
    GitRef,
    JobFinished,
    MergePr,
    Milestone,
    MoveCard,
    PostComment,
    PrSnapshot,
    PrState,
    Provider,
    PushBranch,
    RemoveLabel,
    RepoId,
    SetCommitStatus,
    SetMilestone,
    ToyCommit,
    UpdateComment,
    CiVerdict,
    classify_label,
)
from .ports import (
    ActionResult,
    ActionStatus,
    CommitGraph,
    ConfigurationError,
    JobOutcome,
    MergeConflict,
    NotFound,
    toy_sha,
)

BOT_LOGIN = "bot"


@dataclass
class PrRecord:
    number: int
    author: str
    title: str
    head_branch: str
    base_branch: str
    labels: set[str] = field(default_factory=set)
    milestone: int | None = None
    assignees: set[str] = field(default_factory=set)
    approved_reviews: int = 0
    changes_requested_reviews: int = 0
    ci_verdict: str = "none"
    state: str = "open"
    merge_signed: bool = False
    merge_sha: str | None = None


@dataclass
class CommentRecord:
    id: int
    issue_number: int
    author: str
    body: str


@dataclass
class CheckRunRecord:
    sha: str
    name: str
    conclusion: str
    summary: str
    links: tuple[str, ...]


@dataclass
class RepoState:
    branches: dict[str, str] = field(default_factory=dict)
    commits: dict[str, ToyCommit] = field(default_factory=dict)
    prs: dict[int, PrRecord] = field(default_factory=dict)
    milestones: dict[int, Milestone] = field(default_factory=dict)
    boards: dict[str, dict[str, list[int]]] = field(default_factory=dict)
    comments: list[CommentRecord] = field(default_factory=list)
    job_outcomes: dict[int, JobOutcome] = field(default_factory=dict)
    check_runs: list[CheckRunRecord] = field(default_factory=list)
    commit_statuses: dict[tuple[str, str], tuple[str, str]] = field(default_factory=dict)
    dispatched_jobs: list[tuple[str, str]] = field(default_factory=list)
    next_comment_id: int = 1000


@dataclass
class ForgeState:
    repos: dict[RepoId, RepoState] = field(default_factory=dict)
    teams: dict[str, dict[str, set[str]]] = field(default_factory=dict)

    def repo(self, repo_id: RepoId) -> RepoState:
        try:
            return self.repos[repo_id]
        except KeyError:
            raise NotFound(f"unknown repo {repo_id}") from None


def _find_card(board: dict[str, list[int]], pr_number: int) -> str | None:
    for column, prs in board.items():
        if pr_number in prs:
            return column
    return None


def step(state: ForgeState, action: Action) -> tuple[ForgeState, ActionResult]:
    """Pure transition: apply one action, returning new state and its result.

    Idempotent by contract: re-applying an already-satisfied action is a NOOP.
    """
    new = copy.deepcopy(state)
    try:
        result = _apply(new, action)
    except NotFound as exc:
        return state, ActionResult(ActionStatus.FAILED, str(exc))
    if result.status is not ActionStatus.APPLIED:
        return state, result
    return new, result


def _applied(detail: str = "") -> ActionResult:
    return ActionResult(ActionStatus.APPLIED, detail)


def _noop(detail: str = "") -> ActionResult:
    return ActionResult(ActionStatus.NOOP, detail)


def _failed(detail: str) -> ActionResult:
    return ActionResult(ActionStatus.FAILED, detail)


def _apply(state: ForgeState, action: Action) -> ActionResult:
    rs = state.repo(action.repo)

    if isinstance(action, AddLabel):
        pr = _pr(rs, action.pr_number)
        if action.label in pr.labels:
            return _noop("label already present")
        pr.labels.add(action.label)
        return _applied()

    if isinstance(action, RemoveLabel):
        pr = _pr(rs, action.pr_number)
        if action.label not in pr.labels:
            return _noop("label already absent")
        pr.labels.remove(action.label)
        return _applied()

    if isinstance(action, PostComment):
        if any(
            c.issue_number == action.issue_number
            and c.author == BOT_LOGIN
            and c.body == action.body
            for c in rs.comments
        ):
            return _noop("identical comment already posted")
        rs.comments.append(
            CommentRecord(rs.next_comment_id, action.issue_number, BOT_LOGIN, action.body)
        )
        rs.next_comment_id += 1
        return _applied()

    if isinstance(action, UpdateComment):
        for c in rs.comments:
            if c.id == action.comment_id:
                if c.body == action.body:
                    return _noop("comment body unchanged")
                c.body = action.body
                return _applied()
        return _failed(f"no comment {action.comment_id}")

    if isinstance(action, ClosePr):
        pr = _pr(rs, action.pr_number)
        if pr.state != "open":
            return _noop(f"PR already {pr.state}")
        pr.state = "closed"
        return _applied()

    if isinstance(action, SetMilestone):
        pr = _pr(rs, action.pr_number)
        if action.milestone_number not in rs.milestones:
            return _failed(f"no milestone {action.milestone_number}")
        if pr.milestone == action.milestone_number:
            return _noop("milestone already set")
        pr.milestone = action.milestone_number
        return _applied()

    if isinstance(action, MergePr):
        pr = _pr(rs, action.pr_number)
        if pr.state == "merged":
            return _noop("PR already merged")
        if pr.state == "closed":
            return _failed("PR is closed")
        graph = CommitGraph(rs.commits)
        base_head = rs.branches[pr.base_branch]
        pr_head = rs.branches[pr.head_branch]
        try:
            commit = graph.synthesize_merge(base_head, pr_head, action.message)
        except MergeConflict as exc:
            return _failed(f"not mergeable: conflicting files {exc}")
        rs.commits[commit.sha] = commit
        rs.branches[pr.base_branch] = commit.sha
        pr.state = "merged"
        pr.merge_signed = action.signed
        pr.merge_sha = commit.sha
        return _applied(commit.sha)

    if isinstance(action, PushBranch):
        for commit in action.new_commits:
            expected = toy_sha(commit.parents, commit.files, commit.message)
            if commit.sha != expected:
                return _failed(f"commit {commit.sha} fails content check")
            rs.commits.setdefault(commit.sha, commit)
        if action.sha not in rs.commits:
            return _failed(f"unknown commit {action.sha}")
        current = rs.branches.get(action.branch)
        if current == action.sha:
            return _noop("branch already at target")
        if current is not None and not action.force:
            graph = CommitGraph(rs.commits)
            if current not in graph.ancestors(action.sha):
                return _failed("non-fast-forward push without force")
        rs.branches[action.branch] = action.sha
        return _applied()

    if isinstance(action, DeleteBranch):
        if action.branch not in rs.branches:
            return _noop("branch already absent")
        del rs.branches[action.branch]
        return _applied()

    if isinstance(action, CreateCheckRun):
        record = CheckRunRecord(
            action.sha, action.name, action.conclusion, action.summary, action.links
        )
        for i, existing in enumerate(rs.check_runs):
            if (existing.sha, existing.name) == (action.sha, action.name):
                if existing == record:
                    return _noop("identical check run exists")
                rs.check_runs[i] = record
                return _applied()
        rs.check_runs.append(record)
        return _applied()

    if isinstance(action, SetCommitStatus):
        key = (action.sha, action.context)
        value = (action.state, action.description)
        if rs.commit_statuses.get(key) == value:
            return _noop("status unchanged")
        rs.commit_statuses[key] = value
        return _applied()

    if isinstance(action, AddCardToColumn):
        board = rs.boards.setdefault(action.board, {})
        if _find_card(board, action.pr_number) is not None:
            return _noop("card already on board")
        board.setdefault(action.column, []).append(action.pr_number)
        return _applied()

    if isinstance(action, MoveCard):
        board = rs.boards.get(action.board, {})
        column = _find_card(board, action.pr_number)
        if column is None:
            return _failed(f"no card for PR {action.pr_number}")
        if column == action.to_column:
            return _noop("card already in column")
        board[column].remove(action.pr_number)
        board.setdefault(action.to_column, []).append(action.pr_number)
        return _applied()

    if isinstance(action, DispatchJob):
        if any(rid == action.request_id for rid, _ in rs.dispatched_jobs):
            return _noop("job already dispatched")
        rs.dispatched_jobs.append((action.request_id, action.script))
        return _applied()

    return _failed(f"unsupported action {type(action).__name__}")


def _pr(rs: RepoState, number: int) -> PrRecord:
    try:
        return rs.prs[number]
    except KeyError:
        raise NotFound(f"no PR {number}") from None


class MockForge:
    """ForgePort implementation over an in-memory ForgeState."""

    def __init__(self, state: ForgeState | None = None):
        self.state = state or ForgeState()
        # Set by the engine while workflow handlers run; handlers must not
        # mutate the forge directly.
        self.read_only = False

    # -- queries --

    def get_pr_snapshot(self, repo: RepoId, number: int) -> PrSnapshot:
        rs = self.state.repo(repo)
        pr = _pr(rs, number)
        milestone = rs.milestones.get(pr.milestone) if pr.milestone else None
        head_sha = rs.branches.get(pr.head_branch, pr.merge_sha or "0" * 40)
        return PrSnapshot(
            number=pr.number,
            author=pr.author,
            head=GitRef(repo, pr.head_branch, head_sha),
            base=GitRef(repo, pr.base_branch, rs.branches[pr.base_branch]),
            labels=frozenset(classify_label(l) for l in pr.labels),
            milestone=milestone,
            assignees=frozenset(pr.assignees),
            approved_reviews=pr.approved_reviews,
            changes_requested_reviews=pr.changes_requested_reviews,
            ci_verdict=CiVerdict(pr.ci_verdict),
            state=PrState(pr.state),
            title=pr.title,
        )

    def is_team_member(self, org: str, team: str, user: str) -> bool:
        teams = self.state.teams.get(org, {})
        if team not in teams:
            raise ConfigurationError(f"unknown team {org}/{team}")
        return user in teams[team]

    def get_commit_graph(self, repo: RepoId) -> CommitGraph:
        return CommitGraph(self.state.repo(repo).commits)

    def get_commit(self, repo: RepoId, sha: str) -> ToyCommit:
        return self.get_commit_graph(repo).get(sha)

    def list_open_prs(self, repo: RepoId) -> list[PrSnapshot]:
        rs = self.state.repo(repo)
        return [
            self.get_pr_snapshot(repo, n)
            for n in sorted(rs.prs)
            if rs.prs[n].state == "open"
        ]

    def get_job_outcome(self, repo: RepoId, event: JobFinished) -> JobOutcome:
        rs = self.state.repo(repo)
        try:
            return rs.job_outcomes[event.job_id]
        except KeyError:
            raise NotFound(f"no job {event.job_id}") from None

    def get_milestone(self, repo: RepoId, number: int) -> Milestone:
        rs = self.state.repo(repo)
        try:
            return rs.milestones[number]
        except KeyError:
            raise NotFound(f"no milestone {number}") from None

    def list_milestones(self, repo: RepoId) -> list[Milestone]:
        rs = self.state.repo(repo)
        return [rs.milestones[n] for n in sorted(rs.milestones)]

    def get_board_cards(self, repo: RepoId, board: str) -> dict[str, list[int]]:
        rs = self.state.repo(repo)
        return {c: list(prs) for c, prs in rs.boards.get(board, {}).items()}

    # -- mutation --

    def apply(self, action: Action) -> ActionResult:
        if self.read_only:
            raise RuntimeError(
                "forge mutation attempted during workflow handler evaluation"
            )
        new_state, result = step(self.state, action)
        self.state = new_state
        return result

    # -- seeding helpers --

    def seed_commit(
        self, repo: RepoId, parents: tuple[str, ...], files: set[str], message: str
    ) -> str:
        rs = self.state.repos.setdefault(repo, RepoState())
        commit = ToyCommit(
            sha=toy_sha(parents, frozenset(files), message),
            parents=parents,
            files=frozenset(files),
            message=message,
        )
        rs.commits[commit.sha] = commit
        return commit.sha

    def digest(self) -> str:
        """Stable digest of the whole forge state, for transcript comparison."""
        import hashlib

        def canon(obj):
            if isinstance(obj, dict):
                return sorted((repr(k), canon(v)) for k, v in obj.items())
            if isinstance(obj, (set, frozenset)):
                return sorted(repr(x) for x in obj)
            if isinstance(obj, (list, tuple)):
                return [canon(x) for x in obj]
            if hasattr(obj, "__dataclass_fields__"):
                return [(f, canon(getattr(obj, f))) for f in obj.__dataclass_fields__]
            return repr(obj)

        return hashlib.sha256(repr(canon(self.state)).encode()).hexdigest()


def load_seed(path: str | Path) -> tuple[ForgeState, dict[str, str]]:
    """Build a ForgeState from a JSON seed file.

    Commits are declared with symbolic ids; the returned mapping resolves those
    ids to their content-addressed shas.
    """
    data = json.loads(Path(path).read_text())
    state = ForgeState()
    shas: dict[str, str] = {}
    for repo_key, repo_data in data.get("repos", {}).items():
        provider_name, owner, name = repo_key.split("/", 2)
        repo_id = RepoId(Provider(provider_name), owner, name)
        rs = RepoState()
        for c in repo_data.get("commits", []):
            parents = tuple(shas[p] for p in c.get("parents", []))
            commit = ToyCommit(
                sha=toy_sha(parents, frozenset(c.get("files", [])), c["message"]),
                parents=parents,
                files=frozenset(c.get("files", [])),
                message=c["message"],
            )
            rs.commits[commit.sha] = commit
            shas[c["id"]] = commit.sha
        for branch, cid in repo_data.get("branches", {}).items():
            rs.branches[branch] = shas[cid]
        for p in repo_data.get("prs", []):
            rs.prs[p["number"]] = PrRecord(
                number=p["number"],
                author=p["author"],
                title=p.get("title", f"PR {p['number']}"),
                head_branch=p["head"],
                base_branch=p["base"],
                labels=set(p.get("labels", [])),
                milestone=p.get("milestone"),
                assignees=set(p.get("assignees", [])),
                approved_reviews=p.get("approved", 0),
                changes_requested_reviews=p.get("changes_requested", 0),
                ci_verdict=p.get("ci", "none"),
                state=p.get("state", "open"),
            )
        for m in repo_data.get("milestones", []):
            rs.milestones[m["number"]] = Milestone(
                title=m["title"],
                description=m.get("description", ""),
                number=m["number"],
            )
        for board, columns in repo_data.get("boards", {}).items():
            rs.boards[board] = {col: list(prs) for col, prs in columns.items()}
        for j in repo_data.get("jobs", []):
            rs.job_outcomes[j["id"]] = JobOutcome(
                job_name=j["name"],
                status=j["status"],
                log=j.get("log", ""),
                web_url=j.get("web_url", ""),
                artifact_links=tuple(
                    (a["name"], a["link"]) for a in j.get("artifacts", [])
                ),
                script=j.get("script", ""),
            )
        state.repos[repo_id] = rs
    for org, teams in data.get("teams", {}).items():
        state.teams[org] = {t: set(members) for t, members in teams.items()}
    return state, shas
