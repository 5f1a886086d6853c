"""Bot configuration: per-repository policies, templates, and thresholds.

Validation reports every problem in one pass so an operator can fix a broken
file in a single round trip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .model import LabelCategory, Provider, RepoId

DAY = 86400.0

DEFAULT_MERGE_TEMPLATE = "Merge PR #{number}: {title}\n\n{reviewed_by}"
DEFAULT_STALE_WARNING = (
    "PR #{pr_number} has had unresolved merge conflicts for {days} days. "
    "It will be closed after a further {grace_days} days unless the conflicts "
    "are resolved."
)
DEFAULT_STALE_CLOSURE = (
    "Closing PR #{pr_number}: merge conflicts remained unresolved for "
    "{days} days after the warning. Feel free to reopen once rebased."
)
DEFAULT_BACKPORT_REJECTION = (
    "The release manager decided not to backport PR #{pr_number}. "
    "Its milestone has been updated accordingly."
)
DEFAULT_MINIMIZER_USAGE = (
    "To request minimization, post a comment with a line "
    "`@{bot_handle} minimize` followed by a fenced code block containing the "
    "reproduction script."
)


class ConfigError(ValueError):
    """Raised with every validation problem found, newline-separated."""

    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class MergePolicy:
    authorized_team: str
    require_kind_label: bool = True
    forbidden_categories: frozenset[LabelCategory] = frozenset({LabelCategory.NEEDS})
    require_milestone: bool = True
    require_assignee: bool = True
    min_approvals: int = 1
    forbid_changes_requested: bool = True
    allowed_base_branches: frozenset[str] = frozenset()
    require_ci_success: bool = True
    forbid_self_merge: bool = False


@dataclass(frozen=True)
class StalePolicy:
    warn_after: float = 30 * DAY
    grace: float = 30 * DAY


@dataclass(frozen=True)
class Templates:
    merge_commit: str = DEFAULT_MERGE_TEMPLATE
    stale_warning: str = DEFAULT_STALE_WARNING
    stale_closure: str = DEFAULT_STALE_CLOSURE
    backport_rejection: str = DEFAULT_BACKPORT_REJECTION
    minimizer_usage: str = DEFAULT_MINIMIZER_USAGE


@dataclass(frozen=True)
class RepoConfig:
    repo: RepoId
    mirror: RepoId | None = None
    branch_prefix: str = "pr-"
    base_branches: frozenset[str] = frozenset({"master"})
    policy: MergePolicy = MergePolicy(authorized_team="maintainers")
    templates: Templates = Templates()
    stale: StalePolicy = StalePolicy()
    docs_jobs: frozenset[str] = frozenset()
    reverse_dep_jobs: frozenset[str] = frozenset()
    board: str = "Backports"
    needs_prefix: str = "needs: "
    kind_prefix: str = "kind: "
    rebase_label: str = "needs: rebase"


@dataclass(frozen=True)
class Config:
    bot_handle: str
    repositories: tuple[RepoConfig, ...]
    listen: str = "127.0.0.1:8000"
    secret_env: str = "BOT_WEBHOOK_SECRET"
    dedup_capacity: int = 4096

    def for_source(self, repo: RepoId) -> RepoConfig | None:
        for rc in self.repositories:
            if rc.repo == repo:
                return rc
        return None

    def for_mirror(self, repo: RepoId) -> RepoConfig | None:
        for rc in self.repositories:
            if rc.mirror == repo:
                return rc
        return None

    @property
    def configured_repos(self) -> set[RepoId]:
        repos = {rc.repo for rc in self.repositories}
        repos |= {rc.mirror for rc in self.repositories if rc.mirror}
        return repos

    @property
    def base_branches_by_repo(self) -> dict[RepoId, set[str]]:
        return {rc.repo: set(rc.base_branches) for rc in self.repositories}


def _parse_repo_id(text: str, expected: Provider, problems: list[str], ctx: str) -> RepoId | None:
    parts = text.split("/")
    if len(parts) != 2 or not all(parts):
        problems.append(f"{ctx}: expected owner/name, got {text!r}")
        return None
    try:
        return RepoId(expected, parts[0], parts[1])
    except ValueError as exc:
        problems.append(f"{ctx}: {exc}")
        return None


def _parse_repo_block(block: dict, idx: int, problems: list[str]) -> RepoConfig | None:
    ctx = f"repositories[{idx}]"
    if not isinstance(block, dict):
        problems.append(f"{ctx}: expected a mapping")
        return None
    repo_text = block.get("repo")
    if not repo_text:
        problems.append(f"{ctx}: missing required field 'repo'")
        return None
    repo = _parse_repo_id(str(repo_text), Provider.GITHUB, problems, f"{ctx}.repo")
    mirror = None
    if block.get("mirror"):
        mirror = _parse_repo_id(
            str(block["mirror"]), Provider.GITLAB, problems, f"{ctx}.mirror"
        )

    policy_block = block.get("merge_policy", {})
    team = policy_block.get("authorized_team", "maintainers")
    if not team:
        problems.append(f"{ctx}.merge_policy.authorized_team: must be non-empty")
    min_approvals = policy_block.get("min_approvals", 1)
    if not isinstance(min_approvals, int) or min_approvals < 0:
        problems.append(f"{ctx}.merge_policy.min_approvals: must be a non-negative integer")
        min_approvals = 1
    policy = MergePolicy(
        authorized_team=str(team),
        require_kind_label=bool(policy_block.get("require_kind_label", True)),
        require_milestone=bool(policy_block.get("require_milestone", True)),
        require_assignee=bool(policy_block.get("require_assignee", True)),
        min_approvals=min_approvals,
        forbid_changes_requested=bool(policy_block.get("forbid_changes_requested", True)),
        allowed_base_branches=frozenset(policy_block.get("allowed_base_branches", [])),
        require_ci_success=bool(policy_block.get("require_ci_success", True)),
        forbid_self_merge=bool(policy_block.get("forbid_self_merge", False)),
    )

    stale_block = block.get("stale", {})
    warn_days = stale_block.get("warn_after_days", 30)
    grace_days = stale_block.get("grace_days", 30)
    for label, value in (("warn_after_days", warn_days), ("grace_days", grace_days)):
        if not isinstance(value, (int, float)) or value <= 0:
            problems.append(f"{ctx}.stale.{label}: must be a positive number")
    stale = StalePolicy(warn_after=float(warn_days) * DAY, grace=float(grace_days) * DAY)

    templates_block = block.get("templates", {})
    templates = Templates(
        merge_commit=templates_block.get("merge_commit", DEFAULT_MERGE_TEMPLATE),
        stale_warning=templates_block.get("stale_warning", DEFAULT_STALE_WARNING),
        stale_closure=templates_block.get("stale_closure", DEFAULT_STALE_CLOSURE),
        backport_rejection=templates_block.get(
            "backport_rejection", DEFAULT_BACKPORT_REJECTION
        ),
        minimizer_usage=templates_block.get("minimizer_usage", DEFAULT_MINIMIZER_USAGE),
    )

    base_branches = frozenset(block.get("base_branches", ["master"]))
    if not base_branches:
        problems.append(f"{ctx}.base_branches: must not be empty")

    if repo is None:
        return None
    return RepoConfig(
        repo=repo,
        mirror=mirror,
        branch_prefix=str(block.get("branch_prefix", "pr-")),
        base_branches=base_branches,
        policy=policy,
        templates=templates,
        stale=stale,
        docs_jobs=frozenset(block.get("docs_jobs", [])),
        reverse_dep_jobs=frozenset(block.get("reverse_dep_jobs", [])),
        board=str(block.get("board", "Backports")),
    )


def parse_config(data: dict) -> Config:
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["top level: expected a mapping"])
    handle = data.get("bot_handle")
    if not handle or any(c.isspace() for c in str(handle)):
        problems.append("bot_handle: must be a non-whitespace, non-empty string")
    secret_env = data.get("secret_env", "BOT_WEBHOOK_SECRET")
    for key in ("secret_env",):
        value = data.get(key, "")
        if value and not str(value).isidentifier():
            problems.append(f"{key}: must name an environment variable, not a literal")
    blocks = data.get("repositories")
    if not blocks:
        problems.append("repositories: at least one repository block is required")
        blocks = []
    repos = []
    for idx, block in enumerate(blocks):
        rc = _parse_repo_block(block, idx, problems)
        if rc is not None:
            repos.append(rc)
    if problems:
        raise ConfigError(problems)
    return Config(
        bot_handle=str(handle),
        repositories=tuple(repos),
        listen=str(data.get("listen", "127.0.0.1:8000")),
        secret_env=str(secret_env),
        dedup_capacity=int(data.get("dedup_capacity", 4096)),
    )


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    data = yaml.safe_load(path.read_text())
    return parse_config(data or {})
