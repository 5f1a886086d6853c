"""Live forge adapter: GraphQL for aggregate reads, REST for mutations.

Implements the same port contract as the mock. Tokens come from the
environment (`BOT_GITHUB_TOKEN`, `BOT_GITLAB_TOKEN`). Transport failures are
retried with exponential backoff before surfacing as FAILED.

Candidate pushes require a local git checkout of the source repository
(`workdir`); everything else goes over HTTPS.
"""

from __future__ import annotations

import logging
import os
import subprocess
import time
from typing import Callable

import httpx

from .model import (
    Action,
    AddCardToColumn,
    AddLabel,
    ClosePr,
    CreateCheckRun,
    DeleteBranch,
    GitRef,
    Label,
    MergePr,
    Milestone,
    MoveCard,
    PostComment,
    PrSnapshot,
    PrState,
    PushBranch,
    RemoveLabel,
    RepoId,
    SetMilestone,
    UpdateComment,
    CiVerdict,
    classify_label,
)
from .ports import (
    ActionResult,
    ActionStatus,
    ConfigurationError,
    NotFound,
    TransportError,
)

logger = logging.getLogger(__name__)

GITHUB_GRAPHQL = "https://api.github.com/graphql"
GITHUB_REST = "https://api.github.com"

RETRY_BASE_SECONDS = 1.0
RETRY_FACTOR = 2.0
RETRY_MAX_ATTEMPTS = 5

SNAPSHOT_QUERY = """
query($owner: String!, $name: String!, $number: Int!) {
  repository(owner: $owner, name: $name) {
    pullRequest(number: $number) {
      number title state merged
      author { login }
      headRefName headRefOid baseRefName baseRefOid
      labels(first: 100) { nodes { name } }
      milestone { title number description }
      assignees(first: 20) { nodes { login } }
      reviews(first: 100, states: [APPROVED, CHANGES_REQUESTED]) {
        nodes { state }
      }
      commits(last: 1) {
        nodes { commit { statusCheckRollup { state } } }
      }
    }
  }
}
"""


class LiveForge:
    """HTTP implementation of the forge port (one aggregate query per snapshot)."""

    def __init__(
        self,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
        workdir: str | None = None,
    ):
        self._client = client or httpx.Client(timeout=30.0)
        self._sleep = sleep
        self._workdir = workdir
        self.read_only = False
        self._team_cache: dict[tuple[str, str, str], tuple[bool, float]] = {}

    def _github_headers(self) -> dict[str, str]:
        token = os.environ.get("BOT_GITHUB_TOKEN", "")
        return {"Authorization": f"Bearer {token}"}

    def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        delay = RETRY_BASE_SECONDS
        for attempt in range(1, RETRY_MAX_ATTEMPTS + 1):
            try:
                response = self._client.request(
                    method, url, headers=self._github_headers(), **kwargs
                )
            except httpx.TransportError as exc:
                if attempt == RETRY_MAX_ATTEMPTS:
                    raise TransportError(str(exc)) from exc
                self._sleep(delay)
                delay *= RETRY_FACTOR
                continue
            if response.status_code >= 500 and attempt < RETRY_MAX_ATTEMPTS:
                self._sleep(delay)
                delay *= RETRY_FACTOR
                continue
            return response
        raise TransportError("retries exhausted")

    # -- queries --

    def get_pr_snapshot(self, repo: RepoId, number: int) -> PrSnapshot:
        response = self._request(
            "POST",
            GITHUB_GRAPHQL,
            json={
                "query": SNAPSHOT_QUERY,
                "variables": {"owner": repo.owner, "name": repo.name, "number": number},
            },
        )
        data = response.json().get("data", {}).get("repository", {})
        pr = (data or {}).get("pullRequest")
        if pr is None:
            raise NotFound(f"PR {number} not found in {repo}")
        reviews = [n["state"] for n in pr["reviews"]["nodes"]]
        rollup = pr["commits"]["nodes"][0]["commit"].get("statusCheckRollup")
        verdict = {
            "SUCCESS": CiVerdict.SUCCESS,
            "FAILURE": CiVerdict.FAILURE,
            "ERROR": CiVerdict.FAILURE,
            "PENDING": CiVerdict.PENDING,
            "EXPECTED": CiVerdict.PENDING,
        }.get((rollup or {}).get("state", ""), CiVerdict.NONE)
        state = (
            PrState.MERGED
            if pr["merged"]
            else PrState.OPEN if pr["state"] == "OPEN" else PrState.CLOSED
        )
        milestone = pr.get("milestone")
        return PrSnapshot(
            number=pr["number"],
            author=pr["author"]["login"],
            head=GitRef(repo, pr["headRefName"], pr["headRefOid"]),
            base=GitRef(repo, pr["baseRefName"], pr["baseRefOid"]),
            labels=frozenset(
                classify_label(n["name"]) for n in pr["labels"]["nodes"]
            ),
            milestone=Milestone(
                title=milestone["title"],
                description=milestone.get("description") or "",
                number=milestone["number"],
            )
            if milestone
            else None,
            assignees=frozenset(n["login"] for n in pr["assignees"]["nodes"]),
            approved_reviews=reviews.count("APPROVED"),
            changes_requested_reviews=reviews.count("CHANGES_REQUESTED"),
            ci_verdict=verdict,
            state=state,
            title=pr["title"],
        )

    def is_team_member(self, org: str, team: str, user: str) -> bool:
        cached = self._team_cache.get((org, team, user))
        if cached and time.monotonic() - cached[1] < 60.0:
            return cached[0]
        response = self._request(
            "GET", f"{GITHUB_REST}/orgs/{org}/teams/{team}/memberships/{user}"
        )
        if response.status_code == 404:
            # Distinguish missing team from missing membership
            team_check = self._request("GET", f"{GITHUB_REST}/orgs/{org}/teams/{team}")
            if team_check.status_code == 404:
                raise ConfigurationError(f"unknown team {org}/{team}")
            member = False
        else:
            member = response.json().get("state") == "active"
        self._team_cache[(org, team, user)] = (member, time.monotonic())
        return member

    def get_commit_graph(self, repo: RepoId):
        raise NotImplementedError(
            "live commit-graph access requires a git workdir; use plan_sync against "
            "a local clone"
        )

    def get_commit(self, repo: RepoId, sha: str):
        raise NotImplementedError("live commit lookup not implemented")

    def list_open_prs(self, repo: RepoId) -> list[PrSnapshot]:
        response = self._request(
            "GET",
            f"{GITHUB_REST}/repos/{repo.slug}/pulls",
            params={"state": "open", "per_page": 100},
        )
        return [self.get_pr_snapshot(repo, p["number"]) for p in response.json()]

    def get_job_outcome(self, repo: RepoId, event):
        raise NotImplementedError("live GitLab job log retrieval not implemented")

    def get_milestone(self, repo: RepoId, number: int) -> Milestone:
        response = self._request(
            "GET", f"{GITHUB_REST}/repos/{repo.slug}/milestones/{number}"
        )
        if response.status_code == 404:
            raise NotFound(f"no milestone {number}")
        m = response.json()
        return Milestone(
            title=m["title"], description=m.get("description") or "", number=m["number"]
        )

    def list_milestones(self, repo: RepoId) -> list[Milestone]:
        response = self._request("GET", f"{GITHUB_REST}/repos/{repo.slug}/milestones")
        return [
            Milestone(
                title=m["title"],
                description=m.get("description") or "",
                number=m["number"],
            )
            for m in response.json()
        ]

    def get_board_cards(self, repo: RepoId, board: str) -> dict[str, list[int]]:
        raise NotImplementedError("live project-board reads not implemented")

    # -- mutation --

    def apply(self, action: Action) -> ActionResult:
        if self.read_only:
            raise RuntimeError(
                "forge mutation attempted during workflow handler evaluation"
            )
        try:
            return self._apply(action)
        except TransportError as exc:
            return ActionResult(ActionStatus.FAILED, f"transport: {exc}")

    def _apply(self, action: Action) -> ActionResult:
        slug = action.repo.slug
        if isinstance(action, AddLabel):
            r = self._request(
                "POST",
                f"{GITHUB_REST}/repos/{slug}/issues/{action.pr_number}/labels",
                json={"labels": [action.label]},
            )
            return self._result(r)
        if isinstance(action, RemoveLabel):
            r = self._request(
                "DELETE",
                f"{GITHUB_REST}/repos/{slug}/issues/{action.pr_number}/labels/{action.label}",
            )
            if r.status_code == 404:
                return ActionResult(ActionStatus.NOOP, "label already absent")
            return self._result(r)
        if isinstance(action, PostComment):
            r = self._request(
                "POST",
                f"{GITHUB_REST}/repos/{slug}/issues/{action.issue_number}/comments",
                json={"body": action.body},
            )
            return self._result(r)
        if isinstance(action, UpdateComment):
            r = self._request(
                "PATCH",
                f"{GITHUB_REST}/repos/{slug}/issues/comments/{action.comment_id}",
                json={"body": action.body},
            )
            return self._result(r)
        if isinstance(action, ClosePr):
            r = self._request(
                "PATCH",
                f"{GITHUB_REST}/repos/{slug}/pulls/{action.pr_number}",
                json={"state": "closed"},
            )
            return self._result(r)
        if isinstance(action, SetMilestone):
            r = self._request(
                "PATCH",
                f"{GITHUB_REST}/repos/{slug}/issues/{action.pr_number}",
                json={"milestone": action.milestone_number},
            )
            return self._result(r)
        if isinstance(action, MergePr):
            title, _, rest = action.message.partition("\n\n")
            r = self._request(
                "PUT",
                f"{GITHUB_REST}/repos/{slug}/pulls/{action.pr_number}/merge",
                json={
                    "merge_method": "merge",
                    "commit_title": title,
                    "commit_message": rest,
                },
            )
            if r.status_code == 405:
                return ActionResult(ActionStatus.FAILED, "not mergeable")
            return self._result(r)
        if isinstance(action, (PushBranch, DeleteBranch)):
            return self._git_push(action)
        if isinstance(action, CreateCheckRun):
            r = self._request(
                "POST",
                f"{GITHUB_REST}/repos/{slug}/check-runs",
                json={
                    "name": action.name,
                    "head_sha": action.sha,
                    "conclusion": action.conclusion,
                    "output": {"title": action.name, "summary": action.summary},
                },
            )
            return self._result(r)
        if isinstance(action, (AddCardToColumn, MoveCard)):
            raise NotImplementedError("live project-board mutations not implemented")
        return ActionResult(ActionStatus.FAILED, f"unsupported {type(action).__name__}")

    @staticmethod
    def _result(response: httpx.Response) -> ActionResult:
        if 200 <= response.status_code < 300:
            return ActionResult(ActionStatus.APPLIED)
        return ActionResult(
            ActionStatus.FAILED, f"HTTP {response.status_code}: {response.text[:200]}"
        )

    def _git_push(self, action: Action) -> ActionResult:
        if self._workdir is None:
            return ActionResult(
                ActionStatus.FAILED, "no git workdir configured for branch pushes"
            )
        if isinstance(action, PushBranch):
            refspec = f"{action.sha}:refs/heads/{action.branch}"
            cmd = ["git", "push"] + (["--force"] if action.force else []) + [
                "mirror", refspec,
            ]
        else:
            cmd = ["git", "push", "mirror", f":refs/heads/{action.branch}"]
        proc = subprocess.run(
            cmd, cwd=self._workdir, capture_output=True, text=True
        )
        if proc.returncode != 0:
            return ActionResult(ActionStatus.FAILED, proc.stderr.strip()[:200])
        return ActionResult(ActionStatus.APPLIED)
