import pytest

from forgebot.config import Config, MergePolicy, RepoConfig
from forgebot.mockforge import ForgeState, MockForge, PrRecord, RepoState
from forgebot.model import Milestone, Provider, RepoId
from forgebot.ports import toy_sha
from forgebot.model import ToyCommit

COQ = RepoId(Provider.GITHUB, "coq", "coq")
MIRROR = RepoId(Provider.GITLAB, "coq", "coq")


def commit(parents, files, message):
    parents = tuple(parents)
    return ToyCommit(
        sha=toy_sha(parents, frozenset(files), message),
        parents=parents,
        files=frozenset(files),
        message=message,
    )


def make_config(**overrides) -> Config:
    rc = RepoConfig(
        repo=COQ,
        mirror=MIRROR,
        base_branches=frozenset({"master"}),
        policy=MergePolicy(
            authorized_team="maintainers",
            allowed_base_branches=frozenset({"master"}),
        ),
        docs_jobs=frozenset({"doc:refman"}),
        reverse_dep_jobs=frozenset({"ci-mathcomp"}),
    )
    defaults = dict(bot_handle="coqbot", repositories=(rc,))
    defaults.update(overrides)
    return Config(**defaults)


def make_forge() -> tuple[MockForge, dict[str, str]]:
    """A small world: one clean PR, one conflicting PR, teams, milestones."""
    root = commit((), {"base.v"}, "init")
    master = commit((root.sha,), {"core.v"}, "master work")
    feat = commit((root.sha,), {"feature.v"}, "add feature")
    clash = commit((root.sha,), {"core.v"}, "conflicting change")

    src = RepoState()
    for c in (root, master, feat, clash):
        src.commits[c.sha] = c
    src.branches = {"master": master.sha, "feat-1": feat.sha, "feat-2": clash.sha}
    src.prs[1] = PrRecord(
        number=1,
        author="alice",
        title="Add feature",
        head_branch="feat-1",
        base_branch="master",
        labels={"kind: feature"},
        assignees={"bob"},
        approved_reviews=1,
        ci_verdict="success",
    )
    src.prs[2] = PrRecord(
        number=2,
        author="dora",
        title="Conflicting change",
        head_branch="feat-2",
        base_branch="master",
    )
    src.milestones[1] = Milestone(title="8.14.0", description="dev cycle", number=1)
    src.milestones[2] = Milestone(
        title="8.13.1",
        description="coqbot: backport to v8.13 (rejection milestone: 3)",
        number=2,
    )
    src.milestones[3] = Milestone(title="8.13.2", description="next patch", number=3)

    state = ForgeState(
        repos={COQ: src, MIRROR: RepoState()},
        teams={"coq": {"maintainers": {"alice", "charlie"}}},
    )
    shas = {"root": root.sha, "master": master.sha, "feat": feat.sha, "clash": clash.sha}
    return MockForge(state), shas


@pytest.fixture
def config():
    return make_config()


@pytest.fixture
def forge():
    return make_forge()[0]


@pytest.fixture
def world():
    forge, shas = make_forge()
    return forge, shas
