"""Contract suite for the forge port, run against the mock implementation.

Any other implementation of the port (e.g. the live adapter against recorded
fixtures) must satisfy the same assertions; they are written against the port
interface only.
"""

import pytest

from forgebot.model import (
    AddLabel,
    CiVerdict,
    LabelCategory,
    MergePr,
    PrState,
)
from forgebot.ports import ActionStatus, ConfigurationError, NotFound

from conftest import COQ, make_forge


@pytest.fixture(params=["mock"])
def port(request):
    forge, _ = make_forge()
    return forge


class TestSnapshotQueries:
    def test_snapshot_reflects_labels(self, port):
        port.apply(AddLabel(repo=COQ, pr_number=1, label="needs: rebase"))
        snapshot = port.get_pr_snapshot(COQ, 1)
        assert any(
            l.name == "needs: rebase" and l.category is LabelCategory.NEEDS
            for l in snapshot.labels
        )

    def test_snapshot_fields(self, port):
        snapshot = port.get_pr_snapshot(COQ, 1)
        assert snapshot.number == 1
        assert snapshot.author == "alice"
        assert snapshot.state is PrState.OPEN
        assert snapshot.ci_verdict is CiVerdict.SUCCESS
        assert snapshot.base.branch_name == "master"
        assert "bob" in snapshot.assignees
        assert snapshot.milestone is None

    def test_milestone_present_after_set(self, port):
        from forgebot.model import SetMilestone

        port.apply(SetMilestone(repo=COQ, pr_number=1, milestone_number=1))
        assert port.get_pr_snapshot(COQ, 1).milestone.number == 1

    def test_absent_pr_not_found(self, port):
        with pytest.raises(NotFound):
            port.get_pr_snapshot(COQ, 999)


class TestTeamMembership:
    def test_member(self, port):
        assert port.is_team_member("coq", "maintainers", "alice")

    def test_non_member(self, port):
        assert not port.is_team_member("coq", "maintainers", "mallory")

    def test_unknown_team_is_configuration_error(self, port):
        with pytest.raises(ConfigurationError):
            port.is_team_member("coq", "nonexistent", "alice")


class TestApplyContract:
    def test_applied_then_noop(self, port):
        action = AddLabel(repo=COQ, pr_number=1, label="needs: rebase")
        assert port.apply(action).status is ActionStatus.APPLIED
        assert port.apply(action).status is ActionStatus.NOOP

    def test_read_your_writes(self, port):
        port.apply(AddLabel(repo=COQ, pr_number=1, label="kind: bug"))
        assert port.get_pr_snapshot(COQ, 1).has_label("kind: bug")

    def test_merge_message_and_signature(self, port):
        message = "Merge PR #1: Add feature\n\nReviewed-by: bob"
        result = port.apply(MergePr(repo=COQ, pr_number=1, message=message, signed=True))
        assert result.status is ActionStatus.APPLIED
        snapshot = port.get_pr_snapshot(COQ, 1)
        assert snapshot.state is PrState.MERGED
        merge_commit = port.get_commit(COQ, result.detail)
        assert merge_commit.message == message

    def test_merge_conflicted_pr_failed(self, port):
        result = port.apply(MergePr(repo=COQ, pr_number=2, message="m", signed=True))
        assert result.status is ActionStatus.FAILED
        assert "not mergeable" in result.detail
