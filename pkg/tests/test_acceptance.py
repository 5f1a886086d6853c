"""End-to-end acceptance checks, one per shipped guarantee.

Each test prints a single PASS/FAIL line (visible with `pytest -s` or in the
captured output of a failing run).  All checks run offline against the mock
forge; all counts are exact, with zero tolerance.
"""

import contextlib
import itertools
import random
import subprocess
import sys
from pathlib import Path

from forgebot.ci_bridge import CiBridgeWorkflow, candidate_message
from forgebot.config import DAY
from forgebot.gateway import verify_signature
from forgebot.hygiene import PrHygieneWorkflow
from forgebot.merge_service import ViolationCode, evaluate_policy
from forgebot.minimizer import MinimizerWorkflow
from forgebot.mockforge import ForgeState, MockForge, PrRecord, RepoState
from forgebot.model import (
    AddCardToColumn,
    AddLabel,
    BaseBranchPushed,
    CiVerdict,
    ClockTick,
    ClosePr,
    CommentPosted,
    CreateCheckRun,
    DeleteBranch,
    DispatchJob,
    Event,
    GitRef,
    JobFinished,
    MergePr,
    Milestone,
    MoveCard,
    PostComment,
    PrOpened,
    PrSnapshot,
    PrState,
    PushBranch,
    RunnerJobCompleted,
    classify_label,
)
from forgebot.ports import CommitGraph, JobOutcome
from forgebot.scenario import run_scenario

from conftest import COQ, MIRROR, commit, make_config, make_forge
from test_gateway import HMAC_VECTORS
from test_mock_forge import oracle_conflicts, random_dag

SCENARIOS = Path(__file__).parent / "scenarios"


@contextlib.contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException:
        print(f"acceptance {number} ({title}): FAIL", flush=True)
        raise
    print(f"acceptance {number} ({title}): PASS", flush=True)


def test_1_figure1_golden_sequence():
    with criterion(1, "command-driven merge and backport scenario"):
        transcript = run_scenario(SCENARIOS / "figure1.scenario")
        root = commit((), {"base.v"}, "initial")
        master = commit((root.sha,), {"core.v"}, "core work")
        feat = commit((root.sha,), {"feature.v"}, "add feature")
        candidate = commit(
            (master.sha, feat.sha),
            {"core.v", "feature.v"},
            candidate_message(1, feat.sha, master.sha),
        )
        pack = tuple(sorted((root, master, feat), key=lambda c: c.sha)) + (candidate,)
        golden = [
            PushBranch(
                repo=MIRROR, branch="pr-1", sha=candidate.sha, force=True, new_commits=pack
            ),
            PostComment(
                repo=COQ,
                issue_number=1,
                body=(
                    "Cannot merge PR #1 yet; the following must be addressed first:\n"
                    "- the PR has no milestone"
                ),
            ),
            MergePr(
                repo=COQ,
                pr_number=1,
                message="Merge PR #1: Add feature\n\nReviewed-by: bob",
                signed=True,
            ),
            DeleteBranch(repo=MIRROR, branch="pr-1"),
            AddCardToColumn(
                repo=COQ, board="Backports", column="Backport requested", pr_number=1
            ),
            MoveCard(repo=COQ, board="Backports", pr_number=1, to_column="Shipped"),
        ]
        assert transcript.actions() == golden


def test_2_merge_candidate_invariant():
    with criterion(2, "merge-candidate invariant over 200 random DAGs"):
        config = make_config()
        rng = random.Random(20210901)
        conflicts = clean = 0
        for _ in range(200):
            commits, order = random_dag(rng)
            head, base = rng.sample(order, 2)
            rs = RepoState()
            rs.commits = dict(commits)
            rs.branches = {"master": base, "feat": head}
            rs.prs[1] = PrRecord(
                number=1, author="alice", title="t", head_branch="feat", base_branch="master"
            )
            forge = MockForge(
                ForgeState(
                    repos={COQ: rs, MIRROR: RepoState()},
                    teams={"coq": {"maintainers": {"alice"}}},
                )
            )
            event = Event(delivery_id="d", repo=COQ, payload=PrOpened(number=1))
            actions = CiBridgeWorkflow().handle(event, forge, config, 0.0)
            actions += PrHygieneWorkflow().handle(event, forge, config, 0.0)
            pushes = [a for a in actions if isinstance(a, PushBranch)]
            labels = [a for a in actions if isinstance(a, AddLabel)]
            if oracle_conflicts(commits, head, base):
                conflicts += 1
                assert pushes == []
                assert len(labels) == 1 and labels[0].label == "needs: rebase"
            else:
                clean += 1
                assert labels == []
                assert len(pushes) == 1
                candidate = pushes[0].new_commits[-1]
                assert candidate.sha == pushes[0].sha
                assert set(candidate.parents) == {head, base}
        assert conflicts > 20 and clean > 20


def _tick_actions(wf, forge, config, at):
    return wf.handle(
        Event(delivery_id=f"t{at}", repo=COQ, payload=ClockTick(at=at)),
        forge,
        config,
        now=at,
    )


def test_3_stale_policy_timing():
    with criterion(3, "stale conflict warning and closure timing"):
        config = make_config()

        forge, _ = make_forge()
        wf = PrHygieneWorkflow()
        (add,) = wf.handle(
            Event(delivery_id="d", repo=COQ, payload=PrOpened(number=2)),
            forge, config, now=0.0,
        )
        forge.apply(add)
        assert _tick_actions(wf, forge, config, 29 * DAY) == []
        warn = _tick_actions(wf, forge, config, 30 * DAY)
        assert len(warn) == 1 and isinstance(warn[0], PostComment)
        forge.apply(warn[0])
        assert _tick_actions(wf, forge, config, 59 * DAY) == []
        final = _tick_actions(wf, forge, config, 60 * DAY)
        assert sum(isinstance(a, ClosePr) for a in final) == 1
        for a in final:
            forge.apply(a)

        # resolved at t0+45d: no closure, ever
        forge, _ = make_forge()
        wf = PrHygieneWorkflow()
        (add,) = wf.handle(
            Event(delivery_id="d", repo=COQ, payload=PrOpened(number=2)),
            forge, config, now=0.0,
        )
        forge.apply(add)
        (warn,) = _tick_actions(wf, forge, config, 30 * DAY)
        forge.apply(warn)
        forge.state.repos[COQ].prs[2].head_branch = "feat-1"  # conflict resolved
        (remove,) = wf.handle(
            Event(delivery_id="d2", repo=COQ, payload=PrOpened(number=2)),
            forge, config, now=45 * DAY,
        )
        forge.apply(remove)
        for at in (60 * DAY, 90 * DAY, 365 * DAY):
            assert _tick_actions(wf, forge, config, at) == []


def test_4_complete_feedback_oracle():
    with criterion(4, "complete merge-policy feedback over all 2^6 cases"):
        policy = make_config().repositories[0].policy
        dimensions = [
            ("needs_label", True, ViolationCode.HAS_NEEDS_LABEL),
            ("kind_label", False, ViolationCode.NO_KIND_LABEL),
            ("milestone", False, ViolationCode.NO_MILESTONE),
            ("assignee", False, ViolationCode.NO_ASSIGNEE),
            ("approvals", 0, ViolationCode.INSUFFICIENT_REVIEWS),
            ("ci", CiVerdict.FAILURE, ViolationCode.CI_NOT_GREEN),
        ]
        for bits in itertools.product([False, True], repeat=6):
            values = dict(
                needs_label=False, kind_label=True, milestone=True,
                assignee=True, approvals=1, ci=CiVerdict.SUCCESS,
            )
            expected = set()
            for on, (name, bad, code) in zip(bits, dimensions):
                if on:
                    values[name] = bad
                    expected.add(code)
            labels = set()
            if values["needs_label"]:
                labels.add(classify_label("needs: rebase"))
            if values["kind_label"]:
                labels.add(classify_label("kind: feature"))
            snapshot = PrSnapshot(
                number=1,
                author="alice",
                head=GitRef(COQ, "feat", "a" * 40),
                base=GitRef(COQ, "master", "b" * 40),
                labels=frozenset(labels),
                milestone=Milestone(title="m", description="", number=1)
                if values["milestone"] else None,
                assignees=frozenset({"bob"}) if values["assignee"] else frozenset(),
                approved_reviews=values["approvals"],
                changes_requested_reviews=0,
                ci_verdict=values["ci"],
                state=PrState.OPEN,
                title="t",
            )
            violations = evaluate_policy(snapshot, "alice", True, policy)
            assert {v.code for v in violations} == expected, bits


def test_5_duplicate_delivery_identity():
    with criterion(5, "duplicate webhook deliveries leave no trace"):
        for name in ("figure1", "stale_close", "minimize"):
            once = run_scenario(SCENARIOS / f"{name}.scenario")
            twice = run_scenario(
                SCENARIOS / f"{name}.scenario", duplicate_deliveries=True
            )
            assert once.render() == twice.render(), name
            assert once.final_digest == twice.final_digest, name


def test_6_status_mapping():
    with criterion(6, "pipeline status mapped onto the origin head commit"):
        forge, shas = make_forge()
        config = make_config()
        wf = CiBridgeWorkflow()

        def job_event(job_id, name, sha):
            return Event(
                delivery_id=f"j{job_id}",
                repo=MIRROR,
                payload=JobFinished(
                    job_id=job_id, job_name=name, status="failure", sha=sha, web_url="u"
                ),
            )

        (push,) = wf.handle(
            Event(delivery_id="d", repo=COQ, payload=PrOpened(number=1)),
            forge, config, now=0.0,
        )
        forge.apply(push)
        old_candidate = push.sha

        # base advances; the first candidate is superseded
        newer = commit((shas["master"],), {"docs.rst"}, "advance")
        forge.state.repos[COQ].commits[newer.sha] = newer
        forge.state.repos[COQ].branches["master"] = newer.sha
        actions = wf.handle(
            Event(
                delivery_id="b", repo=COQ,
                payload=BaseBranchPushed(branch="master", commits=()),
            ),
            forge, config, now=1.0,
        )
        (new_push,) = [a for a in actions if isinstance(a, PushBranch)]
        forge.apply(new_push)

        # result for the superseded candidate: no check runs
        forge.state.repos[MIRROR].job_outcomes[1] = JobOutcome(
            job_name="build", status="failure", log="Error: old\n", web_url="u"
        )
        assert wf.handle(job_event(1, "build", old_candidate), forge, config, 2.0) == []

        # failing result for the current candidate: one check run on the
        # origin head sha, carrying the log excerpt
        forge.state.repos[MIRROR].job_outcomes[2] = JobOutcome(
            job_name="build", status="failure",
            log="noise\nError: Universe inconsistency.\nmore\n", web_url="u",
        )
        checks = wf.handle(job_event(2, "build", new_push.sha), forge, config, 3.0)
        assert len(checks) == 1 and isinstance(checks[0], CreateCheckRun)
        assert checks[0].repo == COQ
        assert checks[0].sha == shas["feat"]
        assert checks[0].conclusion == "failure"
        assert "Error: Universe inconsistency." in checks[0].summary

        # docs job: artifact links surface on the check run
        forge.state.repos[MIRROR].job_outcomes[3] = JobOutcome(
            job_name="doc:refman", status="success", log="", web_url="u",
            artifact_links=(("refman", "https://mirror.example/refman/index.html"),),
        )
        (doc_check,) = wf.handle(
            Event(
                delivery_id="j3", repo=MIRROR,
                payload=JobFinished(
                    job_id=3, job_name="doc:refman", status="success",
                    sha=new_push.sha, web_url="u",
                ),
            ),
            forge, config, 4.0,
        )
        assert doc_check.sha == shas["feat"]
        assert "https://mirror.example/refman/index.html" in doc_check.summary


def test_7_minimizer_round_trip():
    with criterion(7, "minimizer round-trip, manual and CI-proposed"):
        # manual path under the mock runner: one dispatch, one result comment
        transcript = run_scenario(SCENARIOS / "minimize.scenario")
        actions = transcript.actions()
        assert sum(isinstance(a, DispatchJob) for a in actions) == 1
        assert sum(isinstance(a, PostComment) for a in actions) == 1

        # CI-proposed path: reverse-dependency failure -> one proposal; the
        # author accepts it -> one dispatch; completion -> one result comment
        forge, shas = make_forge()
        config = make_config()
        bridge = CiBridgeWorkflow()
        wf = MinimizerWorkflow(bridge)
        (push,) = bridge.handle(
            Event(delivery_id="d", repo=COQ, payload=PrOpened(number=1)),
            forge, config, now=0.0,
        )
        forge.apply(push)
        forge.state.repos[MIRROR].job_outcomes[5] = JobOutcome(
            job_name="ci-mathcomp", status="failure", log="Error: broken\n",
            web_url="u", script="opam install mathcomp && make",
        )

        def failure(job_id):
            return Event(
                delivery_id=f"j{job_id}", repo=MIRROR,
                payload=JobFinished(
                    job_id=job_id, job_name="ci-mathcomp", status="failure",
                    sha=push.sha, web_url="u",
                ),
            )

        (proposal,) = wf.handle(failure(5), forge, config, 1.0)
        assert isinstance(proposal, PostComment)
        # dedup per (PR, job, candidate sha): the same failure never
        # produces a second proposal
        assert wf.handle(failure(6), forge, config, 2.0) == []

        accept = Event(
            delivery_id="c", repo=COQ,
            payload=CommentPosted(
                issue_number=1, comment_id=77, author="alice",
                body=proposal.body, is_pull_request=True,
            ),
        )
        dispatches = wf.handle(accept, forge, config, 3.0)
        assert len(dispatches) == 1 and isinstance(dispatches[0], DispatchJob)
        replies = wf.handle(
            Event(
                delivery_id="r", repo=COQ,
                payload=RunnerJobCompleted(
                    request_id=dispatches[0].request_id,
                    reduced_case="Goal False. Admitted.", failure=None,
                ),
            ),
            forge, config, 4.0,
        )
        assert len(replies) == 1 and isinstance(replies[0], PostComment)
        assert "Goal False. Admitted." in replies[0].body


def test_8_contract_parity_and_hmac_oracle():
    with criterion(8, "port contract suite and HMAC oracle vectors"):
        assert len(HMAC_VECTORS) >= 10
        for secret, body, digest in HMAC_VECTORS:
            assert verify_signature(secret, body, f"sha256={digest}")
            assert not verify_signature(secret, body + b"x", f"sha256={digest}")
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "test_client_contract.py"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stdout + proc.stderr
