from forgebot.ci_bridge import (
    Candidate,
    CandidateRecord,
    CiBridgeWorkflow,
    Conflict,
    map_to_origin,
    plan_sync,
    report,
    summarize_failure,
)
from forgebot.model import (
    BaseBranchPushed,
    CreateCheckRun,
    DeleteBranch,
    Event,
    JobFinished,
    PrClosed,
    PrOpened,
    PushBranch,
)
from forgebot.ports import JobOutcome

from conftest import COQ, MIRROR, commit, make_config, make_forge


def record(pr=7, candidate="c" * 40, origin="a" * 40):
    return CandidateRecord(
        pr_number=pr,
        origin_head_sha=origin,
        base_sha="b" * 40,
        candidate_sha=candidate,
        pushed_at=0.0,
    )


class TestPlanSync:
    def test_clean_merge_candidate(self):
        forge, shas = make_forge()
        config = make_config()
        pr = forge.get_pr_snapshot(COQ, 1)
        plan = plan_sync(pr, forge.get_commit_graph(COQ), config.repositories[0])
        assert isinstance(plan, Candidate)
        assert set(plan.commit.parents) == {shas["master"], shas["feat"]}
        assert plan.push.branch == "pr-1"
        assert plan.push.force
        assert plan.push.repo == MIRROR

    def test_conflict(self):
        forge, _ = make_forge()
        config = make_config()
        pr = forge.get_pr_snapshot(COQ, 2)
        plan = plan_sync(pr, forge.get_commit_graph(COQ), config.repositories[0])
        assert isinstance(plan, Conflict)
        assert "core.v" in plan.files

    def test_base_advance_produces_new_candidate(self):
        forge, shas = make_forge()
        config = make_config()
        rc = config.repositories[0]
        pr = forge.get_pr_snapshot(COQ, 1)
        first = plan_sync(pr, forge.get_commit_graph(COQ), rc)
        # base moves forward with a clean commit
        newer = commit((shas["master"],), {"docs.rst"}, "more master work")
        forge.state.repos[COQ].commits[newer.sha] = newer
        forge.state.repos[COQ].branches["master"] = newer.sha
        pr = forge.get_pr_snapshot(COQ, 1)
        second = plan_sync(pr, forge.get_commit_graph(COQ), rc)
        assert isinstance(second, Candidate)
        assert set(second.commit.parents) == {newer.sha, shas["feat"]}
        assert second.push.branch == first.push.branch == "pr-1"


class TestMapToOrigin:
    def test_current_candidate_resolves(self):
        records = {7: record(pr=7)}
        assert map_to_origin(records, "c" * 40) == (7, "a" * 40)

    def test_superseded_candidate_absent(self):
        records = {7: record(candidate="d" * 40)}
        assert map_to_origin(records, "c" * 40) is None

    def test_empty_records(self):
        assert map_to_origin({}, "c" * 40) is None


class TestSummarizeFailure:
    def test_error_line_included(self):
        log = "building...\nError: Universe inconsistency.\ndone\n"
        assert "Error: Universe inconsistency." in summarize_failure(log)

    def test_no_match_returns_last_40_lines(self):
        log = "\n".join(f"line {i}" for i in range(100))
        excerpt = summarize_failure(log)
        assert excerpt.splitlines() == [f"line {i}" for i in range(60, 100)]

    def test_first_match_wins(self):
        log = "ok\nError: first\nnoise\nError: second\n"
        assert summarize_failure(log).startswith("Error: first")

    def test_pattern_priority(self):
        # a `^Error:` line beats an earlier line merely containing Error
        log = "An Error occurred somewhere\nError: the real one\n"
        assert summarize_failure(log).startswith("Error: the real one")

    def test_make_pattern(self):
        log = "compiling\nmake[2]: *** [all] Error 2\n"
        assert "make[2]: ***" in summarize_failure(log)

    def test_window_capped_at_40_lines_after_match(self):
        log = "Error: boom\n" + "\n".join(f"tail {i}" for i in range(100))
        excerpt = summarize_failure(log)
        assert len(excerpt.splitlines()) == 41

    def test_size_cap(self):
        log = "Error: big\n" + ("x" * 100000)
        assert len(summarize_failure(log).encode()) <= 64 * 1024


class TestReport:
    def test_failed_job_check_run(self):
        outcome = JobOutcome(
            job_name="build:base",
            status="failure",
            log="stuff\nError: Universe inconsistency.\n",
            web_url="https://gitlab.example/job/1",
        )
        actions = report(outcome, (7, "a" * 40), frozenset(), COQ)
        (check,) = actions
        assert check.conclusion == "failure"
        assert check.sha == "a" * 40
        assert "Error: Universe inconsistency." in check.summary
        assert "https://gitlab.example/job/1" in check.summary
        assert "https://gitlab.example/job/1" in check.links

    def test_docs_job_artifact_links(self):
        outcome = JobOutcome(
            job_name="doc:refman",
            status="success",
            log="",
            web_url="https://gitlab.example/job/2",
            artifact_links=(("index.html", "https://gitlab.example/artifacts/index.html"),),
        )
        (check,) = report(outcome, (7, "a" * 40), frozenset({"doc:refman"}), COQ)
        assert check.conclusion == "success"
        assert "https://gitlab.example/artifacts/index.html" in check.summary
        assert "https://gitlab.example/artifacts/index.html" in check.links

    def test_canceled_maps_to_cancelled(self):
        outcome = JobOutcome(job_name="j", status="canceled", log="", web_url="")
        (check,) = report(outcome, (7, "a" * 40), frozenset(), COQ)
        assert check.conclusion == "cancelled"


class TestWorkflow:
    def setup_method(self):
        self.forge, self.shas = make_forge()
        self.config = make_config()
        self.wf = CiBridgeWorkflow()

    def open_pr(self, number=1):
        return self.wf.handle(
            Event(delivery_id="d", repo=COQ, payload=PrOpened(number=number)),
            self.forge,
            self.config,
            now=0.0,
        )

    def test_pr_opened_pushes_candidate(self):
        actions = self.open_pr()
        assert len(actions) == 1 and isinstance(actions[0], PushBranch)
        assert self.wf.records_for(COQ)[1].origin_head_sha == self.shas["feat"]

    def test_conflicting_pr_pushes_nothing(self):
        assert self.open_pr(number=2) == []
        assert 2 not in self.wf.records_for(COQ)

    def test_pr_closed_deletes_mirror_branch(self):
        self.open_pr()
        actions = self.wf.handle(
            Event(delivery_id="d2", repo=COQ, payload=PrClosed(number=1, merged=False)),
            self.forge,
            self.config,
            now=0.0,
        )
        assert actions == [DeleteBranch(repo=MIRROR, branch="pr-1")]
        assert 1 not in self.wf.records_for(COQ)

    def test_base_push_resyncs_open_prs(self):
        self.open_pr()
        old = self.wf.records_for(COQ)[1].candidate_sha
        newer = commit((self.shas["master"],), {"docs.rst"}, "more")
        self.forge.state.repos[COQ].commits[newer.sha] = newer
        self.forge.state.repos[COQ].branches["master"] = newer.sha
        actions = self.wf.handle(
            Event(
                delivery_id="d3",
                repo=COQ,
                payload=BaseBranchPushed(branch="master", commits=()),
            ),
            self.forge,
            self.config,
            now=1.0,
        )
        pushes = [a for a in actions if isinstance(a, PushBranch)]
        assert len(pushes) == 1 and pushes[0].branch == "pr-1"
        assert self.wf.records_for(COQ)[1].candidate_sha != old

    def test_job_for_stale_candidate_suppressed(self):
        self.open_pr()
        actions = self.wf.handle(
            Event(
                delivery_id="d4",
                repo=MIRROR,
                payload=JobFinished(
                    job_id=1, job_name="build", status="failure", sha="9" * 40, web_url=""
                ),
            ),
            self.forge,
            self.config,
            now=1.0,
        )
        assert actions == []

    def test_job_for_current_candidate_reports(self):
        (push,) = self.open_pr()
        self.forge.apply(push)
        self.forge.state.repos[MIRROR].job_outcomes[1] = JobOutcome(
            job_name="build:base", status="failure", log="Error: nope\n", web_url="u"
        )
        actions = self.wf.handle(
            Event(
                delivery_id="d5",
                repo=MIRROR,
                payload=JobFinished(
                    job_id=1, job_name="build:base", status="failure",
                    sha=push.sha, web_url="u",
                ),
            ),
            self.forge,
            self.config,
            now=1.0,
        )
        (check,) = actions
        assert isinstance(check, CreateCheckRun)
        assert check.repo == COQ
        assert check.sha == self.shas["feat"]
