import json
import os

import numpy as np
import pytest

from glyphforge.clients import (
    FixtureProposerClient,
    MockExecutorClient,
    ScriptedVerifierClient,
    fail_verdicts,
    pass_verdicts,
)
from glyphforge.edit_verify_retry import (
    Attempt,
    RetryPolicy,
    harvest,
    propose,
    read_log,
    run_case,
    run_directory,
)
from glyphforge.errors import TransportError
from glyphforge.imaging import encode_png

SOURCE = encode_png(np.full((32, 32), 200, dtype=np.uint8))


class FailingExecutor:
    """Raises transport errors for the first n calls, then delegates."""

    def __init__(self, fail_times, inner):
        self.fail_times = fail_times
        self.inner = inner
        self.calls = 0

    def execute(self, instruction, source_png, feedback=None):
        self.calls += 1
        if self.calls <= self.fail_times:
            raise TransportError("connection refused", attempts=3)
        return self.inner.execute(instruction, source_png, feedback=feedback)


class TestPropose:
    def test_fixture_replay(self):
        client = FixtureProposerClient([
            {"instruction": "Replace the title", "operation": "replace"},
            {"instruction": "Delete the footer", "operation": "delete"},
            {"instruction": "Translate everything", "operation": "translate"},
            {"instruction": "Add a banner", "operation": "add"},
        ])
        out = propose(client, SOURCE)
        assert len(out) == 4
        assert {p["operation"] for p in out} == \
            {"replace", "delete", "translate", "add"}

    def test_deduplication_on_normalized_text(self):
        client = FixtureProposerClient([
            {"instruction": "Replace  the title", "operation": "replace"},
            {"instruction": "replace the title", "operation": "replace"},
        ])
        assert len(propose(client, SOURCE)) == 1

    def test_unknown_tag_dropped_others_kept(self):
        client = FixtureProposerClient([
            {"instruction": "Rotate the image", "operation": "rotate"},
            {"instruction": "Delete the footer", "operation": "delete"},
        ])
        out = propose(client, SOURCE)
        assert len(out) == 1 and out[0]["operation"] == "delete"

    def test_empty_proposals(self):
        assert propose(FixtureProposerClient([]), SOURCE) == []


class TestRunCase:
    def test_pass_at_one(self):
        verifier = ScriptedVerifierClient([pass_verdicts()])
        status, attempts = run_case(MockExecutorClient(), verifier, SOURCE,
                                    "edit it", RetryPolicy(max_attempts=3))
        assert status == "accepted"
        assert len(attempts) == 1
        assert attempts[0].status == "accepted"

    def test_fail_three_times(self):
        verifier = ScriptedVerifierClient(
            [fail_verdicts("adherence", "wrong text")] * 3)
        status, attempts = run_case(MockExecutorClient(), verifier, SOURCE,
                                    "edit it", RetryPolicy(max_attempts=3))
        assert status == "rejected"
        assert len(attempts) == 3
        assert [a.status for a in attempts] == \
            ["retryable", "retryable", "rejected"]

    def test_fail_then_pass_forwards_feedback(self):
        executor = MockExecutorClient()
        verifier = ScriptedVerifierClient([
            fail_verdicts("preservation", "background was altered"),
            pass_verdicts(),
        ])
        status, attempts = run_case(executor, verifier, SOURCE, "edit it",
                                    RetryPolicy(max_attempts=3))
        assert status == "accepted"
        assert len(attempts) == 2
        assert executor.requests[0] == ("edit it", None)
        assert "background was altered" in executor.requests[1][1]

    def test_feedback_forwarding_disabled(self):
        executor = MockExecutorClient()
        verifier = ScriptedVerifierClient([
            fail_verdicts("legibility", "blurry"), pass_verdicts()])
        run_case(executor, verifier, SOURCE, "edit it",
                 RetryPolicy(max_attempts=3, forward_feedback=False))
        assert executor.requests[1][1] is None

    def test_attempt_count_never_exceeds_budget(self):
        for budget in (1, 2, 5):
            verifier = ScriptedVerifierClient([fail_verdicts("adherence", "no")])
            _, attempts = run_case(MockExecutorClient(), verifier, SOURCE,
                                   "x", RetryPolicy(max_attempts=budget))
            assert len(attempts) == budget

    def test_transport_failure_consumes_budget(self):
        executor = FailingExecutor(1, MockExecutorClient())
        verifier = ScriptedVerifierClient([pass_verdicts()])
        status, attempts = run_case(executor, verifier, SOURCE, "x",
                                    RetryPolicy(max_attempts=3))
        assert status == "accepted"
        assert len(attempts) == 2
        assert attempts[0].status == "retryable"
        assert attempts[0].candidate_png is None

    def test_acceptance_soundness(self):
        # accepted iff the final attempt's three verdicts all pass
        verifier = ScriptedVerifierClient([
            fail_verdicts("adherence", "no"),
            fail_verdicts("legibility", "no"),
            pass_verdicts(),
        ])
        status, attempts = run_case(MockExecutorClient(), verifier, SOURCE,
                                    "x", RetryPolicy(max_attempts=3))
        assert status == "accepted"
        final = attempts[-1].verdicts
        assert all(final[d]["pass"]
                   for d in ("adherence", "legibility", "preservation"))

    def test_bad_policy_rejected(self):
        with pytest.raises(ValueError):
            RetryPolicy(max_attempts=0)


class TestCrashResume:
    def scripted(self):
        return [fail_verdicts("preservation", "halo artifacts"),
                pass_verdicts()]

    def test_resume_reproduces_uninterrupted_outcome(self, tmp_path):
        log_a = str(tmp_path / "a.log.jsonl")
        log_b = str(tmp_path / "b.log.jsonl")
        policy = RetryPolicy(max_attempts=3)

        # uninterrupted run
        status_a, attempts_a = run_case(
            MockExecutorClient(), ScriptedVerifierClient(self.scripted()),
            SOURCE, "edit it", policy, log_path=log_a)

        # crashed run: attempt 1 lands in the log, then the process dies
        run_case(MockExecutorClient(), ScriptedVerifierClient(self.scripted()[:1]),
                 SOURCE, "edit it", RetryPolicy(max_attempts=1), log_path=log_b)
        # resume with a fresh process: the verifier script continues at
        # attempt 2 because attempt 1 is replayed from disk
        status_b, attempts_b = run_case(
            MockExecutorClient(), ScriptedVerifierClient(self.scripted()[1:]),
            SOURCE, "edit it", policy, log_path=log_b)

        assert status_b == status_a == "accepted"
        assert len(attempts_b) == len(attempts_a) == 2
        assert attempts_b[-1].verdicts == attempts_a[-1].verdicts

    def test_resume_after_acceptance_is_a_no_op(self, tmp_path):
        log = str(tmp_path / "c.log.jsonl")
        policy = RetryPolicy(max_attempts=3)
        run_case(MockExecutorClient(), ScriptedVerifierClient([pass_verdicts()]),
                 SOURCE, "x", policy, log_path=log)
        before = open(log).read()
        executor = MockExecutorClient()
        status, attempts = run_case(executor,
                                    ScriptedVerifierClient([pass_verdicts()]),
                                    SOURCE, "x", policy, log_path=log)
        assert status == "accepted"
        assert executor.requests == []  # nothing re-executed
        assert open(log).read() == before

    def test_corrupt_log_lines_skipped(self, tmp_path):
        log = str(tmp_path / "d.log.jsonl")
        good = Attempt(1, "x", None, {}, "retryable").to_json()
        with open(log, "w") as f:
            f.write(json.dumps(good) + "\n")
            f.write("{not json\n")
            f.write('{"missing": "fields"}\n')
        attempts, skipped = read_log(log)
        assert len(attempts) == 1 and skipped == 2


class TestHarvest:
    def run_dir(self, tmp_path):
        out = str(tmp_path / "run")
        images = []
        for i in range(5):
            path = tmp_path / f"img{i}.png"
            path.write_bytes(encode_png(
                np.full((16, 16), 50 + i, dtype=np.uint8)))
            images.append(str(path))
        proposer = FixtureProposerClient(
            [{"instruction": "Replace the sign", "operation": "replace"}])
        # images 0,1 accepted; 2,3,4 rejected (scripted verifier is shared
        # across cases, so order the script by sorted image path)
        script = ([pass_verdicts()] * 2
                  + [fail_verdicts("adherence", "no")] * 9)
        verifier = ScriptedVerifierClient(script)
        run_directory(MockExecutorClient(), verifier, proposer, images,
                      RetryPolicy(max_attempts=3), out)
        return out

    def test_two_accepted_three_rejected(self, tmp_path):
        run = self.run_dir(tmp_path)
        summary = json.load(open(os.path.join(run, "summary.json")))
        statuses = sorted(s["status"] for s in summary)
        assert statuses == ["accepted", "accepted", "rejected", "rejected",
                            "rejected"]
        bundles, corrupt = harvest(run, os.path.join(run, "accepted"))
        assert bundles == 2 and corrupt == 0
        for name in sorted(os.listdir(os.path.join(run, "accepted"))):
            bdir = os.path.join(run, "accepted", name)
            meta = json.load(open(os.path.join(bdir, "meta.json")))
            assert meta["source"] == "unstructured"
            assert os.path.exists(os.path.join(bdir, "tgt.png"))

    def test_empty_run(self, tmp_path):
        run = str(tmp_path / "empty")
        os.makedirs(run)
        bundles, corrupt = harvest(run, str(tmp_path / "out"))
        assert bundles == 0 and corrupt == 0

    def test_idempotent(self, tmp_path):
        run = self.run_dir(tmp_path)
        out = os.path.join(run, "accepted")
        harvest(run, out)

        def snapshot():
            snap = {}
            for root, _, files in os.walk(out):
                for name in files:
                    path = os.path.join(root, name)
                    snap[os.path.relpath(path, out)] = open(path, "rb").read()
            return snap

        first = snapshot()
        harvest(run, out)
        assert snapshot() == first
