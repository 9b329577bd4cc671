import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glyphforge.errors import ConfigError, ProtocolError, ShapeError
from glyphforge.reward_engine import (
    DIMENSIONS,
    MockJudgeClient,
    OPERATIONS,
    JudgeRequest,
    RewardVector,
    ScoreDistribution,
    build_prompt,
    composite_reward,
    expected_score,
    parse_judge_response,
    toy_reward,
)

PNG = b"\x89PNG fake"


def req(dim="adherence", op="replace", instruction="swap X for Y", rid="r1",
        reference=None):
    return JudgeRequest(dimension=dim, operation=op, instruction=instruction,
                        source_png=PNG, edited_png=PNG + b"!",
                        reference_png=reference, request_id=rid)


class TestExpectedScore:
    def test_one_hot_nine(self):
        logits = [0.0] * 10
        logits[9] = 40.0
        assert expected_score(ScoreDistribution(tuple(logits))) == pytest.approx(
            1.0, abs=1e-12)

    def test_one_hot_zero(self):
        logits = [0.0] * 10
        logits[0] = 40.0
        assert expected_score(ScoreDistribution(tuple(logits))) == pytest.approx(
            0.0, abs=1e-12)

    def test_uniform_logits(self):
        assert expected_score(ScoreDistribution((1.3,) * 10)) == pytest.approx(0.5)

    def test_hand_softmax_weighted_nine(self):
        # weights 1,...,1,9 over total 18: (0+1+...+8 + 9*9) / (18*9)
        logits = tuple([math.log(1.0)] * 9 + [math.log(9.0)])
        expected = (36 + 81) / 162
        assert expected_score(ScoreDistribution(logits)) == pytest.approx(
            expected, abs=1e-12)

    @given(shift=st.floats(-50, 50), seed=st.integers(0, 1000))
    @settings(max_examples=50, deadline=None)
    def test_shift_invariance(self, shift, seed):
        z = np.random.default_rng(seed).uniform(-3, 3, 10)
        a = expected_score(ScoreDistribution(tuple(z)))
        b = expected_score(ScoreDistribution(tuple(z + shift)))
        assert abs(a - b) < 1e-12

    @given(seed=st.integers(0, 5000))
    @settings(max_examples=100, deadline=None)
    def test_range_property(self, seed):
        z = np.random.default_rng(seed).uniform(-10, 10, 10)
        s = expected_score(ScoreDistribution(tuple(z)))
        assert 0.0 <= s <= 1.0

    def test_monotone_in_top_logit(self):
        base = [0.0] * 10
        prev = expected_score(ScoreDistribution(tuple(base)))
        for bump in (0.5, 1.0, 2.0, 5.0):
            z = list(base)
            z[9] = bump
            cur = expected_score(ScoreDistribution(tuple(z)))
            assert cur > prev
            prev = cur

    def test_wrong_arity_rejected(self):
        with pytest.raises(ShapeError):
            ScoreDistribution((0.0,) * 9)

    def test_nonfinite_rejected(self):
        from glyphforge.errors import NumericalError

        with pytest.raises(NumericalError):
            ScoreDistribution((float("nan"),) + (0.0,) * 9)


class TestCompositeReward:
    def test_equal_weights_mean(self):
        v = RewardVector(0.8, 0.6, 1.0, 0.6, weights=(1, 1, 1, 1))
        assert composite_reward(v) == pytest.approx(0.75)

    def test_projection_weight(self):
        v = RewardVector(0.37, 0.9, 0.1, 0.5, weights=(1, 0, 0, 0))
        assert composite_reward(v) == pytest.approx(0.37)

    def test_convexity_endpoint(self):
        v = RewardVector(1.0, 1.0, 1.0, 1.0, weights=(0.4, 0.3, 0.2, 0.1))
        assert composite_reward(v) == pytest.approx(1.0)

    def test_default_weights_favor_adherence(self):
        assert RewardVector(1, 1, 1, 1).weights == (0.4, 0.2, 0.2, 0.2)

    def test_out_of_range_dimension_rejected(self):
        with pytest.raises(ConfigError):
            RewardVector(1.2, 0.5, 0.5, 0.5)

    def test_bad_weights_rejected(self):
        with pytest.raises(ConfigError):
            RewardVector(0.5, 0.5, 0.5, 0.5, weights=(0, 0, 0, 0))

    @given(seed=st.integers(0, 2000))
    @settings(max_examples=50, deadline=None)
    def test_bounded_by_dimensions(self, seed):
        rng = np.random.default_rng(seed)
        dims = rng.uniform(0, 1, 4)
        w = tuple(rng.uniform(0.01, 1, 4))
        r = composite_reward(RewardVector(*dims, weights=w))
        assert dims.min() - 1e-12 <= r <= dims.max() + 1e-12


class TestToyReward:
    def test_identical_rasters(self):
        x = np.random.default_rng(0).integers(0, 2, 64).astype(float)
        assert toy_reward(x, x) == pytest.approx(1.0)

    def test_inverted_binary(self):
        x = np.random.default_rng(1).integers(0, 2, 64).astype(float)
        assert toy_reward(1.0 - x, x) == pytest.approx(0.0)

    def test_half_flipped(self):
        x = np.zeros(64)
        y = x.copy()
        y[:32] = 1.0
        assert toy_reward(y, x) == pytest.approx(0.5)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            toy_reward(np.zeros(4), np.zeros(5))


class TestPrompts:
    def test_replace_adherence_contains_rubric_and_directive(self):
        text = build_prompt("adherence", "replace", "swap X for Y")
        assert "swap X for Y" in text
        assert "replaced" in text  # replacement-correctness rubric sentence
        assert "0 to 9" in text

    def test_deterministic(self):
        a = build_prompt("clarity", "translate", "translate it")
        b = build_prompt("clarity", "translate", "translate it")
        assert a == b

    def test_all_32_distinct(self):
        prompts = {build_prompt(d, o, "edit")
                   for d in DIMENSIONS for o in OPERATIONS}
        assert len(prompts) == 32

    def test_unknown_dimension_rejected(self):
        with pytest.raises(ConfigError):
            build_prompt("style", "replace", "x")


class TestJudgeRequest:
    def test_quality_requires_reference(self):
        with pytest.raises(ConfigError):
            req(dim="quality")

    def test_non_quality_forbids_reference(self):
        with pytest.raises(ConfigError):
            req(dim="clarity", reference=PNG)

    def test_quality_with_reference_ok(self):
        r = req(dim="quality", reference=PNG)
        assert "reference_png_b64" in r.to_wire()


class TestMockJudge:
    def test_deterministic_over_100_calls(self):
        client = MockJudgeClient(seed=7)
        first = client.judge(req())
        for _ in range(99):
            assert client.judge(req()).logits == first.logits

    def test_distinct_requests_distinct_logits(self):
        client = MockJudgeClient(seed=7)
        a = client.judge(req(rid="a"))
        b = client.judge(req(instruction="something else", rid="a"))
        assert a.logits != b.logits

    def test_seed_changes_logits(self):
        a = MockJudgeClient(seed=1).judge(req())
        b = MockJudgeClient(seed=2).judge(req())
        assert a.logits != b.logits

    def test_oracle_profile_one_hot_nine(self):
        truth = PNG + b"!"
        client = MockJudgeClient(oracle_targets={"r1": truth})
        dist = client.judge(req(rid="r1"))
        assert expected_score(dist) == pytest.approx(1.0, abs=1e-12)

    def test_oracle_profile_miss_falls_back(self):
        client = MockJudgeClient(oracle_targets={"r1": b"other bytes"})
        dist = client.judge(req(rid="r1"))
        assert expected_score(dist) < 1.0


class TestProtocol:
    def test_fixture_replay_matches_hand_computation(self):
        # a recorded wire response: token 9 carries weight 9, others weight 1
        payload = {"id": "fix-1",
                   "logits": [math.log(1.0)] * 9 + [math.log(9.0)]}
        dist = parse_judge_response(payload)
        assert expected_score(dist) == pytest.approx((36 + 81) / 162, abs=1e-12)

    def test_wrong_logit_count_rejected(self):
        with pytest.raises(ProtocolError):
            parse_judge_response({"logits": [0.0] * 9})

    def test_missing_logits_rejected(self):
        with pytest.raises(ProtocolError):
            parse_judge_response({"score": 9})
