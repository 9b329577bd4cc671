"""Judged rewards: logit-weighted continuous scoring over the 0-9 token set,
the four-dimension composite reward, prompt templates, a judge-service client
with a deterministic mock, and the programmatic toy reward used by the RL lab.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import (
    ConfigError,
    NumericalError,
    ProtocolError,
    ShapeError,
    TransportError,
)

SCORE_TOKENS = tuple(range(10))
DIMENSIONS = ("adherence", "clarity", "preservation", "quality")
OPERATIONS = ("add", "replace", "delete", "rearrange", "translate",
              "change_style", "combined", "reasoning")
JUDGE_URL_ENV = "GLYPHFORGE_JUDGE_URL"


@dataclass(frozen=True)
class ScoreDistribution:
    """Logits over the ten score tokens 0..9."""

    logits: tuple

    def __post_init__(self):
        if len(self.logits) != 10:
            raise ShapeError(f"score distribution: {len(self.logits)} logits, need 10")
        if not all(np.isfinite(z) for z in self.logits):
            raise NumericalError("score distribution: non-finite logit")


@dataclass
class RewardVector:
    adherence: float
    clarity: float
    preservation: float
    quality: float
    weights: tuple = (0.4, 0.2, 0.2, 0.2)  # adherence-favoring default

    def __post_init__(self):
        for name in DIMENSIONS:
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"reward vector: {name}={v} outside [0,1]")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (4,) or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError(f"reward vector: bad weights {self.weights}")
        self.weights = tuple(w / w.sum())


@dataclass(frozen=True)
class JudgeRequest:
    dimension: str
    operation: str
    instruction: str
    source_png: bytes
    edited_png: bytes
    reference_png: bytes | None = None
    request_id: str = ""

    def __post_init__(self):
        if self.dimension not in DIMENSIONS:
            raise ConfigError(f"judge request: unknown dimension {self.dimension}")
        if self.operation not in OPERATIONS:
            raise ConfigError(f"judge request: unknown operation {self.operation}")
        if self.dimension == "quality" and self.reference_png is None:
            raise ConfigError("judge request: quality dimension requires a reference image")
        if self.dimension != "quality" and self.reference_png is not None:
            raise ConfigError(
                f"judge request: {self.dimension} dimension forbids a reference image")

    def to_wire(self) -> dict:
        body = {
            "id": self.request_id,
            "dimension": self.dimension,
            "operation": self.operation,
            "instruction": self.instruction,
            "source_png_b64": base64.b64encode(self.source_png).decode("ascii"),
            "edited_png_b64": base64.b64encode(self.edited_png).decode("ascii"),
        }
        if self.reference_png is not None:
            body["reference_png_b64"] = base64.b64encode(self.reference_png).decode("ascii")
        return body


def expected_score(dist: ScoreDistribution) -> float:
    """Softmax expectation of the score token, normalized by 9 into [0,1].
    Max-logit subtraction keeps the softmax stable."""
    z = np.asarray(dist.logits, dtype=np.float64)
    e = np.exp(z - z.max())
    p = e / e.sum()
    return float(np.dot(p, SCORE_TOKENS) / SCORE_TOKENS[-1])


def composite_reward(v: RewardVector) -> float:
    """Weighted sum of the four dimensions (weights normalized on load)."""
    dims = np.array([v.adherence, v.clarity, v.preservation, v.quality])
    return float(np.dot(dims, v.weights))


def build_prompt(dimension: str, operation: str, instruction: str) -> str:
    """Fill the shipped template for (dimension, operation). Deterministic."""
    if dimension not in DIMENSIONS:
        raise ConfigError(f"build_prompt: unknown dimension {dimension}")
    if operation not in OPERATIONS:
        raise ConfigError(f"build_prompt: unknown operation {operation}")
    tpl = resources.files("glyphforge").joinpath(
        f"prompts/{dimension}/{operation}.txt").read_text()
    return tpl.replace("{instruction}", instruction)


def toy_reward(candidate, target) -> float:
    """1 - mean absolute pixel difference, pixels in [0,1]."""
    candidate = np.asarray(candidate, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if candidate.shape != target.shape:
        raise ShapeError(
            f"toy_reward: raster shapes {candidate.shape} vs {target.shape}")
    return float(1.0 - np.mean(np.abs(candidate - target)))


# ---------------------------------------------------------------------------
# judge clients


def _fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


class MockJudgeClient:
    """Deterministic stand-in for the VLM judge.

    Logits come from a PRNG seeded by FNV-1a over the canonical request
    serialization mixed with the client seed, so identical requests always
    score identically, byte-for-byte across platforms.

    With `oracle_targets` set (map request id or edited-png sha256 -> truth
    png bytes), a request whose edited raster equals its stored ground truth
    gets a one-hot distribution on token 9.
    """

    def __init__(self, seed: int = 0, oracle_targets: dict | None = None):
        self.seed = seed
        self.oracle_targets = oracle_targets or {}
        self.calls = 0

    def judge(self, request: JudgeRequest) -> ScoreDistribution:
        self.calls += 1
        truth = self.oracle_targets.get(request.request_id)
        if truth is not None and request.edited_png == truth:
            logits = [0.0] * 10
            logits[9] = 40.0
            return ScoreDistribution(tuple(logits))
        canon = json.dumps(request.to_wire(), sort_keys=True).encode("utf-8")
        h = _fnv1a64(canon) ^ (self.seed * 0x9E3779B97F4A7C15 & 0xFFFFFFFFFFFFFFFF)
        rng = np.random.default_rng(h)
        logits = rng.uniform(-2.0, 2.0, size=10)
        return ScoreDistribution(tuple(float(x) for x in logits))


class HttpJudgeClient:
    """Wire client for the judge service: HTTP POST, JSON bodies, idempotent
    retries, optional on-disk response cache keyed by request hash."""

    def __init__(self, url: str, max_retries: int = 3, timeout: float = 30.0,
                 cache_dir=None):
        self.url = url
        self.max_retries = max_retries
        self.timeout = timeout
        self.cache_dir = cache_dir
        self.calls = 0

    def _cache_path(self, body: dict):
        if self.cache_dir is None:
            return None
        key = hashlib.sha256(
            json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()
        return os.path.join(self.cache_dir, f"{key}.json")

    def judge(self, request: JudgeRequest) -> ScoreDistribution:
        import requests

        body = request.to_wire()
        cache_path = self._cache_path(body)
        if cache_path and os.path.exists(cache_path):
            with open(cache_path) as f:
                return parse_judge_response(json.load(f))
        last_err = None
        for attempt in range(1, self.max_retries + 1):
            try:
                self.calls += 1
                resp = requests.post(self.url, json=body, timeout=self.timeout)
                resp.raise_for_status()
                payload = resp.json()
                break
            except (requests.ConnectionError, requests.Timeout) as e:
                last_err = e
                time.sleep(min(0.1 * 2 ** attempt, 2.0))
        else:
            raise TransportError(f"judge: {last_err}", attempts=self.max_retries)
        dist = parse_judge_response(payload)
        if cache_path:
            os.makedirs(self.cache_dir, exist_ok=True)
            with open(cache_path, "w") as f:
                json.dump(payload, f)
        return dist


def parse_judge_response(payload: dict) -> ScoreDistribution:
    logits = payload.get("logits")
    if not isinstance(logits, list) or len(logits) != 10:
        n = len(logits) if isinstance(logits, list) else "no"
        raise ProtocolError(f"judge response: {n} logits, protocol requires 10")
    return ScoreDistribution(tuple(float(z) for z in logits))


def judge(client, request: JudgeRequest) -> ScoreDistribution:
    return client.judge(request)


def default_judge_client(seed: int = 0, cache_dir=None):
    """Honor GLYPHFORGE_JUDGE_URL; fall back to the deterministic mock."""
    url = os.environ.get(JUDGE_URL_ENV)
    if url:
        return HttpJudgeClient(url, cache_dir=cache_dir)
    return MockJudgeClient(seed=seed)
