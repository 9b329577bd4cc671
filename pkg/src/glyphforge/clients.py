"""Service clients and their deterministic mocks.

Every external dependency (planner VLM, text substitutor, translator,
editing model, verifier, proposer) sits behind a small client object. The
mocks are scripted or hash-seeded so the whole lab runs offline and
byte-reproducibly; the HTTP clients speak the documented wire protocols.
"""

from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import ConfigError, ProtocolError, TransportError


def _stable_seed(*parts) -> int:
    import hashlib

    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


# ---------------------------------------------------------------------------
# text substitutor (replace / add payloads)


class MockTextClient:
    """Deterministic word-shuffle substitutor plus a phrase bank for the
    add operation."""

    PHRASES = (
        "Limited time offer", "Grand opening soon", "Visit us today",
        "New arrivals weekly", "Thank you for reading", "Now in stock",
        "Members save more", "Ask our staff",
    )

    def substitute(self, text: str, seed: int) -> str:
        rng = np.random.default_rng(_stable_seed("substitute", text, seed))
        words = text.split(" ")
        shuffled = list(words)
        rng.shuffle(shuffled)
        if shuffled != words:
            return " ".join(shuffled)
        if len(words) == 1 and words[0][::-1] != words[0]:
            return words[0][::-1]
        return text + " x"

    def generate_text(self, seed: int) -> str:
        rng = np.random.default_rng(_stable_seed("generate", seed))
        return self.PHRASES[int(rng.integers(0, len(self.PHRASES)))]


# ---------------------------------------------------------------------------
# translator


class MockTranslator:
    """Dictionary-backed word-for-word mock. Words missing from the bundled
    dictionary pass through with a language tag so every language is total.
    Translating into the source language ('en') is the identity."""

    def __init__(self):
        data = json.loads(
            resources.files("glyphforge").joinpath("data/translations.json").read_text()
        )
        self.languages = tuple(data["languages"])
        self.dictionaries = data["dictionaries"]

    def translate(self, text: str, lang: str) -> str:
        if lang not in self.languages:
            raise ConfigError(f"translator: unsupported language {lang}")
        if lang == "en":
            return text
        table = self.dictionaries.get(lang, {})
        out = []
        for word in text.split(" "):
            key = word.lower().strip(".,!?:;")
            hit = table.get(key)
            if hit is not None:
                out.append(hit if word.islower() else hit.capitalize())
            else:
                out.append(f"{word}({lang})")
        return " ".join(out)


# ---------------------------------------------------------------------------
# detect-and-plan planner


class FixturePlannerClient:
    """Replays stored detect-and-plan responses keyed by instruction."""

    def __init__(self, fixtures: dict):
        self.fixtures = fixtures

    def plan(self, source_image, instruction: str) -> dict:
        if instruction not in self.fixtures:
            raise ProtocolError(f"planner fixture: no stored response for {instruction!r}")
        return self.fixtures[instruction]


# ---------------------------------------------------------------------------
# editing model (executor) + verifier, mock and HTTP


class MockExecutorClient:
    """Deterministic 'editing model': stamps a seeded block onto the source
    image so distinct (instruction, feedback) inputs give distinct outputs."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.requests = []  # (instruction, feedback) transcript for tests

    def execute(self, instruction: str, source_png: bytes, feedback=None) -> bytes:
        from .imaging import encode_png, read_png

        self.requests.append((instruction, feedback))
        img = read_png(source_png).copy()
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=-1)
        rng = np.random.default_rng(
            _stable_seed("execute", instruction, feedback or "", self.seed))
        h, w = img.shape[:2]
        bh, bw = max(4, h // 8), max(4, w // 8)
        y = int(rng.integers(0, max(1, h - bh)))
        x = int(rng.integers(0, max(1, w - bw)))
        img[y : y + bh, x : x + bw] = rng.integers(0, 256, size=3, dtype=np.uint8)
        return encode_png(img)


class ScriptedVerifierClient:
    """Plays back a scripted list of verdict dicts, one per attempt."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = 0

    def verify(self, instruction: str, source_png: bytes, edited_png: bytes) -> dict:
        idx = min(self.calls, len(self.script) - 1)
        self.calls += 1
        return self.script[idx]


def pass_verdicts():
    return {d: {"pass": True, "feedback": ""}
            for d in ("adherence", "legibility", "preservation")}


def fail_verdicts(dimension: str, feedback: str):
    v = pass_verdicts()
    v[dimension] = {"pass": False, "feedback": feedback}
    return v


class FixtureProposerClient:
    """Replays stored instruction proposals: list of {instruction, operation}."""

    def __init__(self, proposals):
        self.proposals = list(proposals)

    def propose(self, source_png: bytes):
        return self.proposals


def _post_json(url: str, body: dict, max_retries: int, timeout: float) -> dict:
    import requests

    last_err = None
    for attempt in range(1, max_retries + 1):
        try:
            resp = requests.post(url, json=body, timeout=timeout)
            resp.raise_for_status()
            return resp.json()
        except (requests.ConnectionError, requests.Timeout) as e:
            last_err = e
            time.sleep(min(0.1 * 2 ** attempt, 2.0))
    raise TransportError(f"post {url}: {last_err}", attempts=max_retries)


@dataclass
class HttpExecutorClient:
    url: str
    max_retries: int = 3
    timeout: float = 60.0
    _counter: int = 0

    def execute(self, instruction: str, source_png: bytes, feedback=None) -> bytes:
        self._counter += 1
        body = {
            "id": str(self._counter),
            "instruction": instruction,
            "source_png_b64": base64.b64encode(source_png).decode("ascii"),
        }
        if feedback:
            body["feedback"] = feedback
        payload = _post_json(self.url, body, self.max_retries, self.timeout)
        if "edited_png_b64" not in payload:
            raise ProtocolError("executor response: missing edited_png_b64")
        return base64.b64decode(payload["edited_png_b64"])


@dataclass
class HttpVerifierClient:
    url: str
    max_retries: int = 3
    timeout: float = 60.0
    _counter: int = 0

    def verify(self, instruction: str, source_png: bytes, edited_png: bytes) -> dict:
        self._counter += 1
        body = {
            "id": str(self._counter),
            "instruction": instruction,
            "source_png_b64": base64.b64encode(source_png).decode("ascii"),
            "edited_png_b64": base64.b64encode(edited_png).decode("ascii"),
        }
        payload = _post_json(self.url, body, self.max_retries, self.timeout)
        for dim in ("adherence", "legibility", "preservation"):
            if dim not in payload or "pass" not in payload[dim]:
                raise ProtocolError(f"verifier response: missing {dim} verdict")
        return {d: payload[d] for d in ("adherence", "legibility", "preservation")}
