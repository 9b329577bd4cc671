"""Unstructured-route orchestrator: propose instructions, execute edits,
verify, feed failures back, and retry until acceptance or budget exhaustion.

Every attempt is appended (and fsynced) to a per-case JSONL log before the
next attempt starts, so a crash between attempts resumes to the same final
status as an uninterrupted run.
"""

from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass, field

from .errors import TransportError

VERDICT_DIMS = ("adherence", "legibility", "preservation")
OPERATION_TAGS = ("add", "replace", "delete", "rearrange", "translate",
                  "change_style", "combined")


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    forward_feedback: bool = True

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("retry policy: max_attempts must be >= 1")


@dataclass
class Attempt:
    index: int  # 1-based
    instruction: str
    candidate_png: bytes | None
    verdicts: dict
    status: str  # accepted | rejected | retryable

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "instruction": self.instruction,
            "candidate_png_b64": (
                base64.b64encode(self.candidate_png).decode("ascii")
                if self.candidate_png else None),
            "verdicts": self.verdicts,
            "status": self.status,
        }

    @classmethod
    def from_json(cls, row: dict) -> "Attempt":
        png = row.get("candidate_png_b64")
        return cls(index=row["index"], instruction=row["instruction"],
                   candidate_png=base64.b64decode(png) if png else None,
                   verdicts=row["verdicts"], status=row["status"])


def _all_pass(verdicts: dict) -> bool:
    return all(verdicts.get(d, {}).get("pass") for d in VERDICT_DIMS)


def _failure_feedback(verdicts: dict) -> str:
    parts = []
    for dim in VERDICT_DIMS:
        v = verdicts.get(dim, {})
        if not v.get("pass"):
            parts.append(f"{dim}: {v.get('feedback', 'failed')}")
    return "; ".join(parts)


def propose(client, source_png: bytes):
    """Instruction proposals, deduplicated on normalized text; entries with
    unknown operation tags are dropped."""
    seen = set()
    out = []
    for entry in client.propose(source_png):
        text = " ".join(entry["instruction"].split())
        key = text.lower()
        if key in seen:
            continue
        if entry.get("operation") not in OPERATION_TAGS:
            continue
        seen.add(key)
        out.append({"instruction": text, "operation": entry["operation"]})
    return out


def _append_log(log_path: str, row: dict) -> None:
    with open(log_path, "a") as f:
        f.write(json.dumps(row) + "\n")
        f.flush()
        os.fsync(f.fileno())


def read_log(log_path: str):
    """Attempts already on disk; corrupt lines are skipped and counted."""
    attempts, skipped = [], 0
    if not os.path.exists(log_path):
        return attempts, skipped
    with open(log_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                attempts.append(Attempt.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError):
                skipped += 1
    return attempts, skipped


def run_case(executor, verifier, source_png: bytes, instruction: str,
             policy: RetryPolicy, log_path: str | None = None):
    """Execute-verify loop for one case. Returns (status, attempts).

    Resumes from an existing log at log_path: completed attempts are
    replayed from disk, not re-executed.
    """
    attempts, _ = read_log(log_path) if log_path else ([], 0)
    for prior in attempts:
        if prior.status == "accepted":
            return "accepted", attempts
    feedback = None
    if attempts and policy.forward_feedback:
        feedback = _failure_feedback(attempts[-1].verdicts) or None
    while len(attempts) < policy.max_attempts:
        index = len(attempts) + 1
        try:
            candidate = executor.execute(instruction, source_png,
                                         feedback=feedback if policy.forward_feedback else None)
            verdicts = verifier.verify(instruction, source_png, candidate)
            status = "accepted" if _all_pass(verdicts) else "retryable"
        except TransportError as e:
            candidate = None
            verdicts = {}
            status = "retryable"
        if status == "retryable" and index == policy.max_attempts:
            status = "rejected"
        attempt = Attempt(index=index, instruction=instruction,
                          candidate_png=candidate, verdicts=verdicts,
                          status=status)
        attempts.append(attempt)
        if log_path:
            _append_log(log_path, attempt.to_json())
        if status == "accepted":
            return "accepted", attempts
        if verdicts:
            feedback = _failure_feedback(verdicts) or None
    return "rejected", attempts


def run_directory(executor, verifier, proposer, image_paths, policy: RetryPolicy,
                  out_dir: str):
    """Run proposals for every image; one JSONL log per case under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    summary = []
    for img_path in sorted(image_paths):
        with open(img_path, "rb") as f:
            source_png = f.read()
        proposals = propose(proposer, source_png)
        if not proposals:
            summary.append({"image": str(img_path), "skipped": True})
            continue
        stem = os.path.splitext(os.path.basename(img_path))[0]
        for pi, prop in enumerate(proposals):
            case_id = f"{stem}_{pi:03d}"
            log_path = os.path.join(out_dir, f"{case_id}.log.jsonl")
            status, attempts = run_case(executor, verifier, source_png,
                                        prop["instruction"], policy, log_path)
            summary.append({"image": str(img_path), "case": case_id,
                            "operation": prop["operation"], "status": status,
                            "attempts": len(attempts)})
    with open(os.path.join(out_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return summary


def harvest(run_dir: str, out_dir: str):
    """Emit accepted cases as pair bundles (no boxes.json; meta.source =
    "unstructured"). Re-harvesting is byte-idempotent. Returns
    (bundle count, corrupt line count)."""
    os.makedirs(out_dir, exist_ok=True)
    bundles = 0
    corrupt = 0
    for name in sorted(os.listdir(run_dir)):
        if not name.endswith(".log.jsonl"):
            continue
        case_id = name[: -len(".log.jsonl")]
        attempts, skipped = read_log(os.path.join(run_dir, name))
        corrupt += skipped
        accepted = next((a for a in attempts if a.status == "accepted"), None)
        if accepted is None or accepted.candidate_png is None:
            continue
        bundle_dir = os.path.join(out_dir, case_id)
        os.makedirs(bundle_dir, exist_ok=True)
        with open(os.path.join(bundle_dir, "tgt.png"), "wb") as f:
            f.write(accepted.candidate_png)
        meta = {"source": "unstructured", "instruction": accepted.instruction,
                "attempts": accepted.index, "case": case_id}
        with open(os.path.join(bundle_dir, "meta.json"), "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)
        bundles += 1
    return bundles, corrupt
