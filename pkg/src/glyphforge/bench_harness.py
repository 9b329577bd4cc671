"""Benchmark runner and dataset statistician.

Cases are edited by an editor client, then judged on three dimensions
(instruction adherence, text clarity, background preservation), each scored
as 9x the expected score of the judge's logit distribution. Aggregation is
a micro-average over cases; stats mirror the corpus distribution report
(operation share, language share, region-count and edit-length histograms).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConsistencyError
from .reward_engine import JudgeRequest, expected_score

BENCH_OPERATIONS = ("add", "replace", "delete", "rearrange", "translate",
                    "change_style", "combined", "reasoning")
BENCH_DIMS = ("ia", "tc", "bp")
_DIM_TO_JUDGE = {"ia": "adherence", "tc": "clarity", "bp": "preservation"}
LENGTH_BUCKETS = ((0, 20), (21, 50), (51, 100), (101, 300), (301, 1000),
                  (1001, None))


@dataclass
class BenchCase:
    id: str
    source_path: str
    instruction: str
    operation: str
    language: str = "en"
    reference_path: str | None = None

    def __post_init__(self):
        if self.operation not in BENCH_OPERATIONS:
            raise ConfigError(f"bench case {self.id}: unknown operation {self.operation}")


@dataclass
class CaseResult:
    id: str
    edited_png: bytes | None
    ia: float = 0.0
    tc: float = 0.0
    bp: float = 0.0
    rationales: tuple = ("", "", "")
    failed: bool = False


def load_cases(manifest_path: str):
    """Case manifest: JSONL, one case per line; files must exist."""
    base = os.path.dirname(manifest_path)
    cases = []
    with open(manifest_path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            src = os.path.join(base, row["source"])
            if not os.path.exists(src):
                raise ConfigError(f"bench case {row['id']}: missing file {src}")
            ref = row.get("reference")
            cases.append(BenchCase(
                id=row["id"], source_path=src, instruction=row["instruction"],
                operation=row["operation"], language=row.get("language", "en"),
                reference_path=os.path.join(base, ref) if ref else None))
    return cases


def run_bench(cases, editor, judge_client, cache: dict | None = None,
              model_id: str = "default"):
    """Score every case: edit once, judge three dimensions. Results are
    cached by (case id, model id); editor failures mark the case failed."""
    results = []
    for case in sorted(cases, key=lambda c: c.id):
        key = (case.id, model_id)
        if cache is not None and key in cache:
            results.append(cache[key])
            continue
        with open(case.source_path, "rb") as f:
            source_png = f.read()
        try:
            edited_png = editor.execute(case.instruction, source_png)
        except Exception:
            result = CaseResult(id=case.id, edited_png=None, failed=True)
            results.append(result)
            if cache is not None:
                cache[key] = result
            continue
        scores = {}
        for dim in BENCH_DIMS:
            request = JudgeRequest(
                dimension=_DIM_TO_JUDGE[dim], operation=case.operation,
                instruction=case.instruction, source_png=source_png,
                edited_png=edited_png, request_id=f"{case.id}:{dim}")
            dist = judge_client.judge(request)
            scores[dim] = 9.0 * expected_score(dist)
        result = CaseResult(id=case.id, edited_png=edited_png,
                            ia=scores["ia"], tc=scores["tc"], bp=scores["bp"])
        results.append(result)
        if cache is not None:
            cache[key] = result
    return results


@dataclass
class BenchReport:
    per_operation: dict  # op -> {"ia","tc","bp","count"} or {"empty": True}
    overall: dict  # {"ia","tc","bp","count"}
    failed: int
    config_echo: dict = field(default_factory=dict)


def aggregate(results, cases, config_echo: dict | None = None) -> BenchReport:
    """Per-operation arithmetic means plus a micro-average over all scored
    cases. Rows follow the fixed operation enum order."""
    by_id = {c.id: c for c in cases}
    buckets = {op: [] for op in BENCH_OPERATIONS}
    scored = []
    failed = 0
    for res in results:
        case = by_id.get(res.id)
        if case is None:
            raise ConsistencyError(f"aggregate: orphan result {res.id}")
        if res.failed:
            failed += 1
            continue
        buckets[case.operation].append(res)
        scored.append(res)
    per_op = {}
    for op in BENCH_OPERATIONS:
        rows = buckets[op]
        if not rows:
            per_op[op] = {"empty": True, "count": 0}
        else:
            per_op[op] = {
                "ia": float(np.mean([r.ia for r in rows])),
                "tc": float(np.mean([r.tc for r in rows])),
                "bp": float(np.mean([r.bp for r in rows])),
                "count": len(rows),
            }
    if scored:
        overall = {
            "ia": float(np.mean([r.ia for r in scored])),
            "tc": float(np.mean([r.tc for r in scored])),
            "bp": float(np.mean([r.bp for r in scored])),
            "count": len(scored),
        }
    else:
        overall = {"ia": None, "tc": None, "bp": None, "count": 0}
    return BenchReport(per_operation=per_op, overall=overall, failed=failed,
                       config_echo=config_echo or {})


def _fmt(x):
    return "-" if x is None else f"{x:.3f}"


def emit_report(report: BenchReport, out_dir: str) -> None:
    """report.md (markdown table, config echo as comments) + report.csv."""
    os.makedirs(out_dir, exist_ok=True)
    lines = ["<!--"]
    lines.append("  aggregation: micro-average over cases")
    for key in sorted(report.config_echo):
        lines.append(f"  {key}: {report.config_echo[key]}")
    lines.append("-->")
    lines.append("")
    lines.append("| Operation | IA | TC | BP | Cases |")
    lines.append("|---|---|---|---|---|")
    for op in BENCH_OPERATIONS:
        cell = report.per_operation[op]
        if cell.get("empty"):
            lines.append(f"| {op} | - | - | - | 0 |")
        else:
            lines.append(f"| {op} | {_fmt(cell['ia'])} | {_fmt(cell['tc'])} "
                         f"| {_fmt(cell['bp'])} | {cell['count']} |")
    o = report.overall
    lines.append(f"| **Overall** | {_fmt(o['ia'])} | {_fmt(o['tc'])} "
                 f"| {_fmt(o['bp'])} | {o['count']} |")
    lines.append("")
    lines.append(f"Failed cases excluded from means: {report.failed}")
    lines.append("")
    with open(os.path.join(out_dir, "report.md"), "w") as f:
        f.write("\n".join(lines))
    with open(os.path.join(out_dir, "report.csv"), "w") as f:
        f.write("operation,ia,tc,bp,count\n")
        for op in BENCH_OPERATIONS:
            cell = report.per_operation[op]
            if cell.get("empty"):
                f.write(f"{op},,,,0\n")
            else:
                f.write(f"{op},{cell['ia']!r},{cell['tc']!r},{cell['bp']!r},"
                        f"{cell['count']}\n")
        f.write(f"overall,{o['ia']!r},{o['tc']!r},{o['bp']!r},{o['count']}\n")


def parse_report_csv(path: str) -> dict:
    rows = {}
    with open(path) as f:
        next(f)
        for line in f:
            op, ia, tc, bp, count = line.strip().split(",")
            rows[op] = {
                "ia": float(ia) if ia and ia != "None" else None,
                "tc": float(tc) if tc and tc != "None" else None,
                "bp": float(bp) if bp and bp != "None" else None,
                "count": int(count),
            }
    return rows


# ---------------------------------------------------------------------------
# corpus statistics


def _length_bucket(n: int) -> str:
    for lo, hi in LENGTH_BUCKETS:
        if hi is None or n <= hi:
            return f"{lo}-{hi if hi is not None else 'inf'}"
    raise AssertionError


def stats(bundle_dirs) -> dict:
    """Four distributions over pair bundles: operation share, language share,
    edited-region-count histogram, edited-text-length histogram. Bundles
    without meta.json are skipped and counted."""
    op_counts: dict = {}
    lang_counts: dict = {}
    region_hist: dict = {}
    length_hist: dict = {}
    skipped = 0
    total = 0
    for bundle in sorted(str(b) for b in bundle_dirs):
        meta_path = os.path.join(bundle, "meta.json")
        if not os.path.exists(meta_path):
            skipped += 1
            continue
        with open(meta_path) as f:
            meta = json.load(f)
        total += 1
        op_counts[meta["operation"]] = op_counts.get(meta["operation"], 0) + 1
        lang = meta.get("language", "en")
        lang_counts[lang] = lang_counts.get(lang, 0) + 1
        boxes_path = os.path.join(bundle, "boxes.json")
        n_regions = 0
        if os.path.exists(boxes_path):
            with open(boxes_path) as f:
                n_regions = len(json.load(f))
        region_hist[n_regions] = region_hist.get(n_regions, 0) + 1
        plan_path = os.path.join(bundle, "plan.json")
        chars = 0
        if os.path.exists(plan_path):
            with open(plan_path) as f:
                chars = _edited_chars(json.load(f))
        bucket = _length_bucket(chars)
        length_hist[bucket] = length_hist.get(bucket, 0) + 1
    def share(counts):
        return {k: 100.0 * v / total for k, v in sorted(counts.items())} if total else {}
    return {
        "total": total,
        "skipped": skipped,
        "operation_share": share(op_counts),
        "language_share": share(lang_counts),
        "region_count_hist": dict(sorted(region_hist.items())),
        "edited_length_hist": length_hist,
    }


def _edited_chars(plan_json: dict) -> int:
    chars = sum(len(t) for t in plan_json.get("payload", {}).get("texts", {}).values())
    if "text" in plan_json.get("payload", {}):
        chars += len(plan_json["payload"]["text"])
    for sub in plan_json.get("subplans", []):
        chars += _edited_chars(sub)
    return chars


def stats_from_counts(op_counts: dict) -> dict:
    total = sum(op_counts.values())
    return {k: 100.0 * v / total for k, v in op_counts.items()}


# target operation mix used when synthesizing paper-scale corpora
PAPER_OPERATION_MIX = {
    "translate": 0.365, "replace": 0.238, "rearrange": 0.141, "delete": 0.107,
    "add": 0.071, "change_style": 0.041, "combined": 0.036,
}


def sample_operation_mix(n_draws: int, seed: int = 0) -> dict:
    """Categorical draws from the target operation mix; returns shares (%)."""
    ops = sorted(PAPER_OPERATION_MIX)
    probs = np.array([PAPER_OPERATION_MIX[o] for o in ops])
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    draws = rng.choice(len(ops), size=n_draws, p=probs)
    counts = {op: int((draws == i).sum()) for i, op in enumerate(ops)}
    return stats_from_counts(counts)


# ---------------------------------------------------------------------------
# mini-benchmark generation (48 cases: 8 operations x 2 languages x 3 seeds)


def generate_mini_benchmark(out_dir: str, seed: int = 7) -> str:
    """Build the shipped 48-case benchmark from the structured pipeline.
    Reasoning cases are replace pairs with knowledge-flavored instructions.
    Returns the manifest path."""
    from importlib import resources

    from .clients import MockTextClient, MockTranslator
    from .html_pipeline import make_pair
    from .imaging import write_png

    os.makedirs(out_dir, exist_ok=True)
    fixture = resources.files("glyphforge").joinpath(
        "data/fixtures/f1.html").read_text()
    text_client = MockTextClient()
    translator = MockTranslator()
    manifest_path = os.path.join(out_dir, "cases.jsonl")
    rows = []
    for op in BENCH_OPERATIONS:
        pipeline_op = "replace" if op == "reasoning" else op
        for lang in ("en", "zh"):
            for i in range(3):
                case_seed = seed + 1000 * i
                pair = make_pair(fixture, pipeline_op, case_seed, text_client,
                                 translator, language=lang)
                case_id = f"{op}_{lang}_{i}"
                src_name = f"{case_id}_src.png"
                ref_name = f"{case_id}_ref.png"
                write_png(os.path.join(out_dir, src_name), pair.source_raster)
                write_png(os.path.join(out_dir, ref_name), pair.target_raster)
                instruction = pair.plan.instruction
                if op == "reasoning":
                    instruction = ("Deduce the correct replacement from context, "
                                   "then " + instruction[0].lower() + instruction[1:])
                rows.append({"id": case_id, "source": src_name,
                             "instruction": instruction, "operation": op,
                             "language": lang, "reference": ref_name})
    with open(manifest_path, "w") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest_path
