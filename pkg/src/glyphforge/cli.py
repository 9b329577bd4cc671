"""Single entry point: every pipeline as a subcommand.

Exit codes: 0 success, 1 domain error, 2 usage error. All randomness is
derived from --seed; offline subcommands are byte-reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

import numpy as np

from . import flow_core
from .bench_harness import (
    aggregate,
    emit_report,
    generate_mini_benchmark,
    load_cases,
    run_bench,
    stats,
)
from .clients import (
    HttpExecutorClient,
    HttpVerifierClient,
    MockExecutorClient,
    MockTextClient,
    MockTranslator,
    ScriptedVerifierClient,
    pass_verdicts,
)
from .config import RunConfig, SCHEMA_VERSION
from .errors import GlyphforgeError
from .glyph_layout import GlyphFont, regions_from_json, render_glyph
from .imaging import write_pgm, write_png
from .reward_engine import (
    JudgeRequest,
    composite_reward,
    default_judge_client,
    expected_score,
    RewardVector,
)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_render_glyph(args):
    with open(args.regions) as f:
        regions = regions_from_json(json.load(f))
    canvas = render_glyph(regions, args.width, args.height, GlyphFont.bundled())
    _ensure_parent(args.out)
    if args.out.endswith(".pgm"):
        write_pgm(args.out, canvas)
    else:
        write_png(args.out, canvas)
    return 0


def cmd_make_pairs(args, translate_first=False):
    from .html_pipeline import make_pair, translate_then_edit, write_pair_bundle

    cfg = _load_config(args)
    text_client, translator = MockTextClient(), MockTranslator()
    os.makedirs(args.out, exist_ok=True)
    html_paths = sorted(
        os.path.join(args.input, n) for n in os.listdir(args.input)
        if n.endswith(".html"))
    if not html_paths:
        raise GlyphforgeError(f"make-pairs: no .html files in {args.input}")
    count = 0
    for doc_i, path in enumerate(html_paths):
        with open(path) as f:
            html = f.read()
        for rep in range(args.count):
            seed = cfg.seed + 7919 * doc_i + rep
            if translate_first:
                pair = translate_then_edit(html, args.lang, args.op, seed,
                                           text_client, translator)
            else:
                pair = make_pair(html, args.op, seed, text_client, translator,
                                 language=args.lang)
            stem = os.path.splitext(os.path.basename(path))[0]
            write_pair_bundle(os.path.join(args.out, f"{stem}_{args.op}_{seed}"),
                              pair, seed)
            count += 1
    print(f"wrote {count} pair bundle(s) to {args.out}")
    return 0


def cmd_evr(args):
    from .edit_verify_retry import RetryPolicy, harvest, run_directory

    cfg = _load_config(args)
    max_attempts = 3
    for part in (args.policy or "").split(","):
        if part.startswith("max="):
            max_attempts = int(part[4:])
    policy = RetryPolicy(max_attempts=max_attempts)
    executor = (HttpExecutorClient(cfg.editor_url) if cfg.editor_url
                else MockExecutorClient(seed=cfg.seed))
    verifier = (HttpVerifierClient(cfg.verifier_url) if cfg.verifier_url
                else ScriptedVerifierClient([pass_verdicts()]))
    from .clients import FixtureProposerClient

    proposer = FixtureProposerClient([
        {"instruction": "Replace the headline text", "operation": "replace"},
        {"instruction": "Delete the smallest text", "operation": "delete"},
    ])
    images = [os.path.join(args.input, n) for n in os.listdir(args.input)
              if n.endswith(".png")]
    if not images:
        raise GlyphforgeError(f"evr: no .png files in {args.input}")
    summary = run_directory(executor, verifier, proposer, images, policy, args.out)
    if args.harvest:
        bundles, corrupt = harvest(args.out, os.path.join(args.out, "accepted"))
        print(f"harvested {bundles} bundle(s), {corrupt} corrupt line(s)")
    print(f"ran {len(summary)} case(s)")
    return 0


def cmd_train_sft(args):
    from . import tasks

    cfg = _load_config(args)
    if args.task == "twomode":
        model, trace = tasks.train_twomode(steps=args.steps, seed=cfg.seed)
    else:
        model, trace = tasks.train_bitmap(steps=args.steps, seed=cfg.seed)
    _ensure_parent(args.out)
    flow_core.save_checkpoint(args.out, model)
    flow_core.write_loss_trace(args.out + ".loss.csv", trace)
    print(f"trained {args.task} for {args.steps} steps; final loss {trace[-1]:.4f}")
    return 0


def cmd_train_rl(args):
    from . import tasks
    from .nft_rl import write_reward_trace

    cfg = _load_config(args)
    model = flow_core.load_checkpoint(args.ckpt)
    model, trace = tasks.train_bitmap_rl(model, epochs=args.epochs, k=cfg.k,
                                         beta=cfg.beta, seed=cfg.seed)
    _ensure_parent(args.out)
    flow_core.save_checkpoint(args.out, model)
    write_reward_trace(args.out + ".reward.csv", trace)
    print(f"RL for {args.epochs} epoch(s); mean reward "
          f"{trace[0][0]:.4f} -> {trace[-1][0]:.4f}")
    return 0


def cmd_score(args):
    cfg = _load_config(args)
    client = default_judge_client(seed=cfg.seed)
    with open(args.source, "rb") as f:
        source_png = f.read()
    with open(args.edited, "rb") as f:
        edited_png = f.read()
    reference_png = None
    if args.reference:
        with open(args.reference, "rb") as f:
            reference_png = f.read()
    dims = {}
    for dim in ("adherence", "clarity", "preservation", "quality"):
        if dim == "quality" and reference_png is None:
            continue
        request = JudgeRequest(
            dimension=dim, operation=args.op, instruction=args.instruction,
            source_png=source_png, edited_png=edited_png,
            reference_png=reference_png if dim == "quality" else None,
            request_id=f"score:{dim}")
        dims[dim] = expected_score(client.judge(request))
    out = {"dimensions": dims, "lambda": cfg.lambda_weights}
    if len(dims) == 4:
        out["composite"] = composite_reward(RewardVector(
            dims["adherence"], dims["clarity"], dims["preservation"],
            dims["quality"], weights=tuple(cfg.lambda_weights)))
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_bench(args):
    cfg = _load_config(args)
    if args.generate:
        manifest = generate_mini_benchmark(args.cases, seed=cfg.seed)
        print(f"generated mini-benchmark manifest {manifest}")
        if not args.out:
            return 0
    manifest = os.path.join(args.cases, "cases.jsonl")
    cases = load_cases(manifest)
    editor = (HttpExecutorClient(args.editor_url) if args.editor_url
              else MockExecutorClient(seed=cfg.seed))
    judge = default_judge_client(seed=cfg.seed)
    results = run_bench(cases, editor, judge, cache={})
    echo = {"judge": getattr(judge, "url", "mock"),
            "model_id": "default", "seed": cfg.seed,
            "lambda": cfg.lambda_weights}
    report = aggregate(results, cases, config_echo=echo)
    emit_report(report, args.out)
    print(f"report written to {args.out}")
    return 0


def cmd_stats(args):
    bundles = [os.path.join(args.input, n) for n in sorted(os.listdir(args.input))
               if os.path.isdir(os.path.join(args.input, n))]
    result = stats(bundles)
    text = json.dumps(result, indent=2, sort_keys=True)
    if args.out:
        _ensure_parent(args.out)
        with open(args.out, "w") as f:
            f.write(text + "\n")
    print(text)
    return 0


def _ensure_parent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="glyphforge",
        description="Desk-scale lab for text-centric image editing")
    parser.add_argument("--version", action="version",
                        version=f"glyphforge 0.1.0 (config schema {SCHEMA_VERSION}, "
                                f"checkpoint format {flow_core.CHECKPOINT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", default=None)

    p = sub.add_parser("render-glyph", help="render a glyph-prior canvas")
    p.add_argument("--regions", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_glyph)

    for name, translate_first in (("make-pairs", False), ("translate-pairs", True)):
        p = sub.add_parser(name, help="build structured edit pairs")
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--op", default="replace")
        p.add_argument("--lang", default="en" if not translate_first else "de")
        p.add_argument("--count", type=int, default=1)
        p.add_argument("--out", required=True)
        common(p)
        p.set_defaults(func=lambda a, tf=translate_first: cmd_make_pairs(a, tf))

    p = sub.add_parser("evr", help="edit-verify-retry over images")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--policy", default="max=3")
    p.add_argument("--out", required=True)
    p.add_argument("--harvest", action="store_true")
    common(p)
    p.set_defaults(func=cmd_evr)

    p = sub.add_parser("train-sft", help="train the toy velocity model")
    p.add_argument("--task", choices=("twomode", "bitmap"), default="twomode")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train_sft)

    p = sub.add_parser("train-rl", help="contrastive RL from an SFT checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_train_rl)

    p = sub.add_parser("score", help="judge one edited image")
    p.add_argument("--source", required=True)
    p.add_argument("--edited", required=True)
    p.add_argument("--reference", default=None)
    p.add_argument("--op", default="replace")
    p.add_argument("--instruction", required=True)
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("bench", help="run the judged benchmark")
    p.add_argument("--cases", required=True)
    p.add_argument("--editor-url", default=None)
    p.add_argument("--out", default="report")
    p.add_argument("--generate", action="store_true",
                   help="generate the 48-case mini-benchmark first")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("stats", help="corpus distribution report")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GlyphforgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
