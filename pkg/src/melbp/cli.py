"""Command-line entry points: extract, evaluate, fusion-search, synth, report.

All verbs read a JSON run configuration (see ``RunConfig.from_dict``) and a
dataset manifest; reports are written as JSON with an optional plain-text
table.  Exit code is nonzero whenever a protocol or configuration error
aborts the run.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import MelbpError
from .pipeline import RunConfig, compute_feature_matrices, fusion_search, run_pipeline
from .manifest import load_manifest
from .synth import synth_generate


def _load_config(args) -> RunConfig:
    config = RunConfig.from_json(args.config)
    if getattr(args, "cache_dir", None):
        config.cache_dir = args.cache_dir
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    return config


def _cmd_synth(args) -> int:
    manifest = synth_generate(
        args.out,
        n_classes=args.classes,
        n_subjects=args.subjects,
        clips_per_subject=args.clips_per_subject,
        size=(args.width, args.height),
        length=args.length,
        seed=args.seed,
    )
    print(f"wrote {manifest}")
    return 0


def _cmd_extract(args) -> int:
    config = _load_config(args)
    if not config.resolve_cache_dir():
        print("extract needs a cache directory (--cache-dir, config, or env)", file=sys.stderr)
        return 2
    total = 0
    for path in args.manifest:
        manifest = load_manifest(path)
        samples, matrices = compute_feature_matrices(config, manifest)
        total += len(samples)
        dims = ", ".join(str(m.shape[1]) for m in matrices)
        print(f"{path}: cached {len(samples)} clips x {len(matrices)} descriptors (dims {dims})")
    print(f"done: {total} clips")
    return 0


def _write_report(report, out: str | None, table: bool) -> None:
    text = report.to_json()
    if out:
        Path(out).write_text(text + "\n")
        print(f"wrote {out}")
    else:
        print(text)
    if table:
        print(report.text_table())


def _cmd_evaluate(args) -> int:
    config = _load_config(args)
    report = run_pipeline(config, args.manifest)
    _write_report(report, args.out, args.table)
    m = report.metrics
    print(f"mean accuracy {m.mean_accuracy:.4f}  F1 {m.f1_macro:.4f}  UAR {m.uar:.4f}")
    return 0


def _cmd_fusion_search(args) -> int:
    config = _load_config(args)

    def progress(done, total, last):
        if done % 10 == 0 or done == total:
            print(f"  [{done}/{total}] last acc {last.mean_accuracy:.3f}", file=sys.stderr)

    results = fusion_search(config, args.manifest, progress=progress if args.verbose else None)
    doc = [r.to_dict() for r in results]
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {args.out}")
    best = results[0]
    print(f"{len(results)} schemes; best {best.scheme} acc {best.mean_accuracy:.4f}")
    return 0


def _cmd_report(args) -> int:
    doc = json.loads(Path(args.report).read_text())
    metrics = doc["metrics"]
    rows = [("overall", metrics)]
    for name, m in sorted((doc.get("per_source") or {}).items()):
        rows.append((name, m))
    print(f"{'scope':<14} {'Acc. (%)':>9} {'F1':>6} {'wF1':>6} {'UAR':>6}")
    print("-" * 46)
    for name, m in rows:
        print(f"{name:<14} {100 * m['mean_accuracy']:>9.2f} {m['f1_macro']:>6.2f} "
              f"{m['f1_weighted']:>6.2f} {m['uar']:>6.2f}")
    chosen = [f["chosen_c"] for f in doc.get("folds", [])]
    if chosen:
        print(f"chosen penalties per fold: {chosen}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="melbp",
        description="Spatiotemporal binary-pattern features and subject-disjoint evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic frame-sequence dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--clips-per-subject", type=int, default=4)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--length", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    for name, func, multi in (
        ("extract", _cmd_extract, True),
        ("evaluate", _cmd_evaluate, True),
        ("fusion-search", _cmd_fusion_search, True),
    ):
        p = sub.add_parser(name)
        p.add_argument("--manifest", action="append" if multi else None, required=True)
        p.add_argument("--config", required=True)
        p.add_argument("--cache-dir", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name != "extract":
            p.add_argument("--out", default=None)
        if name == "evaluate":
            p.add_argument("--table", action="store_true")
        if name == "fusion-search":
            p.add_argument("--verbose", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("report", help="print the plain-text table of a report JSON")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MelbpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
