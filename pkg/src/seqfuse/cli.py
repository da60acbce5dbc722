"""Command-line entry points.

Four subcommands cover the pipeline: ``build-db`` serializes a template
database from a reference traverse, ``localize`` scores a query traverse
against a database, ``evaluate`` turns a decisions file plus ground truth
into precision-recall artifacts, and ``synth-bench`` runs the seeded
synthetic fusion benchmark. Reports land in ``--out`` as CSV/JSON plus
rendered figures.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import channels as ch
from . import evaluation as ev
from . import report
from .config import ConfigError, RunConfig, load_config
from .dataset_io import IngestionError, load_ground_truth


def _load_run_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    return config


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_build_db(args) -> int:
    config = _load_run_config(args)
    db = ch.build_database(config, args.frames, args.tensors)
    out = _out_dir(args)
    db.save(out)
    print(f"built database: {db.n_templates} templates, "
          f"channels [{', '.join(db.channel_names)}] -> {out}")
    return 0


def cmd_localize(args) -> int:
    config = _load_run_config(args)
    db = ch.TemplateDatabase.load(args.db)
    out = _out_dir(args)
    decisions = list(ch.localize_frames(db, config, args.frames, args.tensors))
    names = db.channel_names
    report.write_decisions_csv(out / "decisions.csv", decisions, names)
    report.plot_quality_timeline(out / "quality_timeline.png", decisions,
                                 theta_a=config.theta_a)
    report.plot_match_trace(out / "match_trace.png", decisions)
    n_acc = sum(d.accepted for d in decisions)
    print(f"localized {len(decisions)} frames, {n_acc} accepted -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    decisions = report.read_decisions_csv(args.decisions)
    gt = load_ground_truth(args.gt, mode=args.gt_mode, tolerance=args.tolerance,
                           ref_path=args.gt_ref)
    out = _out_dir(args)
    curve = ev.sweep_pr(decisions, gt)
    counts = ev.score_decisions(decisions, gt, config.theta_a)
    report.write_pr_csv(out / "pr_curve.csv", curve)
    summary = report.curve_summary(curve)
    summary["at_theta_a"] = {
        "theta_a": config.theta_a, "precision": counts.precision,
        "recall": counts.recall, "f1": counts.f1,
        "tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn}
    report.write_summary_json(out / "summary.json", summary)
    report.plot_pr_curves(out / "pr_curve.png", {"run": curve})
    print(f"max F1 {curve.max_f1:.4f}, recall at full precision "
          f"{curve.recall_at_full_precision:.4f} -> {out}")
    return 0


def cmd_synth_bench(args) -> int:
    config = _load_run_config(args)
    world = ev.fusion_benefit_world(seed=config.seed)
    if config.world:
        world = ev.SyntheticWorld(**{**world.__dict__, **config.world,
                                     "seed": config.seed})
    data = ev.generate_synthetic(world)
    kwargs = ev.localizer_kwargs_from_config(config)
    out = _out_dir(args)

    curves: dict[str, ev.PRCurve] = {}
    summary: dict = {"seed": config.seed, "n_ref": world.n_ref,
                     "n_queries": data.n_queries, "runs": {}}
    names = [f"ch{c}" for c in range(world.n_channels)]

    fused = ev.run_synthetic(data, **kwargs)
    report.write_decisions_csv(out / "decisions_fused.csv", fused, names)
    curves["fused"] = ev.sweep_pr(fused, data.gt)
    summary["runs"]["fused"] = report.curve_summary(curves["fused"])

    for c in range(world.n_channels):
        single = ev.run_synthetic(data, channel_subset=[c], **kwargs)
        label = names[c]
        report.write_decisions_csv(out / f"decisions_{label}.csv", single, [label])
        curves[label] = ev.sweep_pr(single, data.gt)
        summary["runs"][label] = report.curve_summary(curves[label])

    report.write_summary_json(out / "summary.json", summary)
    report.plot_pr_curves(out / "pr_curves.png", curves,
                          title="Fused vs single-channel")
    report.plot_quality_timeline(out / "quality_timeline.png", fused,
                                 theta_a=config.theta_a)
    fused_f1 = summary["runs"]["fused"]["max_f1"]
    singles = ", ".join(f"{n} {summary['runs'][n]['max_f1']:.3f}" for n in names)
    print(f"fused max F1 {fused_f1:.4f}; single channels: {singles} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqfuse",
        description="Sequence-based place recognition over fused descriptor channels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="serialize a template database")
    p.add_argument("frames", help="reference frame directory")
    p.add_argument("--tensors", default=None, help="activation tensor directory")
    p.add_argument("--config", default=None, help="YAML run configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="database output directory")
    p.set_defaults(func=cmd_build_db)

    p = sub.add_parser("localize", help="run a query traverse against a database")
    p.add_argument("frames", help="query frame directory")
    p.add_argument("--db", required=True, help="database directory")
    p.add_argument("--tensors", default=None, help="query tensor directory")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", help="score a decisions file against ground truth")
    p.add_argument("--decisions", required=True, help="decisions CSV from localize")
    p.add_argument("--gt", required=True, help="ground-truth CSV")
    p.add_argument("--gt-mode", choices=("frame-offset", "metric"),
                   default="frame-offset")
    p.add_argument("--gt-ref", default=None,
                   help="reference-traverse coordinates (metric mode)")
    p.add_argument("--tolerance", type=float, required=True,
                   help="match tolerance (frames or meters)")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth-bench", help="seeded synthetic fusion benchmark")
    p.add_argument("--config", default=None,
                   help="YAML config; a 'world:' mapping overrides world parameters")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestionError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
