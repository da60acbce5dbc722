"""Command-line wrapper around :func:`seqfuse_extractor.extract`."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import LAYER_INDICES, ExtractionJob, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqfuse-extract",
        description="Write per-frame CNN feature maps as .sqft tensor files")
    parser.add_argument("frames", help="input frame directory")
    parser.add_argument("--out", required=True, help="output tensor directory")
    parser.add_argument("--layers", nargs="+", default=["conv5"],
                        help="named ReLU outputs to export (default: conv5)")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--arch", choices=sorted(LAYER_INDICES),
                        default="alexnet")
    parser.add_argument("--weights", default="random",
                        help="'random' (seeded), 'imagenet', or a state-dict path")
    parser.add_argument("--seed", type=int, default=0,
                        help="initialization seed for random weights")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        job = ExtractionJob(frames=args.frames, out=args.out,
                            layers=list(args.layers),
                            batch_size=args.batch_size, arch=args.arch,
                            weights=args.weights, seed=args.seed)
        summary = extract(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary['written']} tensor files "
          f"({summary['skipped']} frames skipped) -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
