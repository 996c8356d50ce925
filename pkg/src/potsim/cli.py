"""
Command-line entry points.

Subcommands map to pipeline stages plus conveniences::

    potsim extract  --manifest corpus.txt --out results/
    potsim mean     --manifest corpus.txt --out results/
    potsim sim      --manifest corpus.txt --out results/
    potsim run      --manifest corpus.txt --out results/
    potsim heatmap  results/similarity.csv --out results/heatmap

Exit codes: 0 success, 1 runtime/task failure, 2 usage or configuration
error. ``POT_STATE_DIR`` overrides the default state directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .descriptors import DEFAULT_HOG_THRESHOLD
from .engine import (
    ConfigError,
    PipelineConfig,
    StageError,
    run_extract,
    run_mean,
    run_pipeline,
    run_similarity,
)
from .flow import FarnebackParams
from .frames import encode_pgm
from .pooling import DEFAULT_LEVELS

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _parse_resize(value: str) -> tuple[int, int]:
    try:
        w, h = value.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got '{value}'")
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"resize dimensions must be >= 1, got '{value}'")
    return w, h


def _parse_levels(value: str) -> tuple[int, ...]:
    try:
        levels = tuple(int(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")
    if not levels or any(l < 1 for l in levels):
        raise argparse.ArgumentTypeError(f"levels must all be >= 1, got '{value}'")
    return levels


def _add_pipeline_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="corpus manifest: <key>,<frames-dir> per line")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    parser.add_argument(
        "--resize", type=_parse_resize, default=(128, 128), metavar="WxH",
        help="working resolution (default 128x128)",
    )
    parser.add_argument(
        "--levels", type=_parse_levels, default=DEFAULT_LEVELS, metavar="L1,L2,...",
        help="temporal pyramid levels (default 1,2,4)",
    )
    parser.add_argument("--hog-threshold", type=float, default=DEFAULT_HOG_THRESHOLD)
    parser.add_argument("--shards", type=int, default=None, help="shard count (default ceil(N/64))")
    parser.add_argument("--state-dir", default=None, help="checkpoint state directory")
    fb = parser.add_argument_group("optical flow")
    fb.add_argument("--pyr-scale", type=float, default=0.5)
    fb.add_argument("--flow-levels", type=int, default=3)
    fb.add_argument("--winsize", type=int, default=15)
    fb.add_argument("--iterations", type=int, default=3)
    fb.add_argument("--poly-n", type=int, default=5)
    fb.add_argument("--poly-sigma", type=float, default=1.1)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    farneback = FarnebackParams(
        pyr_scale=args.pyr_scale,
        levels=args.flow_levels,
        winsize=args.winsize,
        iterations=args.iterations,
        poly_n=args.poly_n,
        poly_sigma=args.poly_sigma,
    )
    try:
        farneback.validate()
    except ValueError as exc:
        raise ConfigError(str(exc))
    if args.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {args.workers}")
    state_dir = args.state_dir or os.environ.get("POT_STATE_DIR") or None
    return PipelineConfig(
        manifest=args.manifest,
        out_dir=args.out,
        working_w=args.resize[0],
        working_h=args.resize[1],
        levels=args.levels,
        hog_threshold=args.hog_threshold,
        shard_count=args.shards,
        workers=args.workers,
        farneback=farneback,
        state_dir=state_dir,
        dump_series=getattr(args, "dump_series", False),
    )


def _read_similarity_csv(path: Path) -> dict[tuple[str, str], float]:
    scores: dict[tuple[str, str], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["video_a", "video_b", "similarity"]:
            raise ValueError(f"{path}: bad header {header}")
        for row in reader:
            if len(row) != 3:
                raise ValueError(f"{path}: malformed row {row}")
            scores[(row[0], row[1])] = float(row[2])
    return scores


def render_heatmap(sim_csv: str | Path, out_prefix: str | Path) -> tuple[Path, Path]:
    """Render similarity.csv as an NxN PGM plus a key-order listing."""
    sim_csv = Path(sim_csv)
    scores = _read_similarity_csv(sim_csv)
    keys = sorted({k for pair in scores for k in pair})
    n = len(keys)
    image = np.full((n, n), 255.0)
    for i, key_a in enumerate(keys):
        for j in range(i + 1, n):
            pair = (key_a, keys[j])
            if pair not in scores:
                raise ValueError(f"{sim_csv}: missing pair ({pair[0]}, {pair[1]})")
            value = round(255.0 * scores[pair])
            image[i, j] = image[j, i] = value
    out_prefix = Path(out_prefix)
    out_prefix.parent.mkdir(parents=True, exist_ok=True)
    pgm_path = out_prefix.with_name(out_prefix.name + ".pgm")
    keys_path = out_prefix.with_name(out_prefix.name + ".keys.txt")
    pgm_path.write_bytes(encode_pgm(image))
    keys_path.write_text("".join(key + "\n" for key in keys))
    return pgm_path, keys_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="potsim",
        description="Pairwise video similarity via pooled time series of "
        "optical-flow and gradient histograms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_extract = sub.add_parser("extract", help="compute features and write archive shards")
    _add_pipeline_args(p_extract)
    p_extract.add_argument(
        "--dump-series", action="store_true",
        help="also write per-video <key>.of.txt / <key>.hog.txt text dumps",
    )

    p_mean = sub.add_parser("mean", help="compute corpus mean chi-square distances")
    _add_pipeline_args(p_mean)

    p_sim = sub.add_parser("sim", help="compute pairwise similarity scores")
    _add_pipeline_args(p_sim)

    p_run = sub.add_parser("run", help="full pipeline: extract, mean, sim")
    _add_pipeline_args(p_run)
    p_run.add_argument("--dump-series", action="store_true")

    p_heat = sub.add_parser("heatmap", help="render similarity.csv as an NxN PGM")
    p_heat.add_argument("sim_csv", help="path to similarity.csv")
    p_heat.add_argument("--out", required=True, help="output prefix (writes <out>.pgm, <out>.keys.txt)")

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("POTSIM_LOG", "INFO"),
        format="%(asctime)s %(name)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK

    try:
        if args.command == "heatmap":
            pgm_path, keys_path = render_heatmap(args.sim_csv, args.out)
            print(f"wrote {pgm_path} and {keys_path}")
            return EXIT_OK

        config = _config_from_args(args)
        if args.command == "extract":
            shards = run_extract(config)
            print(f"wrote {len(shards)} shard(s) to {config.out_dir}")
        elif args.command == "mean":
            mean = run_mean(config)
            print(f"wrote mean_csd.csv (pair_count={mean.pair_count})")
        elif args.command == "sim":
            out = run_similarity(config)
            print(f"wrote {out}")
        elif args.command == "run":
            out = run_pipeline(config)
            print(f"wrote {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
