"""Command-line interface: match, export, evaluate, extract-config."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import archive as archive_io
from . import evaluate as ev
from .config import PipelineConfig
from .export import write_feature_and_match_files
from .pipeline import load_pair_list, run_matching, summary_lines, discover_pyramids
from .verify import rank_pairs

DEFAULT_POS_THRESHOLDS = (0.5, 1.0, 5.0, 10.0, 20.0)
DEFAULT_ANG_THRESHOLD = 10.0


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config.rng_seed = args.seed
    if getattr(args, "pairs", None) is not None:
        config.pair_list = str(args.pairs)
    config.validate()
    return config


def _cmd_match(args: argparse.Namespace) -> int:
    config = _load_config(args)
    pyramids = discover_pyramids(args.pyramid_dir)
    if len(pyramids) < 2:
        print(
            f"error: need at least 2 pyramid files in {args.pyramid_dir}, "
            f"found {len(pyramids)}",
            file=sys.stderr,
        )
        return 2

    pairs = None
    if config.pair_list is not None:
        pairs = load_pair_list(config.pair_list, set(pyramids))

    match_archive, outcomes = run_matching(
        args.pyramid_dir, config, pairs=pairs, jobs=args.jobs
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    archive_io.write_archive(match_archive, out / "matches.dmar")
    lines = summary_lines(outcomes)
    (out / "match_summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for line in lines:
        print(line)

    failed = [o for o in outcomes if o.record is None]
    if failed:
        print(f"error: {len(failed)} of {len(outcomes)} pairs failed", file=sys.stderr)
        return 1
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    config = _load_config(args)
    match_archive = archive_io.read_archive(args.archive)
    pairs = [record.pair for record in match_archive.records]
    if config.best_n_pairs is not None:
        pairs = rank_pairs(pairs, config.best_n_pairs)
    manifest = write_feature_and_match_files(pairs, args.out, config)
    print(
        f"wrote {len(manifest.feature_files)} feature files, "
        f"{manifest.keypoint_total} keypoints, {manifest.match_total} matches "
        f"to {args.out}"
    )
    return 0


def _read_name_list(path: str | Path) -> list[str]:
    names = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return names


def _cmd_evaluate(args: argparse.Namespace) -> int:
    est = ev.read_pose_file(args.est_poses)
    ref = ev.read_pose_file(args.ref_poses)
    day = _read_name_list(args.day_list)
    night = _read_name_list(args.night_list)

    missing_ref = [name for name in night if name not in ref]
    if missing_ref:
        print(f"error: night images missing from reference poses: {missing_ref}", file=sys.stderr)
        return 2

    anchors = [name for name in day if name in est and name in ref]
    if len(anchors) < 3:
        print(
            f"error: registration needs >= 3 day images present in both pose "
            f"files, found {len(anchors)}; reconstruct more day images or fix "
            "the day list",
            file=sys.stderr,
        )
        return 2

    transform = ev.fit_similarity(
        [est[name].C for name in anchors],
        [ref[name].C for name in anchors],
    )
    registered = {name: ev.apply_to_pose(transform, pose) for name, pose in est.items()}

    rows = []
    for name in night:
        if name in registered:
            pose = registered[name]
            rows.append(
                (
                    name,
                    ev.positional_error(pose, ref[name]),
                    ev.angular_error(pose.R, ref[name].R),
                )
            )
        else:
            rows.append((name, float("inf"), float("inf")))

    table = ev.threshold_sweep(
        [(pos, ang) for _, pos, ang in rows], args.thresholds, args.max_angle
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ev.write_pose_error_csv(out / "pose_errors.csv", rows)
    ev.write_sweep_csv(out / "sweep.csv", table)

    night_rec = sum(1 for name in night if name in est)
    day_rec = sum(1 for name in day if name in est)
    counts = [
        f"night_reconstructed {night_rec}/{len(night)}",
        f"day_reconstructed {day_rec}/{len(day)}",
        f"angular_threshold_deg {args.max_angle:g}",
    ]
    (out / "counts.txt").write_text("\n".join(counts) + "\n", encoding="utf-8")

    for line in counts:
        print(line)
    for tau, percent in table:
        print(f"<= {tau:g} m @ {args.max_angle:g} deg: {percent:.2f}%")
    return 0


def _cmd_extract_config(args: argparse.Namespace) -> int:
    config = PipelineConfig()
    if args.out:
        config.save(args.out)
        print(f"wrote default config to {args.out}")
    else:
        sys.stdout.write(config.dumps())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densesfm",
        description="Dense-feature SfM matching frontend: pyramids to verified, "
        "pixel-accurate correspondences, plus pose evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_match = sub.add_parser("match", help="match, relocalize, and verify pyramid pairs")
    p_match.add_argument("pyramid_dir", help="directory of .dpyr pyramid files")
    p_match.add_argument("--config", help="pipeline config JSON")
    p_match.add_argument("--pairs", help="pair list file (imageA imageB per line)")
    p_match.add_argument("--jobs", type=int, default=1, help="parallel pair workers")
    p_match.add_argument("--seed", type=int, help="override config rng_seed")
    p_match.add_argument("--out", required=True, help="output directory")
    p_match.set_defaults(func=_cmd_match)

    p_export = sub.add_parser("export", help="write backend import files from an archive")
    p_export.add_argument("archive", help="match archive (.dmar)")
    p_export.add_argument("--config", help="pipeline config JSON")
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.set_defaults(func=_cmd_export)

    p_eval = sub.add_parser("evaluate", help="register poses and report error statistics")
    p_eval.add_argument("est_poses", help="estimated poses (name qw qx qy qz cx cy cz)")
    p_eval.add_argument("ref_poses", help="reference poses, same format")
    p_eval.add_argument("day_list", help="file listing registration (day) image names")
    p_eval.add_argument("night_list", help="file listing evaluation (night) image names")
    p_eval.add_argument(
        "--thresholds",
        type=float,
        nargs="+",
        default=list(DEFAULT_POS_THRESHOLDS),
        help="positional thresholds in meters",
    )
    p_eval.add_argument(
        "--max-angle",
        type=float,
        default=DEFAULT_ANG_THRESHOLD,
        help="angular threshold in degrees",
    )
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_config = sub.add_parser("extract-config", help="write the default config JSON")
    p_config.add_argument("--out", help="destination path (default: stdout)")
    p_config.set_defaults(func=_cmd_extract_config)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
