"""Command line entry points: biprop run | eval | serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io as bio
from .evaluation import precision_recall
from .pipeline import RunConfig, SegmentationRun


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biprop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="segment a frame directory from a scribble or energy seed")
    run.add_argument("--frames", required=True, help="directory of frame_%%05d.png files")
    run.add_argument("--scribbles", help="frame-0 scribble PNG (0 none, 128 BG, 255 FG)")
    run.add_argument("--out", required=True, help="output directory for masks and report.json")
    run.add_argument("--mode", choices=["pixel", "superpixel"], default="superpixel")
    run.add_argument("--k-regions", type=int, default=1000)
    run.add_argument("--lambda", dest="lam", type=float, default=30.0)
    run.add_argument("--dynamic", choices=["on", "off"], default="off")
    run.add_argument("--verify", default="off", help="off | sample:<k> | all")
    run.add_argument("--binary", choices=["propagated", "smoothed"], default="propagated")
    run.add_argument("--seed-energy", help="energy seed file (with region map PNG beside it)")
    run.add_argument("--seed-region-map", help="region map PNG for --seed-energy")
    run.add_argument("--dump-energy", action="store_true")

    ev = sub.add_parser("eval", help="precision/recall of predicted masks against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--out", required=True)

    srv = sub.add_parser("serve", help="start the local HTTP service")
    srv.add_argument("--port", type=int, default=8650)
    srv.add_argument("--host", default="127.0.0.1")
    return parser


def _cmd_run(args) -> int:
    frames = bio.load_sequence(args.frames)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    cfg = RunConfig(
        mode=args.mode,
        dynamic=args.dynamic == "on",
        verify=args.verify,
        lam=args.lam,
        k_regions=args.k_regions,
        binary_path=args.binary,
        seed_source="energy_file" if args.seed_energy else "scribbles",
        output_dir=str(out_dir),
        dump_energy=args.dump_energy,
    )
    run = SegmentationRun(frames, cfg)
    if args.seed_energy:
        rmap_path = args.seed_region_map or str(Path(args.seed_energy).with_suffix(".regions.png"))
        unary, binary = bio.load_energy_file(args.seed_energy)
        run.set_energy_seed(unary, binary, bio.load_region_map(rmap_path))
    else:
        if not args.scribbles:
            print("error: either --scribbles or --seed-energy is required", file=sys.stderr)
            return 2
        run.set_scribbles(0, bio.load_scribbles(args.scribbles))

    run.execute()

    for t in range(frames.count):
        bio.save_mask(out_dir / f"mask_{t:05d}.png", run.masks[t])
    run.report.write(out_dir / "report.json")
    if run.verify_log:
        with open(out_dir / "verify_log.jsonl", "w") as fh:
            for rec in run.verify_log:
                fh.write(json.dumps(rec) + "\n")
    if args.dump_energy:
        _dump_energy(run, out_dir)
    totals = run.report.totals()
    print(
        f"segmented {frames.count} frames "
        f"(solve {totals['solve_s']:.3f}s, propagate {totals['propagate_s']:.3f}s, "
        f"{totals['augmentations']} augmentations)"
    )
    return 0


def _dump_energy(run: SegmentationRun, out_dir: Path) -> None:
    from .propagate import rasterize_unary

    for t in range(run.frames.count):
        if run.full_unary[t] is None:
            continue
        planes = rasterize_unary(run.full_unary[t], run.maps[t])
        for tag, plane in (("fg", planes.cost_fg), ("bg", planes.cost_bg)):
            top = plane.max()
            img = (plane / top * 255.0).astype(np.uint8) if top > 0 else np.zeros_like(plane, np.uint8)
            (out_dir / "energy").mkdir(exist_ok=True)
            Path(out_dir / "energy" / f"unary_{tag}_{t:05d}.png").write_bytes(bio.encode_gray_png(img))


def _cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_files = sorted(pred_dir.glob("mask_*.png"))
    if not pred_files:
        print(f"error: no mask_*.png files in {pred_dir}", file=sys.stderr)
        return 2
    per_frame = []
    for pf in pred_files:
        gf = gt_dir / pf.name
        if not gf.exists():
            print(f"error: missing ground truth {gf}", file=sys.stderr)
            return 2
        precision, recall = precision_recall(bio.load_mask(pf), bio.load_mask(gf))
        per_frame.append({"frame": pf.name, "precision": precision, "recall": recall})
    report = {
        "frames": per_frame,
        "mean_precision": float(np.mean([f["precision"] for f in per_frame])),
        "mean_recall": float(np.mean([f["recall"] for f in per_frame])),
        "convention": "empty prediction and empty truth score 1.0 (0/0 := 1)",
    }
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
    print(f"mean precision {report['mean_precision']:.4f}, mean recall {report['mean_recall']:.4f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
