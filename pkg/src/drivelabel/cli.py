"""Command-line client for the labeling engine.

Every subcommand builds the same request model the HTTP service accepts and
either runs it in-process or, with --server, sends it to a running service.
A TOML config file can preset options; explicit flags win over the config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config
from .errors import ConfigError, DrivelabelError
from .service import jobs
from .service.models import (
    CrfOptions,
    EvalRequest,
    LabelOptions,
    LabelRequest,
    OverlayRequest,
    PredictRequest,
    SynthRequest,
    TrainOptions,
    TrainRequest,
)

ENDPOINTS = {
    LabelRequest: ("/v1/label", jobs.run_label),
    EvalRequest: ("/v1/eval", jobs.run_eval),
    TrainRequest: ("/v1/train-head", jobs.run_train),
    PredictRequest: ("/v1/predict", jobs.run_predict),
    SynthRequest: ("/v1/synth", jobs.run_synth),
    OverlayRequest: ("/v1/overlay", jobs.run_overlay),
}


def _dispatch(req, server: str | None):
    path, runner = ENDPOINTS[type(req)]
    if server:
        import httpx

        resp = httpx.post(server.rstrip("/") + path, json=req.model_dump(), timeout=None)
        if resp.status_code != 200:
            raise ConfigError(f"service error {resp.status_code}: {resp.text}")
        return resp.json()
    return runner(req).model_dump()


def _opts_from_config(args):
    """LabelOptions / CrfOptions / TrainOptions from --config, if given."""
    label_opts, crf_opts, train_opts = LabelOptions(), CrfOptions(), TrainOptions()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        lc = cfg.label
        label_opts = LabelOptions(
            threshold=lc.threshold,
            iterations=lc.iterations,
            use_crf=lc.use_crf,
            horizon_row=lc.horizon_row,
            horizon_fraction=lc.horizon_fraction,
            patch_size=lc.patch_size,
            coverage=lc.coverage,
            box_min_confidence=lc.box_min_confidence,
            resample_from_crf=lc.resample_from_crf,
        )
        crf_opts = CrfOptions(**{k: getattr(lc.crf, k) for k in CrfOptions.model_fields})
        tc = cfg.train
        train_opts = TrainOptions(
            learning_rate=tc.learning_rate,
            batch_size=tc.batch_size,
            batch_mode=tc.batch_mode,
            epochs=tc.epochs,
            seed=tc.seed,
            weight_decay=tc.weight_decay,
        )
    return label_opts, crf_opts, train_opts


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--server", help="base URL of a running service; default runs in-process")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivelabel",
        description="Drivable-area auto-labeling, training, evaluation and synthesis",
    )
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="generate drivable-area masks for a frame directory")
    _add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--gnss", required=True, help="pose log file or per-frame directory")
    p.add_argument("--calibration", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--boxes")
    p.add_argument("--manifest")
    p.add_argument("--iterations", type=int, choices=(1, 2))
    p.add_argument("--threshold", type=float)
    p.add_argument("--no-crf", action="store_true")
    p.add_argument("--no-scores", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dry-run", action="store_true")

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    _add_common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--manifest")
    p.add_argument("--horizon-row", type=int)
    p.add_argument("--hood-rows", type=int, default=0)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--no-pr", action="store_true")

    p = sub.add_parser("train-head", help="train the linear head on generated labels")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("predict", help="predict masks from trained head weights")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--images", help="needed for CRF refinement")
    p.add_argument("--no-crf", action="store_true")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("synth", help="generate a synthetic scene suite with ground truth")
    _add_common(p)
    p.add_argument("--output", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=168)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--gnss-noise", type=float, default=0.1)

    p = sub.add_parser("overlay", help="blend masks over images for inspection")
    _add_common(p)
    p.add_argument("--images", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--alpha", type=float, default=0.5)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)

    return parser


def _make_request(args):
    label_opts, crf_opts, train_opts = _opts_from_config(args)
    if args.command == "label":
        updates = {}
        if args.iterations is not None:
            updates["iterations"] = args.iterations
        if args.threshold is not None:
            updates["threshold"] = args.threshold
        if args.no_crf:
            updates["use_crf"] = False
        if updates:
            label_opts = label_opts.model_copy(update=updates)
        return LabelRequest(
            images_dir=args.images,
            features_dir=args.features,
            gnss_path=args.gnss,
            calibration_path=args.calibration,
            output_dir=args.output,
            boxes_path=args.boxes,
            manifest_path=args.manifest,
            label=label_opts,
            crf=crf_opts,
            save_scores=not args.no_scores,
            dry_run=args.dry_run,
            workers=args.workers,
        )
    if args.command == "eval":
        return EvalRequest(
            pred_dir=args.pred,
            gt_dir=args.gt,
            output_dir=args.output,
            manifest_path=args.manifest,
            horizon_row=args.horizon_row,
            hood_rows=args.hood_rows,
            strict=args.strict,
            pr_curve=not args.no_pr,
        )
    if args.command == "train-head":
        updates = {}
        if args.epochs is not None:
            updates["epochs"] = args.epochs
        if args.learning_rate is not None:
            updates["learning_rate"] = args.learning_rate
        if args.batch_size is not None:
            updates["batch_size"] = args.batch_size
        if args.seed is not None:
            updates["seed"] = args.seed
        if updates:
            train_opts = train_opts.model_copy(update=updates)
        return TrainRequest(
            features_dir=args.features,
            labels_dir=args.labels,
            gt_dir=args.gt,
            manifest_path=args.manifest,
            weights_path=args.weights,
            train=train_opts,
        )
    if args.command == "predict":
        return PredictRequest(
            features_dir=args.features,
            weights_path=args.weights,
            output_dir=args.output,
            images_dir=args.images,
            use_crf=not args.no_crf,
            threshold=args.threshold,
            crf=crf_opts,
        )
    if args.command == "synth":
        return SynthRequest(
            output_dir=args.output,
            count=args.count,
            seed=args.seed,
            image_size=args.image_size,
            feature_dim=args.feature_dim,
            separation=args.separation,
            gnss_noise=args.gnss_noise,
        )
    if args.command == "overlay":
        return OverlayRequest(
            images_dir=args.images,
            masks_dir=args.masks,
            output_dir=args.output,
            alpha=args.alpha,
        )
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return 0
    try:
        result = _dispatch(_make_request(args), args.server)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except DrivelabelError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
