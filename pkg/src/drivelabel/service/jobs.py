"""Job runners shared by the HTTP service and the command-line client.

Each runner maps a request model onto the core pipeline and the on-disk
formats. Per-frame failures never abort a run: they become skip records.
Written artifacts carry no timestamps, so identical inputs and configuration
produce byte-identical outputs.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import fileio
from ..config import RunConfig
from ..errors import ConfigError, DrivelabelError
from ..evaluation import FrameEval, aggregate, confusion, crop_roi, pr_curve
from ..features import load_feature_grid
from ..geometry import geodetic_to_enu, load_calibration
from ..head import (
    TrainConfig,
    calibrate_temperature,
    load_weights,
    predict,
    predict_refined,
    save_weights,
    train_head,
)
from ..labeler import FrameBundle, label_frame
from ..synth import SceneSpec, generate_suite, write_suite
from ..trajectory import (
    fit_arc,
    mask_to_patch_grid,
    patch_grid_to_mask,
    rasterize_corridor,
    remove_vehicle_boxes,
    window_future_poses,
)
from .models import (
    EvalRequest,
    EvalResponse,
    LabelRequest,
    LabelResponse,
    OverlayRequest,
    OverlayResponse,
    PredictRequest,
    PredictResponse,
    SkipRecord,
    SynthRequest,
    SynthResponse,
    TrainRequest,
    TrainResponse,
    to_label_config,
)

logger = logging.getLogger(__name__)

OVERLAY_TINT = np.array([60, 200, 60], dtype=np.float64)


def _resolve_horizon(row: int | None, fraction: float, height: int) -> int:
    return int(row) if row is not None else int(round(fraction * height))


def _load_manifest_meta(manifest_path):
    if not manifest_path:
        return None
    manifest = fileio.load_manifest(manifest_path)
    return {fr["id"]: fr for fr in manifest["frames"]}


def _frame_pose_log(gnss_path: Path, frame_id: str):
    if gnss_path.is_dir():
        log_path = gnss_path / f"{frame_id}.csv"
        if not log_path.exists():
            raise ConfigError(f"no pose log for frame {frame_id} under {gnss_path}")
        return fileio.load_gnss_log(log_path)
    return fileio.load_gnss_log(gnss_path)


def run_label(req: LabelRequest) -> LabelResponse:
    """Label every frame in the image directory; failures become skips."""
    images_dir = Path(req.images_dir)
    features_dir = Path(req.features_dir)
    gnss_path = Path(req.gnss_path)
    out_dir = Path(req.output_dir)
    for p, name in ((images_dir, "images_dir"), (features_dir, "features_dir"), (gnss_path, "gnss_path")):
        if not p.exists():
            raise ConfigError(f"{name} does not exist: {p}")
    if not Path(req.calibration_path).exists():
        raise ConfigError(f"calibration file does not exist: {req.calibration_path}")
    calibration = load_calibration(req.calibration_path)
    meta = _load_manifest_meta(req.manifest_path)

    boxes_by_frame: dict[str, list] = {}
    if req.boxes_path:
        for box in fileio.load_boxes(req.boxes_path):
            boxes_by_frame.setdefault(box.frame, []).append(box)

    frame_ids = fileio.frame_ids_from_dir(images_dir, ".png")
    if not frame_ids:
        raise ConfigError(f"no .png frames under {images_dir}")
    cfg = to_label_config(req.label, req.crf)
    fingerprint = RunConfig(label=cfg, crf=cfg.crf).fingerprint()

    if req.dry_run:
        return LabelResponse(
            labeled=0,
            skipped=[],
            frames=frame_ids,
            output_dir=str(out_dir),
            config_fingerprint=fingerprint,
            dry_run=True,
        )

    out_dir.mkdir(parents=True, exist_ok=True)

    def process(frame_id: str):
        image = fileio.load_image_png(images_dir / f"{frame_id}.png")
        feature_path = features_dir / f"{frame_id}.tdfg"
        if not feature_path.exists():
            raise ConfigError(f"no feature file for frame {frame_id}")
        grid = load_feature_grid(feature_path)
        geo_log = _frame_pose_log(gnss_path, frame_id)
        info = meta.get(frame_id, {}) if meta else {}
        frame_time = float(info.get("frame_time", geo_log[0].timestamp))
        scene = info.get("scene", "suburban")

        enu_log = [geodetic_to_enu(p, geo_log[0]) for p in geo_log]
        vehicle = min(enu_log, key=lambda p: abs(p.timestamp - frame_time))
        if abs(vehicle.timestamp - frame_time) > req.time_tolerance:
            raise ConfigError(
                f"no pose within {req.time_tolerance} s of frame time {frame_time}"
            )
        poses = window_future_poses(enu_log, frame_time)
        arc = fit_arc(poses)
        corridor = rasterize_corridor(
            arc,
            calibration.homography,
            vehicle,
            calibration.vehicle_width,
            image.shape[:2],
            cfg.resolve_horizon_row(image.shape[0]),
        )
        corridor = remove_vehicle_boxes(
            corridor, boxes_by_frame.get(frame_id, []), cfg.box_min_confidence
        )
        sample = mask_to_patch_grid(corridor, cfg.patch_size, cfg.coverage)
        bundle = FrameBundle(
            frame_id=frame_id,
            image=image,
            features=grid,
            trajectory=sample,
            boxes=boxes_by_frame.get(frame_id, []),
            scene=scene,
        )
        result = label_frame(bundle, cfg)
        fileio.save_mask_png(out_dir / f"{frame_id}.png", result.mask)
        if req.save_scores:
            if result.marginals is not None:
                scores = result.marginals
            else:
                scores = np.repeat(
                    np.repeat(result.score_map.values, cfg.patch_size, axis=0),
                    cfg.patch_size,
                    axis=1,
                )
            fileio.save_score_png(out_dir / f"{frame_id}_scores.png", scores)
        with open(out_dir / f"{frame_id}.json", "w", encoding="utf-8") as f:
            json.dump(result.diagnostics.to_json_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return frame_id

    labeled: list[str] = []
    skipped: list[SkipRecord] = []

    def safe(frame_id: str):
        try:
            return process(frame_id), None
        except DrivelabelError as e:
            return None, SkipRecord(frame=frame_id, reason=f"{type(e).__name__}: {e}")

    if req.workers > 1:
        with ThreadPoolExecutor(max_workers=req.workers) as pool:
            outcomes = list(pool.map(safe, frame_ids))
    else:
        outcomes = [safe(f) for f in frame_ids]
    for ok, skip in outcomes:
        if ok is not None:
            labeled.append(ok)
        else:
            skipped.append(skip)
            logger.warning("skipped %s: %s", skip.frame, skip.reason)

    with open(out_dir / "skips.json", "w", encoding="utf-8") as f:
        json.dump([s.model_dump() for s in sorted(skipped, key=lambda s: s.frame)],
                  f, indent=2, sort_keys=True)
        f.write("\n")
    return LabelResponse(
        labeled=len(labeled),
        skipped=sorted(skipped, key=lambda s: s.frame),
        frames=sorted(labeled),
        output_dir=str(out_dir),
        config_fingerprint=fingerprint,
    )


def run_eval(req: EvalRequest) -> EvalResponse:
    pred_dir = Path(req.pred_dir)
    gt_dir = Path(req.gt_dir)
    out_dir = Path(req.output_dir)
    if not pred_dir.is_dir():
        raise ConfigError(f"pred_dir does not exist: {pred_dir}")
    if not gt_dir.is_dir():
        raise ConfigError(f"gt_dir does not exist: {gt_dir}")
    meta = _load_manifest_meta(req.manifest_path)

    gt_ids = fileio.frame_ids_from_dir(gt_dir, ".png")
    missing = []
    results = []
    score_pairs = []
    for frame_id in gt_ids:
        pred_path = pred_dir / f"{frame_id}.png"
        if not pred_path.exists():
            missing.append(frame_id)
            continue
        pred = fileio.load_mask_png(pred_path)
        gt = fileio.load_mask_png(gt_dir / f"{frame_id}.png")
        if pred.shape != gt.shape:
            raise ConfigError(f"{frame_id}: pred {pred.shape} vs gt {gt.shape}")
        horizon = _resolve_horizon(req.horizon_row, req.horizon_fraction, gt.shape[0])
        _, roi = crop_roi(gt, horizon, req.hood_rows)
        scene = (meta.get(frame_id, {}) if meta else {}).get("scene", "suburban")
        results.append(FrameEval(frame_id=frame_id, scene=scene, counts=confusion(pred, gt, roi)))
        score_path = pred_dir / f"{frame_id}_scores.png"
        if req.pr_curve and score_path.exists():
            score_pairs.append((roi.apply(fileio.load_score_png(score_path)), roi.apply(gt)))
    if missing and req.strict:
        raise ConfigError(f"missing predictions for frames: {missing}")
    if not results:
        raise ConfigError("no overlapping frames to evaluate")

    report = aggregate(results, config_fingerprint=req.config_fingerprint)
    if score_pairs:
        report.pr_samples = pr_curve(score_pairs)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    text_path = out_dir / "report.txt"
    pr_path = out_dir / "pr.csv" if report.pr_samples else None
    from ..evaluation import write_report

    write_report(report, json_path, text_path, pr_path)
    return EvalResponse(
        report=report.to_json_dict(),
        report_json=str(json_path),
        report_text=str(text_path),
        pr_csv=str(pr_path) if pr_path else None,
        missing=missing,
    )


def _patch_labels_from_masks(mask_dir: Path, frame_id: str, patch: int) -> np.ndarray:
    mask = fileio.load_mask_png(mask_dir / f"{frame_id}.png")
    return mask_to_patch_grid(mask, patch, 0.5)


def run_train(req: TrainRequest) -> TrainResponse:
    features_dir = Path(req.features_dir)
    labels_dir = Path(req.labels_dir)
    gt_dir = Path(req.gt_dir)
    manifest = fileio.load_manifest(req.manifest_path)
    frames = manifest["frames"]

    train_pairs = []
    val_pairs = []
    horizon_patch_rows = 0
    for fr in frames:
        frame_id = fr["id"]
        split = fr.get("split", "train")
        grid_path = features_dir / f"{frame_id}.tdfg"
        if not grid_path.exists():
            logger.warning("no features for %s, skipping", frame_id)
            continue
        grid = load_feature_grid(grid_path)
        image_h = grid.rows * req.patch_size
        horizon_patch_rows = math.ceil(
            _resolve_horizon(None, req.horizon_fraction, image_h) / req.patch_size
        )
        if split == "train":
            label_path = labels_dir / f"{frame_id}.png"
            if not label_path.exists():
                logger.warning("no label for %s, skipping", frame_id)
                continue
            train_pairs.append((grid, _patch_labels_from_masks(labels_dir, frame_id, req.patch_size)))
        elif split == "val":
            val_pairs.append((grid, _patch_labels_from_masks(gt_dir, frame_id, req.patch_size)))
    if not train_pairs or not val_pairs:
        raise ConfigError(
            f"need train and val frames, got {len(train_pairs)} train / {len(val_pairs)} val"
        )

    opts = req.train
    cfg = TrainConfig(
        learning_rate=opts.learning_rate,
        batch_size=opts.batch_size,
        batch_mode=opts.batch_mode,
        epochs=opts.epochs,
        seed=opts.seed,
        weight_decay=opts.weight_decay,
        val_horizon_patch_rows=horizon_patch_rows,
    )
    weights = train_head(train_pairs, val_pairs, cfg)
    if opts.calibrate:
        weights = calibrate_temperature(weights, val_pairs)
    Path(req.weights_path).parent.mkdir(parents=True, exist_ok=True)
    save_weights(req.weights_path, weights)
    return TrainResponse(
        weights_path=req.weights_path,
        best_epoch=int(weights.metadata.get("epoch", 0)),
        val_iou=float(weights.metadata.get("val_iou", 0.0)),
        temperature=weights.metadata.get("temperature"),
        train_frames=len(train_pairs),
        val_frames=len(val_pairs),
    )


def run_predict(req: PredictRequest) -> PredictResponse:
    features_dir = Path(req.features_dir)
    if not features_dir.is_dir():
        raise ConfigError(f"features_dir does not exist: {features_dir}")
    weights = load_weights(req.weights_path)
    out_dir = Path(req.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = req.crf.to_params()

    frame_ids = fileio.frame_ids_from_dir(features_dir, ".tdfg")
    if not frame_ids:
        raise ConfigError(f"no .tdfg files under {features_dir}")
    written = []
    for frame_id in frame_ids:
        grid = load_feature_grid(features_dir / f"{frame_id}.tdfg")
        image_h = grid.rows * req.patch_size
        horizon = _resolve_horizon(req.horizon_row, req.horizon_fraction, image_h)
        mask_patch, prob = predict(grid, weights, req.threshold)
        if req.use_crf:
            if not req.images_dir:
                raise ConfigError("images_dir is required when use_crf is set")
            image = fileio.load_image_png(Path(req.images_dir) / f"{frame_id}.png")
            mask, _ = predict_refined(grid, weights, image, params, horizon_row=horizon)
        else:
            mask = patch_grid_to_mask(mask_patch, req.patch_size)
            mask[:horizon, :] = False
        fileio.save_mask_png(out_dir / f"{frame_id}.png", mask)
        if req.save_scores:
            scores = np.repeat(np.repeat(prob, req.patch_size, axis=0), req.patch_size, axis=1)
            fileio.save_score_png(out_dir / f"{frame_id}_scores.png", scores)
        written.append(frame_id)
    return PredictResponse(predicted=len(written), frames=written, output_dir=str(out_dir))


def run_synth(req: SynthRequest) -> SynthResponse:
    base = SceneSpec(
        seed=0,
        image_size=req.image_size,
        patch_size=req.patch_size,
        feature_dim=req.feature_dim,
        separation=req.separation,
        gnss_noise=req.gnss_noise,
    )
    scenes, manifest = generate_suite(req.count, base, req.seed, ratios=req.ratios)
    write_suite(scenes, manifest, req.output_dir)
    return SynthResponse(
        output_dir=req.output_dir,
        count=req.count,
        scene_counts=manifest["scene_counts"],
        manifest_path=str(Path(req.output_dir) / "manifest.json"),
    )


def run_overlay(req: OverlayRequest) -> OverlayResponse:
    images_dir = Path(req.images_dir)
    masks_dir = Path(req.masks_dir)
    out_dir = Path(req.output_dir)
    if not 0.0 <= req.alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {req.alpha}")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for frame_id in fileio.frame_ids_from_dir(images_dir, ".png"):
        mask_path = masks_dir / f"{frame_id}.png"
        if not mask_path.exists():
            continue
        image = fileio.load_image_png(images_dir / f"{frame_id}.png").astype(np.float64)
        mask = fileio.load_mask_png(mask_path)
        if mask.shape != image.shape[:2]:
            raise ConfigError(f"{frame_id}: mask {mask.shape} vs image {image.shape[:2]}")
        blended = image.copy()
        blended[mask] = (1.0 - req.alpha) * image[mask] + req.alpha * OVERLAY_TINT
        fileio.save_image_png(out_dir / f"{frame_id}.png", np.round(blended).astype(np.uint8))
        written += 1
    return OverlayResponse(written=written, output_dir=str(out_dir))
