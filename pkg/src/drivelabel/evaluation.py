"""Segmentation metrics, ROI cropping, PR curves and per-scene reporting."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, EmptyRoiError, UnknownSceneError
from .labeler import SCENE_TAGS


@dataclass(frozen=True)
class Roi:
    """Evaluated row band [row_start, row_stop) of a mask."""

    row_start: int
    row_stop: int

    def apply(self, mask: np.ndarray) -> np.ndarray:
        return mask[self.row_start : self.row_stop]


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def crop_roi(mask: np.ndarray, horizon_row: int, hood_rows: int = 0) -> tuple[np.ndarray, Roi]:
    """Restrict a mask to the rows between the horizon and the hood line.

    Raises:
        EmptyRoiError: no rows remain.
    """
    height = mask.shape[0]
    start = max(0, int(horizon_row))
    stop = height - max(0, int(hood_rows))
    if start >= stop:
        raise EmptyRoiError(f"ROI [{start}, {stop}) of a {height}-row mask is empty")
    roi = Roi(row_start=start, row_stop=stop)
    return roi.apply(mask), roi


def confusion(pred: np.ndarray, gt: np.ndarray, roi: Roi | None = None) -> ConfusionCounts:
    """Pixel confusion counts over the ROI (full mask when roi is None)."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
    if roi is not None:
        pred = roi.apply(pred)
        gt = roi.apply(gt)
    return ConfusionCounts(
        tp=int((pred & gt).sum()),
        fp=int((pred & ~gt).sum()),
        fn=int((~pred & gt).sum()),
        tn=int((~pred & ~gt).sum()),
    )


def metrics(c: ConfusionCounts) -> dict[str, float]:
    """IoU, F1, precision and recall with documented degenerate conventions.

    * IoU and F1 are 1 when prediction and truth are both empty.
    * precision with no positive predictions is 1 if nothing was missed, else 0.
    * recall with no positive truth is 1 if nothing was falsely detected, else 0.
    """
    denom_iou = c.tp + c.fp + c.fn
    iou = 1.0 if denom_iou == 0 else c.tp / denom_iou
    denom_f1 = 2 * c.tp + c.fp + c.fn
    f1 = 1.0 if denom_f1 == 0 else 2 * c.tp / denom_f1
    if c.tp + c.fp == 0:
        precision = 1.0 if c.fn == 0 else 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 1.0 if c.fp == 0 else 0.0
    else:
        recall = c.tp / (c.tp + c.fn)
    return {"iou": iou, "f1": f1, "precision": precision, "recall": recall}


def pr_curve(
    score_maps: list[tuple[np.ndarray, np.ndarray]],
    thresholds: np.ndarray | None = None,
    roi: Roi | None = None,
) -> list[tuple[float, float, float]]:
    """Micro-averaged precision/recall over frames at each threshold.

    Args:
        score_maps: (scores in [0, 1], boolean ground truth) per frame.
        thresholds: defaults to 0.00 .. 1.00 in 0.01 steps.

    Returns:
        list of (threshold, precision, recall), recall non-increasing.
    """
    if not score_maps:
        raise EmptyRoiError("no score maps to evaluate")
    if thresholds is None:
        thresholds = np.round(np.arange(0.0, 1.0001, 0.01), 2)
    scores = []
    gts = []
    for s, g in score_maps:
        s = np.asarray(s, dtype=np.float64)
        g = np.asarray(g, dtype=bool)
        if s.shape != g.shape:
            raise DimensionMismatchError(f"scores {s.shape} vs gt {g.shape}")
        if roi is not None:
            s, g = roi.apply(s), roi.apply(g)
        scores.append(s.ravel())
        gts.append(g.ravel())
    s = np.concatenate(scores)
    g = np.concatenate(gts)
    if s.min() < 0.0 or s.max() > 1.0:
        raise ValueError("scores must lie in [0, 1]")
    out = []
    for t in thresholds:
        pred = s >= t
        c = ConfusionCounts(
            tp=int((pred & g).sum()),
            fp=int((pred & ~g).sum()),
            fn=int((~pred & g).sum()),
            tn=int((~pred & ~g).sum()),
        )
        m = metrics(c)
        out.append((float(t), m["precision"], m["recall"]))
    return out


@dataclass
class FrameEval:
    frame_id: str
    scene: str
    counts: ConfusionCounts


@dataclass
class EvalReport:
    """Micro-averaged metrics per scene and overall."""

    overall: dict
    scenes: dict
    frame_count: int
    config_fingerprint: str = ""
    pr_samples: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "overall": self.overall,
            "scenes": self.scenes,
            "frame_count": self.frame_count,
            "config_fingerprint": self.config_fingerprint,
            "pr_samples": [list(s) for s in self.pr_samples],
        }

    def to_text(self) -> str:
        """Fixed-width grid: metric rows by scene columns."""
        columns = ["all"] + [t for t in SCENE_TAGS]
        header = f"{'':>10}" + "".join(f"{c:>14}" for c in columns)
        lines = [header]
        for key, label in (
            ("iou", "IoU"),
            ("f1", "F1"),
            ("precision", "PRE"),
            ("recall", "REC"),
        ):
            row = [f"{label:>10}"]
            for col in columns:
                src = self.overall if col == "all" else self.scenes.get(col)
                row.append(f"{100.0 * src[key]:>14.1f}" if src else f"{'-':>14}")
            lines.append("".join(row))
        row = [f"{'frames':>10}", f"{self.frame_count:>14d}"]
        for col in columns[1:]:
            src = self.scenes.get(col)
            row.append(f"{src['frames']:>14d}" if src else f"{0:>14d}")
        lines.append("".join(row))
        return "\n".join(lines) + "\n"


def _scene_block(counts: ConfusionCounts, frames: int) -> dict:
    block = metrics(counts)
    block.update(
        {"tp": counts.tp, "fp": counts.fp, "fn": counts.fn, "tn": counts.tn, "frames": frames}
    )
    return block


def aggregate(frame_results: list[FrameEval], config_fingerprint: str = "") -> EvalReport:
    """Pool confusion counts per scene and overall; metrics from pooled counts."""
    if not frame_results:
        raise EmptyRoiError("no frames to aggregate")
    per_scene: dict[str, ConfusionCounts] = {}
    scene_frames: dict[str, int] = {}
    total = ConfusionCounts()
    for fr in frame_results:
        if fr.scene not in SCENE_TAGS:
            raise UnknownSceneError(f"{fr.frame_id}: unknown scene {fr.scene!r}")
        per_scene[fr.scene] = per_scene.get(fr.scene, ConfusionCounts()) + fr.counts
        scene_frames[fr.scene] = scene_frames.get(fr.scene, 0) + 1
        total = total + fr.counts
    scenes = {
        tag: _scene_block(per_scene[tag], scene_frames[tag]) for tag in sorted(per_scene)
    }
    return EvalReport(
        overall=_scene_block(total, len(frame_results)),
        scenes=scenes,
        frame_count=len(frame_results),
        config_fingerprint=config_fingerprint,
    )


def write_report(report: EvalReport, json_path, text_path, pr_path=None) -> None:
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    with open(text_path, "w", encoding="utf-8") as f:
        f.write(report.to_text())
    if pr_path is not None and report.pr_samples:
        with open(pr_path, "w", encoding="utf-8") as f:
            f.write("threshold,precision,recall\n")
            for t, p, r in report.pr_samples:
                f.write(f"{t:.4f},{p:.6f},{r:.6f}\n")
