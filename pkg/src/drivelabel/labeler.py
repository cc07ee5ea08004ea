"""Per-frame label generation: similarity labeling, refinement passes, CRF stage."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .crf import CrfParams, build_unary, crf_refine
from .errors import DimensionMismatchError
from .features import FeatureGrid, SimilarityMap, mean_feature, normalize_map, similarity_map
from .trajectory import BoundingBox, mask_to_patch_grid, patch_grid_to_mask

logger = logging.getLogger(__name__)

SCENE_TAGS = ("suburban", "highway", "countryside", "intersection")
DEFAULT_HORIZON_FRACTION = 0.375


@dataclass(frozen=True)
class LabelConfig:
    """Knobs of the per-frame labeling pipeline."""

    threshold: float = 0.5
    iterations: int = 2
    use_crf: bool = True
    crf: CrfParams = field(default_factory=CrfParams)
    horizon_row: int | None = None  # None: horizon_fraction * image height
    horizon_fraction: float = DEFAULT_HORIZON_FRACTION
    patch_size: int = 14
    coverage: float = 0.5
    box_min_confidence: float = 0.5
    # When set, the refinement pass resamples from the CRF mask of the first
    # pass (majority-downsampled) instead of the thresholded similarity map.
    resample_from_crf: bool = False

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.iterations not in (1, 2):
            raise ValueError(f"iterations must be 1 or 2, got {self.iterations}")
        if self.patch_size < 1:
            raise ValueError("patch_size must be positive")

    def resolve_horizon_row(self, image_height: int) -> int:
        if self.horizon_row is not None:
            return int(self.horizon_row)
        return int(round(self.horizon_fraction * image_height))


@dataclass(frozen=True)
class FrameBundle:
    """Everything the labeler needs for one frame."""

    frame_id: str
    image: np.ndarray  # (h, w, 3) uint8
    features: FeatureGrid
    trajectory: np.ndarray  # (rows, cols) bool patch mask
    boxes: Sequence[BoundingBox] = ()
    scene: str = "suburban"

    def __post_init__(self):
        if self.scene not in SCENE_TAGS:
            raise ValueError(f"unknown scene tag {self.scene!r}, expected one of {SCENE_TAGS}")
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DimensionMismatchError(f"image must be (h, w, 3), got {self.image.shape}")
        t = np.asarray(self.trajectory, dtype=bool)
        if t.shape != (self.features.rows, self.features.cols):
            raise DimensionMismatchError(
                f"trajectory {t.shape} does not match feature grid "
                f"{(self.features.rows, self.features.cols)}"
            )
        object.__setattr__(self, "trajectory", t)

    def validate_patch_geometry(self, patch_size: int) -> None:
        h, w = self.image.shape[:2]
        if h != self.features.rows * patch_size or w != self.features.cols * patch_size:
            raise DimensionMismatchError(
                f"image {h}x{w} is not the feature grid "
                f"{self.features.rows}x{self.features.cols} times patch {patch_size}"
            )


@dataclass
class LabelDiagnostics:
    """Per-stage record of one labeled frame.

    ``timings`` hold wall-clock seconds and are excluded from serialized
    artifacts so outputs stay byte-identical across runs.
    """

    frame_id: str
    scene: str
    stages: list[str] = field(default_factory=list)
    trajectory_patches: int = 0
    baseline_patches: int = 0
    second_pass_patches: int = 0
    final_drivable_pixels: int = 0
    similarity_max: float = 0.0
    zero_norm_patches: int = 0
    horizon_row: int = 0
    timings: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "scene": self.scene,
            "stages": list(self.stages),
            "trajectory_patches": self.trajectory_patches,
            "baseline_patches": self.baseline_patches,
            "second_pass_patches": self.second_pass_patches,
            "final_drivable_pixels": self.final_drivable_pixels,
            "similarity_max": self.similarity_max,
            "zero_norm_patches": self.zero_norm_patches,
            "horizon_row": self.horizon_row,
        }


@dataclass
class LabelResult:
    """Output of one frame: full-resolution mask plus intermediate products."""

    frame_id: str
    mask: np.ndarray  # (h, w) bool
    patch_label: np.ndarray  # (rows, cols) bool, pre-CRF
    score_map: SimilarityMap  # final normalized similarity
    marginals: np.ndarray | None  # CRF marginals when the CRF stage ran
    diagnostics: LabelDiagnostics


def label_baseline(bundle: FrameBundle, cfg: LabelConfig) -> tuple[np.ndarray, SimilarityMap]:
    """Single-pass similarity labeling against the trajectory mean feature."""
    ref = mean_feature(bundle.features, bundle.trajectory)
    smap = normalize_map(similarity_map(bundle.features, ref))
    return smap.values >= cfg.threshold, smap


def label_second_iteration(
    bundle: FrameBundle, cfg: LabelConfig
) -> tuple[np.ndarray, SimilarityMap]:
    """Two-pass labeling: the first-pass label becomes the new feature sample.

    Re-estimating the reference from the full first-pass label de-biases it
    away from the vehicle's own lane, which raises recall on drivable area
    far from the driven path.
    """
    first, first_map = label_baseline(bundle, cfg)
    if not first.any():
        logger.warning("%s: first-pass label empty, keeping baseline output", bundle.frame_id)
        return first, first_map
    ref = mean_feature(bundle.features, first)
    smap = normalize_map(similarity_map(bundle.features, ref))
    return smap.values >= cfg.threshold, smap


def label_frame(bundle: FrameBundle, cfg: LabelConfig) -> LabelResult:
    """Run the configured passes and produce the full-resolution mask."""
    bundle.validate_patch_geometry(cfg.patch_size)
    height, width = bundle.image.shape[:2]
    horizon = cfg.resolve_horizon_row(height)
    diag = LabelDiagnostics(
        frame_id=bundle.frame_id,
        scene=bundle.scene,
        trajectory_patches=int(bundle.trajectory.sum()),
        horizon_row=horizon,
    )

    t0 = time.perf_counter()
    baseline_label, smap = label_baseline(bundle, cfg)
    diag.stages.append("baseline")
    diag.baseline_patches = int(baseline_label.sum())
    diag.timings["baseline"] = time.perf_counter() - t0
    patch_label = baseline_label

    if cfg.iterations == 2:
        t0 = time.perf_counter()
        if cfg.resample_from_crf and cfg.use_crf:
            unary = build_unary(smap, (height, width), cfg.crf.epsilon)
            crf_mask, _ = crf_refine(unary, bundle.image, cfg.crf)
            sample = mask_to_patch_grid(crf_mask, cfg.patch_size, cfg.coverage)
            if not sample.any():
                sample = baseline_label
            ref = mean_feature(bundle.features, sample)
            smap = normalize_map(similarity_map(bundle.features, ref))
            patch_label = smap.values >= cfg.threshold
        else:
            patch_label, smap = label_second_iteration(bundle, cfg)
        diag.stages.append("second_pass")
        diag.second_pass_patches = int(patch_label.sum())
        diag.timings["second_pass"] = time.perf_counter() - t0

    marginals = None
    t0 = time.perf_counter()
    if cfg.use_crf:
        unary = build_unary(smap, (height, width), cfg.crf.epsilon)
        mask, marginals = crf_refine(unary, bundle.image, cfg.crf)
        diag.stages.append("crf")
    else:
        mask = patch_grid_to_mask(patch_label, cfg.patch_size)
    diag.timings["refine"] = time.perf_counter() - t0

    if horizon > 0:
        mask = mask.copy()
        mask[: min(horizon, height), :] = False
    diag.final_drivable_pixels = int(mask.sum())
    diag.similarity_max = float(smap.values.max())
    diag.zero_norm_patches = smap.zero_norm_patches

    return LabelResult(
        frame_id=bundle.frame_id,
        mask=mask,
        patch_label=patch_label,
        score_map=smap,
        marginals=marginals,
        diagnostics=diag,
    )
