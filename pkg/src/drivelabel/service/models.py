"""Request/response schemas for the labeling service and the CLI client."""

from __future__ import annotations

from pydantic import BaseModel, Field

from ..crf import CrfParams
from ..labeler import LabelConfig


class LabelOptions(BaseModel):
    threshold: float = 0.5
    iterations: int = 2
    use_crf: bool = True
    horizon_row: int | None = None
    horizon_fraction: float = 0.375
    patch_size: int = 14
    coverage: float = 0.5
    box_min_confidence: float = 0.5
    resample_from_crf: bool = False


class CrfOptions(BaseModel):
    a: float = 4.0
    b: float = 3.0
    theta_alpha: float = 25.0
    theta_beta: float = 3.0
    theta_gamma: float = 5.0
    iterations: int = 10
    epsilon: float = 1e-6
    backend: str = "separable"
    appearance_stride: int = 0
    color_budget: int = 2048
    spatial_truncate: float = 4.0

    def to_params(self) -> CrfParams:
        return CrfParams(**self.model_dump())


def to_label_config(label: LabelOptions, crf: CrfOptions) -> LabelConfig:
    return LabelConfig(crf=crf.to_params(), **label.model_dump())


class TrainOptions(BaseModel):
    learning_rate: float = 1e-4
    batch_size: int = 64
    batch_mode: str = "frames"
    epochs: int = 50
    seed: int = 0
    weight_decay: float = 0.0
    calibrate: bool = True


class SkipRecord(BaseModel):
    frame: str
    reason: str


class LabelRequest(BaseModel):
    images_dir: str
    features_dir: str
    gnss_path: str
    calibration_path: str
    output_dir: str
    boxes_path: str | None = None
    manifest_path: str | None = None
    label: LabelOptions = Field(default_factory=LabelOptions)
    crf: CrfOptions = Field(default_factory=CrfOptions)
    time_tolerance: float = 0.1
    save_scores: bool = True
    dry_run: bool = False
    workers: int = 1


class LabelResponse(BaseModel):
    labeled: int
    skipped: list[SkipRecord]
    frames: list[str]
    output_dir: str
    config_fingerprint: str
    dry_run: bool = False


class EvalRequest(BaseModel):
    pred_dir: str
    gt_dir: str
    output_dir: str
    manifest_path: str | None = None
    horizon_row: int | None = None
    horizon_fraction: float = 0.375
    hood_rows: int = 0
    strict: bool = False
    pr_curve: bool = True
    config_fingerprint: str = ""


class EvalResponse(BaseModel):
    report: dict
    report_json: str
    report_text: str
    pr_csv: str | None = None
    missing: list[str] = Field(default_factory=list)


class TrainRequest(BaseModel):
    features_dir: str
    labels_dir: str
    gt_dir: str
    manifest_path: str
    weights_path: str
    patch_size: int = 14
    horizon_fraction: float = 0.375
    train: TrainOptions = Field(default_factory=TrainOptions)


class TrainResponse(BaseModel):
    weights_path: str
    best_epoch: int
    val_iou: float
    temperature: float | None = None
    train_frames: int
    val_frames: int


class PredictRequest(BaseModel):
    features_dir: str
    weights_path: str
    output_dir: str
    images_dir: str | None = None  # required when use_crf
    use_crf: bool = True
    threshold: float = 0.5
    horizon_fraction: float = 0.375
    horizon_row: int | None = None
    patch_size: int = 14
    crf: CrfOptions = Field(default_factory=CrfOptions)
    save_scores: bool = True


class PredictResponse(BaseModel):
    predicted: int
    frames: list[str]
    output_dir: str


class SynthRequest(BaseModel):
    output_dir: str
    count: int = 50
    seed: int = 0
    image_size: int = 168
    patch_size: int = 14
    feature_dim: int = 64
    separation: float = 4.0
    gnss_noise: float = 0.1
    ratios: dict[str, float] | None = None


class SynthResponse(BaseModel):
    output_dir: str
    count: int
    scene_counts: dict[str, int]
    manifest_path: str


class OverlayRequest(BaseModel):
    images_dir: str
    masks_dir: str
    output_dir: str
    alpha: float = 0.5


class OverlayResponse(BaseModel):
    written: int
    output_dir: str


class HealthResponse(BaseModel):
    status: str
    version: str
