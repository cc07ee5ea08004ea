"""Readers and writers for the pipeline's on-disk formats.

* GNSS log: CSV, one pose per line: timestamp_s, latitude_deg, longitude_deg,
  altitude_m, heading_deg.
* Detections: JSON lines, one object per detection:
  {"frame": ..., "class": ..., "conf": ..., "u_min": ..., "v_min": ...,
   "u_max": ..., "v_max": ...}.
* Masks: 8-bit single-channel PNG, 0 = non-drivable, 255 = drivable.
* Score maps: 8-bit single-channel PNG, value / 255 is the score.
* Suite manifest: JSON with per-frame scene tags, times and splits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .geometry import GeodeticPose
from .trajectory import BoundingBox


def load_gnss_log(path) -> list[GeodeticPose]:
    poses = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ConfigError(f"{path}:{lineno}: expected 5 comma-separated fields")
            t, lat, lon, alt, heading = (float(p) for p in parts)
            poses.append(
                GeodeticPose(
                    latitude=lat, longitude=lon, altitude=alt, heading=heading, timestamp=t
                )
            )
    for a, b in zip(poses, poses[1:]):
        if b.timestamp <= a.timestamp:
            raise ConfigError(f"{path}: timestamps not strictly increasing at t={b.timestamp}")
    return poses


def save_gnss_log(path, poses: list[GeodeticPose]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in poses:
            f.write(
                f"{p.timestamp!r},{p.latitude!r},{p.longitude!r},{p.altitude!r},{p.heading!r}\n"
            )


def load_boxes(path) -> list[BoundingBox]:
    boxes = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                boxes.append(
                    BoundingBox(
                        frame=str(obj["frame"]),
                        cls=str(obj["class"]),
                        conf=float(obj["conf"]),
                        u_min=float(obj["u_min"]),
                        v_min=float(obj["v_min"]),
                        u_max=float(obj["u_max"]),
                        v_max=float(obj["v_max"]),
                    )
                )
            except (KeyError, ValueError, json.JSONDecodeError) as e:
                raise ConfigError(f"{path}:{lineno}: bad detection record: {e}") from e
    return boxes


def save_boxes(path, boxes: list[BoundingBox]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for b in boxes:
            f.write(
                json.dumps(
                    {
                        "frame": b.frame,
                        "class": b.cls,
                        "conf": b.conf,
                        "u_min": b.u_min,
                        "v_min": b.v_min,
                        "u_max": b.u_max,
                        "v_max": b.v_max,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def save_mask_png(path, mask: np.ndarray) -> None:
    img = (np.asarray(mask, dtype=bool) * np.uint8(255)).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")


def load_mask_png(path, strict: bool = False) -> np.ndarray:
    """Load a mask; any nonzero pixel counts as drivable unless strict."""
    arr = np.asarray(Image.open(path).convert("L"))
    if strict and not np.isin(arr, (0, 255)).all():
        raise ConfigError(f"{path}: strict mask contains values other than 0/255")
    return arr > 0


def save_score_png(path, scores: np.ndarray) -> None:
    s = np.clip(np.asarray(scores, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(s * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_score_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")).astype(np.float64) / 255.0


def save_image_png(path, image: np.ndarray) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def load_image_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))


def load_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    if "frames" not in manifest or not isinstance(manifest["frames"], list):
        raise ConfigError(f"{path}: manifest must contain a 'frames' list")
    for fr in manifest["frames"]:
        for key in ("id", "scene"):
            if key not in fr:
                raise ConfigError(f"{path}: manifest frame missing '{key}'")
    return manifest


def save_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def frame_ids_from_dir(directory, suffix: str) -> list[str]:
    return sorted(p.stem for p in Path(directory).glob(f"*{suffix}"))
