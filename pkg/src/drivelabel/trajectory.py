"""Future-trajectory corridor masks: pose windowing, arc fitting, rasterization.

Masks are plain boolean numpy arrays: pixel masks are (height, width), patch
masks are (rows, cols). Bit true means drivable / inside the corridor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegeneratePosesError,
    DimensionMismatchError,
    InsufficientTrajectoryError,
    InvalidPoseError,
)
from .geometry import EnuPose, Homography, apply_homography

DEFAULT_HORIZON_M = 50.0
MIN_FUTURE_M = 5.0
LINE_FALLBACK_RADIUS = 10_000.0
VEHICLE_CLASSES = frozenset({"car", "truck", "bus", "van", "motorcycle", "vehicle"})


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned detection box in pixel coordinates."""

    frame: str
    cls: str
    conf: float
    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_min < self.u_max and self.v_min < self.v_max):
            raise InvalidPoseError(f"empty bounding box: {self}")
        if not 0.0 <= self.conf <= 1.0:
            raise InvalidPoseError(f"confidence out of range: {self.conf}")


@dataclass(frozen=True)
class ArcModel:
    """Fitted future-path model: a circle arc or a straight-line fallback.

    The arc-length parameter is 0 at the first windowed pose and increases in
    the direction of travel; ``span`` holds the (start, end) parameters of the
    windowed poses. ``rms_residual`` is the fit residual of the poses.
    """

    kind: str  # "circle" | "line"
    span: tuple[float, float]
    rms_residual: float
    # circle fields
    center: tuple[float, float] | None = None
    radius: float | None = None
    theta0: float | None = None  # angle of the span start point on the circle
    sweep_sign: float | None = None  # +1 counter-clockwise travel, -1 clockwise
    # line fields
    anchor: tuple[float, float] | None = None
    direction: tuple[float, float] | None = None

    def distance_and_param(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distance to the arc and signed arc-length parameter for (n, 2) points."""
        pts = np.asarray(xy, dtype=float)
        if self.kind == "circle":
            d = pts - np.asarray(self.center)
            rho = np.hypot(d[:, 0], d[:, 1])
            dist = np.abs(rho - self.radius)
            ang = np.arctan2(d[:, 1], d[:, 0])
            rel = (ang - self.theta0 + math.pi) % (2.0 * math.pi) - math.pi
            param = rel * self.radius * self.sweep_sign
            return dist, param
        d = pts - np.asarray(self.anchor)
        dx, dy = self.direction
        param = d[:, 0] * dx + d[:, 1] * dy
        dist = np.abs(d[:, 0] * dy - d[:, 1] * dx)
        return dist, param


def window_future_poses(
    log: Sequence[EnuPose],
    frame_time: float,
    horizon_m: float = DEFAULT_HORIZON_M,
    min_future_m: float = MIN_FUTURE_M,
) -> list[EnuPose]:
    """Select poses covering the future driving window of one frame.

    Walks the log from the first pose at or after ``frame_time`` and stops at
    the pose whose cumulative polyline arc length first reaches ``horizon_m``
    (that crossing pose is included). Stationary duplicates contribute zero
    arc length.

    Raises:
        InsufficientTrajectoryError: fewer than 2 future poses, or less than
            ``min_future_m`` of future driving in the log.
    """
    future = [p for p in log if p.timestamp >= frame_time]
    if len(future) < 2:
        raise InsufficientTrajectoryError(
            f"{len(future)} poses at/after t={frame_time}, need at least 2"
        )
    out = [future[0]]
    total = 0.0
    for prev, cur in zip(future, future[1:]):
        total += math.hypot(cur.x - prev.x, cur.y - prev.y)
        out.append(cur)
        if total >= horizon_m:
            return out
    if total < min_future_m:
        raise InsufficientTrajectoryError(
            f"only {total:.2f} m of future driving available, need {min_future_m} m"
        )
    return out


def _kasa_fit(x: np.ndarray, y: np.ndarray):
    """Algebraic circle fit; returns (cx, cy, r) or None when near-singular."""
    a = np.column_stack([2.0 * x, 2.0 * y, np.ones_like(x)])
    b = x * x + y * y
    sol, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    if rank < 3 or sv[-1] <= 1e-9 * sv[0]:
        return None
    cx, cy, c = sol
    r2 = c + cx * cx + cy * cy
    if r2 <= 0.0:
        return None
    return float(cx), float(cy), float(math.sqrt(r2))


def _gauss_newton_circle(x, y, cx, cy, max_iter=50, tol=1e-12):
    """Refine a circle centre by Gauss-Newton on the geometric residuals."""
    c = np.array([cx, cy], dtype=float)
    for _ in range(max_iter):
        dx = x - c[0]
        dy = y - c[1]
        di = np.hypot(dx, dy)
        if np.any(di < 1e-12):
            break
        r = di.mean()
        res = di - r
        ju = -dx / di
        jv = -dy / di
        # radius is profiled out, so centre the Jacobian columns
        ju = ju - ju.mean()
        jv = jv - jv.mean()
        jtj = np.array([[ju @ ju, ju @ jv], [ju @ jv, jv @ jv]])
        jtr = np.array([ju @ res, jv @ res])
        try:
            step = np.linalg.solve(jtj, -jtr)
        except np.linalg.LinAlgError:
            break
        c += step
        if np.linalg.norm(step) < tol * (1.0 + np.linalg.norm(c)):
            break
    dx = x - c[0]
    dy = y - c[1]
    di = np.hypot(dx, dy)
    r = di.mean()
    rms = math.sqrt(float(np.mean((di - r) ** 2)))
    return float(c[0]), float(c[1]), float(r), rms


def _line_fit(pts: np.ndarray) -> ArcModel:
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    direction = vt[0]
    travel = pts[-1] - pts[0]
    if direction @ travel < 0:
        direction = -direction
    if np.linalg.norm(travel) < 1e-12 and np.allclose(centered, 0.0):
        raise DegeneratePosesError("all poses coincide")
    params = centered @ direction
    anchor = centroid + params[0] * direction
    span = (0.0, float(params[-1] - params[0]))
    perp = centered @ np.array([direction[1], -direction[0]])
    rms = math.sqrt(float(np.mean(perp**2)))
    return ArcModel(
        kind="line",
        span=span,
        rms_residual=rms,
        anchor=(float(anchor[0]), float(anchor[1])),
        direction=(float(direction[0]), float(direction[1])),
    )


def fit_arc(poses: Sequence[EnuPose]) -> ArcModel:
    """Fit a circle to windowed poses, falling back to a line on straight roads.

    The circle is the geometric least-squares fit (algebraic initialization,
    Gauss-Newton refinement). Radii beyond ``LINE_FALLBACK_RADIUS`` or a
    near-singular algebraic system select a total-least-squares line instead.
    """
    if len(poses) < 2:
        raise DegeneratePosesError(f"need at least 2 poses, got {len(poses)}")
    pts = np.array([[p.x, p.y] for p in poses], dtype=float)
    if np.allclose(pts, pts[0], atol=1e-12):
        raise DegeneratePosesError("all poses coincide")
    if len(poses) < 3:
        return _line_fit(pts)

    x, y = pts[:, 0], pts[:, 1]
    init = _kasa_fit(x, y)
    if init is None:
        return _line_fit(pts)
    cx, cy, r, rms = _gauss_newton_circle(x, y, init[0], init[1])
    if not math.isfinite(r) or r > LINE_FALLBACK_RADIUS:
        return _line_fit(pts)

    ang = np.arctan2(y - cy, x - cx)
    theta0 = float(ang[0])
    # Unwrap along the pose order to get a monotone sweep and its direction.
    unwrapped = np.unwrap(ang)
    sweep = unwrapped[-1] - unwrapped[0]
    sweep_sign = 1.0 if sweep >= 0 else -1.0
    span = (0.0, float(abs(sweep) * r))
    return ArcModel(
        kind="circle",
        span=span,
        rms_residual=rms,
        center=(cx, cy),
        radius=r,
        theta0=theta0,
        sweep_sign=sweep_sign,
    )


def rasterize_corridor(
    arc: ArcModel,
    h: Homography,
    vehicle_pose: EnuPose,
    vehicle_width: float,
    image_size: tuple[int, int],
    horizon_row: int,
) -> np.ndarray:
    """Rasterize the corridor of half a vehicle width around the arc.

    Every pixel at or below ``horizon_row`` is mapped pixel -> ground -> ENU
    and set when its distance to the arc is at most ``vehicle_width / 2`` and
    its arc-length parameter falls inside the fitted span, extended backward
    to the vehicle position so the corridor reaches the image bottom. Pixels
    above the horizon row, and pixels on the singular line of the homography,
    are false.

    Args:
        image_size: (height, width) in pixels.
    """
    height, width = image_size
    mask = np.zeros((height, width), dtype=bool)
    if horizon_row >= height:
        return mask
    v0 = max(horizon_row, 0)
    vs, us = np.mgrid[v0:height, 0:width]
    pix = np.column_stack([us.ravel(), vs.ravel()]).astype(float)
    ground, valid = apply_homography(h, pix)
    if not np.any(valid):
        return mask

    c, s = math.cos(vehicle_pose.heading), math.sin(vehicle_pose.heading)
    east = vehicle_pose.x + ground[:, 0] * c + ground[:, 1] * s
    north = vehicle_pose.y - ground[:, 0] * s + ground[:, 1] * c
    dist, param = arc.distance_and_param(np.column_stack([east, north]))

    _, vparam = arc.distance_and_param(vehicle_pose.xy[None, :])
    lo = min(arc.span[0], float(vparam[0]))
    hi = arc.span[1]
    inside = valid & (dist <= vehicle_width / 2.0) & (param >= lo) & (param <= hi)
    mask[v0:height, :] = inside.reshape(height - v0, width)
    return mask


def remove_vehicle_boxes(
    mask: np.ndarray,
    boxes: Sequence[BoundingBox],
    min_confidence: float = 0.5,
    vehicle_classes: frozenset = VEHICLE_CLASSES,
) -> np.ndarray:
    """Clear corridor bits inside confident vehicle detections."""
    out = mask.copy()
    height, width = out.shape
    for box in boxes:
        if box.cls not in vehicle_classes or box.conf < min_confidence:
            continue
        u0 = max(0, int(math.floor(box.u_min)))
        v0 = max(0, int(math.floor(box.v_min)))
        u1 = min(width, int(math.ceil(box.u_max)))
        v1 = min(height, int(math.ceil(box.v_max)))
        if u0 < u1 and v0 < v1:
            out[v0:v1, u0:u1] = False
    return out


def mask_to_patch_grid(mask: np.ndarray, patch: int = 14, coverage: float = 0.5) -> np.ndarray:
    """Downsample a pixel mask to the patch grid by coverage fraction.

    A patch is true when at least ``coverage`` of its pixels are true.

    Raises:
        DimensionMismatchError: mask dimensions not divisible by ``patch``.
    """
    height, width = mask.shape
    if height % patch or width % patch:
        raise DimensionMismatchError(
            f"mask {height}x{width} not divisible by patch size {patch}"
        )
    rows, cols = height // patch, width // patch
    frac = mask.reshape(rows, patch, cols, patch).mean(axis=(1, 3))
    return frac >= coverage


def patch_grid_to_mask(grid: np.ndarray, patch: int = 14) -> np.ndarray:
    """Nearest-neighbour upsample of a patch grid back to pixel resolution."""
    return np.repeat(np.repeat(grid, patch, axis=0), patch, axis=1)
