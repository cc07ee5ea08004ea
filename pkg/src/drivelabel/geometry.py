"""Coordinate transforms: geodetic to local ENU, pixel to ground plane, ground to ENU.

Conventions used throughout the package:

* Geodetic headings are degrees clockwise from true north, normalized to [0, 360).
* ENU headings are radians measured from the +y (north) axis, clockwise positive,
  so a heading of pi/2 points east.
* The ground-plane receiver frame has X to the right of the vehicle and Y forward.
* Pixel coordinates are (u, v) with u along image columns and v along rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    HorizonSingularityError,
    InsufficientDataError,
    InvalidPoseError,
)

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

# Homogeneous scale below this is treated as "on the horizon line".
SCALE_EPS = 1e-12


@dataclass(frozen=True)
class GeodeticPose:
    """WGS84 position plus heading at one timestamp."""

    latitude: float  # degrees
    longitude: float  # degrees
    altitude: float  # metres above the ellipsoid
    heading: float  # degrees clockwise from true north, [0, 360)
    timestamp: float  # seconds

    def __post_init__(self):
        vals = (self.latitude, self.longitude, self.altitude, self.heading, self.timestamp)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidPoseError(f"non-finite pose field: {vals}")
        if not -90.0 <= self.latitude <= 90.0:
            raise InvalidPoseError(f"latitude out of range: {self.latitude}")
        if not -180.0 <= self.longitude <= 180.0:
            raise InvalidPoseError(f"longitude out of range: {self.longitude}")
        object.__setattr__(self, "heading", self.heading % 360.0)


@dataclass(frozen=True)
class EnuPose:
    """Position in a local east-north-up frame.

    The timestamp is carried along so pose logs stay time-addressable after
    conversion; corridor math only uses (x, y) under the planar-ground
    assumption, z is kept for diagnostics.
    """

    x: float  # metres east
    y: float  # metres north
    z: float  # metres up
    heading: float  # radians from +y axis, clockwise positive
    timestamp: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.heading, self.timestamp)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidPoseError(f"non-finite ENU pose field: {vals}")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Homography:
    """3x3 projective map between pixel coordinates and ground-plane metres."""

    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if h.shape != (3, 3) or not np.all(np.isfinite(h)):
            raise DegenerateConfigurationError("homography must be a finite 3x3 matrix")
        if abs(h[2, 2]) > SCALE_EPS:
            h = h / h[2, 2]
        h = h.copy()
        h.flags.writeable = False
        object.__setattr__(self, "h", h)
        if abs(np.linalg.det(h)) <= 1e-12:
            raise DegenerateConfigurationError("homography is not invertible")

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))


def _ecef(lat_deg: float, lon_deg: float, alt: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    return np.array(
        [
            (n + alt) * math.cos(lat) * math.cos(lon),
            (n + alt) * math.cos(lat) * math.sin(lon),
            (n * (1.0 - WGS84_E2) + alt) * math.sin(lat),
        ]
    )


def _enu_rotation(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rows transform ECEF deltas into (east, north, up)."""
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    sl, cl = math.sin(lon), math.cos(lon)
    sp, cp = math.sin(lat), math.cos(lat)
    return np.array(
        [
            [-sl, cl, 0.0],
            [-cl * sp, -sl * sp, cp],
            [cl * cp, sl * cp, sp],
        ]
    )


def geodetic_to_enu(pose: GeodeticPose, origin: GeodeticPose) -> EnuPose:
    """Convert a geodetic pose to the local tangent frame anchored at ``origin``.

    Goes through earth-centred coordinates, so it is exact up to float
    rounding; accuracy of the flat-earth interpretation degrades with
    distance from the origin.
    """
    d = _ecef(pose.latitude, pose.longitude, pose.altitude) - _ecef(
        origin.latitude, origin.longitude, origin.altitude
    )
    e, n, u = _enu_rotation(origin.latitude, origin.longitude) @ d
    return EnuPose(
        x=float(e),
        y=float(n),
        z=float(u),
        heading=math.radians(pose.heading),
        timestamp=pose.timestamp,
    )


def enu_to_geodetic(x: float, y: float, z: float, origin: GeodeticPose) -> tuple[float, float, float]:
    """Inverse of :func:`geodetic_to_enu` position part; returns (lat, lon, alt)."""
    ecef = _enu_rotation(origin.latitude, origin.longitude).T @ np.array([x, y, z])
    ecef += _ecef(origin.latitude, origin.longitude, origin.altitude)
    px, py, pz = ecef
    lon = math.atan2(py, px)
    p = math.hypot(px, py)
    lat = math.atan2(pz, p * (1.0 - WGS84_E2))
    # Fixed-point refinement converges to sub-nanometre for near-surface points.
    for _ in range(6):
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
        lat = math.atan2(pz + WGS84_E2 * n * math.sin(lat), p)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    alt = p / math.cos(lat) - n
    return math.degrees(lat), math.degrees(lon), alt


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    if d < 1e-12:
        raise DegenerateConfigurationError("all points coincide")
    s = math.sqrt(2.0) / d
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    ones = np.ones((len(pts), 1))
    return (np.hstack([pts, ones]) @ t.T), t


def estimate_homography(pairs) -> Homography:
    """Estimate the pixel-to-ground homography from (pixel, ground) point pairs.

    Uses the normalized direct linear transform over all supplied pairs.
    With four non-degenerate pairs the fit is exact.

    Args:
        pairs: iterable of ((u, v), (X, Y)) tuples, pixel and metres.

    Raises:
        InsufficientDataError: fewer than four pairs.
        DegenerateConfigurationError: rank-deficient configuration, e.g.
            three collinear pixel points.
    """
    pairs = list(pairs)
    if len(pairs) < 4:
        raise InsufficientDataError(f"homography needs >= 4 point pairs, got {len(pairs)}")
    pix = np.array([p[0] for p in pairs], dtype=float)
    gnd = np.array([p[1] for p in pairs], dtype=float)
    if pix.shape[1] != 2 or gnd.shape[1] != 2:
        raise InsufficientDataError("pairs must contain 2-D points")
    if not (np.all(np.isfinite(pix)) and np.all(np.isfinite(gnd))):
        raise InvalidPoseError("non-finite calibration points")

    pixn, t_pix = _normalize_points(pix)
    gndn, t_gnd = _normalize_points(gnd)

    rows = []
    for (u, v, _), (xg, yg, _) in zip(pixn, gndn):
        rows.append([u, v, 1.0, 0.0, 0.0, 0.0, -xg * u, -xg * v, -xg])
        rows.append([0.0, 0.0, 0.0, u, v, 1.0, -yg * u, -yg * v, -yg])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    # A unique solution needs a 1-D null space; a tiny second-smallest
    # singular value means the configuration is degenerate.
    if s[-2] <= 1e-9 * s[0]:
        raise DegenerateConfigurationError("degenerate calibration configuration")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_gnd) @ hn @ t_pix
    return Homography(h)


def pixel_to_ground(h: Homography, pixel) -> tuple[float, float]:
    """Map one pixel to ground-plane metres; raises at the horizon line."""
    u, v = pixel
    w = h.h @ np.array([u, v, 1.0])
    if abs(w[2]) <= SCALE_EPS:
        raise HorizonSingularityError(f"pixel {pixel} is on the horizon line")
    return float(w[0] / w[2]), float(w[1] / w[2])


def ground_to_pixel(h: Homography, point) -> tuple[float, float]:
    """Map a ground-plane point back to pixel coordinates via the inverse map."""
    return pixel_to_ground(h.inverse(), point)


def apply_homography(h: Homography, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized homography application.

    Args:
        h: the homography.
        points: (n, 2) array of input coordinates.

    Returns:
        (mapped, valid): (n, 2) array and a boolean mask; rows where the
        homogeneous scale vanishes are invalid and left as zero.
    """
    pts = np.asarray(points, dtype=float)
    w = np.column_stack([pts, np.ones(len(pts))]) @ h.h.T
    valid = np.abs(w[:, 2]) > SCALE_EPS
    out = np.zeros((len(pts), 2))
    out[valid] = w[valid, :2] / w[valid, 2:3]
    return out, valid


def ground_to_enu(point, vehicle: EnuPose) -> tuple[float, float]:
    """Rigid 2-D transform of a receiver-frame point into the ENU frame."""
    x, y = ground_to_enu_array(np.asarray([point], dtype=float), vehicle)[0]
    return float(x), float(y)


def ground_to_enu_array(points: np.ndarray, vehicle: EnuPose) -> np.ndarray:
    """Vectorized form of :func:`ground_to_enu` for an (n, 2) array."""
    pts = np.asarray(points, dtype=float)
    if not np.all(np.isfinite(pts)):
        raise InvalidPoseError("non-finite ground points")
    c, s = math.cos(vehicle.heading), math.sin(vehicle.heading)
    east = vehicle.x + pts[:, 0] * c + pts[:, 1] * s
    north = vehicle.y - pts[:, 0] * s + pts[:, 1] * c
    return np.column_stack([east, north])


def enu_to_ground(point, vehicle: EnuPose) -> tuple[float, float]:
    """Inverse of :func:`ground_to_enu`: ENU point into the receiver frame."""
    px, py = point
    c, s = math.cos(vehicle.heading), math.sin(vehicle.heading)
    dx, dy = px - vehicle.x, py - vehicle.y
    return float(dx * c - dy * s), float(dx * s + dy * c)


@dataclass(frozen=True)
class Calibration:
    """Contents of a calibration file: ground-plane map plus vehicle width."""

    homography: Homography
    vehicle_width: float
    pairs: tuple = field(default_factory=tuple)


def save_calibration(path, cal: Calibration) -> None:
    """Write a plain-text key-value calibration file."""
    lines = ["# drivable-area labeling calibration"]
    hvals = " ".join(repr(float(v)) for v in cal.homography.h.ravel())
    lines.append(f"homography {hvals}")
    lines.append(f"vehicle_width {cal.vehicle_width!r}")
    for (u, v), (xg, yg) in cal.pairs:
        lines.append(f"pair {u!r} {v!r} {xg!r} {yg!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_calibration(path) -> Calibration:
    homography = None
    vehicle_width = None
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, *vals = line.split()
            if key == "homography":
                if len(vals) != 9:
                    raise DegenerateConfigurationError("homography line must have 9 values")
                homography = Homography(np.array([float(v) for v in vals]).reshape(3, 3))
            elif key == "vehicle_width":
                vehicle_width = float(vals[0])
            elif key == "pair":
                u, v, xg, yg = (float(x) for x in vals)
                pairs.append(((u, v), (xg, yg)))
            else:
                raise DegenerateConfigurationError(f"unknown calibration key: {key}")
    if homography is None or vehicle_width is None:
        raise DegenerateConfigurationError("calibration file missing homography or vehicle_width")
    return Calibration(homography=homography, vehicle_width=vehicle_width, pairs=tuple(pairs))
