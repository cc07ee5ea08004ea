"""Synthetic driving scenes with exact ground truth.

Each scene is a single labeled frame: a rendered forward-camera image, a
pose log along the road centerline, a patch-feature grid drawn from
class-conditional Gaussian clusters, optional planted vehicle detections,
and an analytically derived drivable-area mask. Scenes are byte-reproducible
from their seed.

Feature clusters live on a seeded orthonormal codebook. Road patches sit on
an appearance gradient: their mode rotates from the lane-centre mode toward a
far-edge mode with lateral distance from the driven centerline (lane edges,
oncoming and adjacent lanes, crossing arms), so a reference feature estimated
from the driven corridor alone is biased toward the lane centre and misses
the outer drivable surface; re-estimating it from a first-pass label rotates
it outward and measurably raises recall, which is the behaviour the
refinement pass exists to exploit. Sampled noise is folded back across the
midplane toward the opposing cluster so no sample crosses it, keeping
cluster membership unambiguous by construction. A configurable fraction of
patches are outliers drawn from the opposing cluster to model feature noise
that only image-level context can repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SceneSpecError
from .features import FeatureGrid
from .geometry import (
    Calibration,
    EnuPose,
    GeodeticPose,
    Homography,
    apply_homography,
    enu_to_geodetic,
    pixel_to_ground,
)
from .trajectory import BoundingBox, mask_to_patch_grid

SCENE_KINDS = ("straight", "adjacent-lane", "curve", "intersection")
KIND_TO_TAG = {
    "straight": "suburban",
    "adjacent-lane": "highway",
    "curve": "countryside",
    "intersection": "intersection",
}
TAG_TO_KIND = {v: k for k, v in KIND_TO_TAG.items()}
TAG_ORDER = ("suburban", "highway", "countryside", "intersection")
DEFAULT_MIX = {"suburban": 43.0, "highway": 19.0, "countryside": 19.0, "intersection": 19.0}

# patch class codes
OFFROAD, ROAD_EGO, ROAD_ADJ, SIDEWALK, VEHICLE, SKY = range(6)
DRIVABLE_CODES = (ROAD_EGO, ROAD_ADJ)

PALETTE = {
    OFFROAD: (206, 211, 219),  # snow bank
    ROAD_EGO: (95, 98, 105),  # wet asphalt
    ROAD_ADJ: (95, 98, 105),  # same surface as the ego lane
    SIDEWALK: (158, 150, 139),  # gritted path
    VEHICLE: (52, 58, 142),
    SKY: (234, 239, 247),
}


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic scene."""

    seed: int
    kind: str = "straight"
    image_size: int = 168
    patch_size: int = 14
    feature_dim: int = 64
    feature_seed: int | None = None  # shared across a suite so clusters line up
    road_half_width: float = 3.0
    adjacent_width: float = 7.0
    curve_radius: float = 80.0
    cross_offset: float = 30.0  # intersection centre, metres ahead
    cross_extent: float = 40.0
    separation: float = 4.0  # |road mean - offroad mean| in within-class sigmas
    intra_shift: float = 3.0  # driven-track mode vs far-edge mode distance
    lateral_scale: float = 4.5  # metres at which the road gradient saturates
    distractor_separation: float | None = None  # sidewalk cluster distance, None: no sidewalk
    sidewalk_gap: float = 0.6
    sidewalk_width: float = 2.0
    mean_norm: float = 4.0
    feature_noise: float = 1.0
    outlier_fraction: float = 0.05
    gnss_noise: float = 0.1
    heading_noise_deg: float = 0.2
    pixel_noise: float = 2.5
    color_blend: float = 0.8  # how far outer-road colour steps toward snow
    plant_vehicle: bool = False
    vehicle_width: float = 1.9
    camera_height: float = 2.4
    focal: float | None = None  # None: 170 * image_size / 168
    horizon_fraction: float = 0.375
    speed_mps: float = 10.0
    log_dt: float = 0.2
    log_length_m: float = 90.0
    origin_lat: float = 60.2
    origin_lon: float = 24.8

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise SceneSpecError(f"unknown scene kind {self.kind!r}")
        if self.image_size % self.patch_size:
            raise SceneSpecError(
                f"image size {self.image_size} not divisible by patch {self.patch_size}"
            )
        if self.separation <= 0:
            raise SceneSpecError("separation must be positive")
        if self.kind == "curve" and self.curve_radius < 20.0:
            raise SceneSpecError(f"curve radius {self.curve_radius} below 20 m")
        if self.feature_dim < 8:
            raise SceneSpecError("feature_dim must be at least 8")
        if self.feature_noise < 0:
            raise SceneSpecError("feature_noise must be non-negative")
        # The full road must fit the camera footprint by mid-horizon range.
        f = self.resolved_focal
        half_fov_at = (self.image_size / 2.0) * 25.0 / f
        widest = self.road_half_width + (
            self.adjacent_width if self.kind in ("straight", "adjacent-lane") else 0.0
        )
        if widest > half_fov_at:
            raise SceneSpecError(
                f"road span {widest:.1f} m exceeds the {half_fov_at:.1f} m camera "
                "footprint at 25 m"
            )

    @property
    def resolved_focal(self) -> float:
        return self.focal if self.focal is not None else 170.0 * self.image_size / 168.0

    @property
    def scene_tag(self) -> str:
        return KIND_TO_TAG[self.kind]

    @property
    def horizon_row(self) -> int:
        return int(round(self.horizon_fraction * self.image_size))


class _Path:
    """Centerline abstraction: lateral offset / along-path parameter fields."""

    def lateral_along(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def point_at(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions (n, 2) and headings (n,) at arc lengths ``s``."""
        raise NotImplementedError


class _StraightPath(_Path):
    def __init__(self, p0: np.ndarray, heading: float):
        self.p0 = p0
        self.heading = heading
        self.d = np.array([math.sin(heading), math.cos(heading)])
        self.r = np.array([math.cos(heading), -math.sin(heading)])

    def lateral_along(self, pts):
        rel = pts - self.p0
        return rel @ self.r, rel @ self.d

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        pos = self.p0 + s[:, None] * self.d
        return pos, np.full(len(s), self.heading)


class _CirclePath(_Path):
    """Constant-curvature path; turn=+1 turns right, -1 turns left."""

    def __init__(self, p0: np.ndarray, heading: float, radius: float, turn: int):
        self.radius = radius
        self.turn = turn
        self.heading0 = heading
        r0 = np.array([math.cos(heading), -math.sin(heading)])
        self.center = p0 + turn * radius * r0
        self.ang0 = math.atan2(p0[1] - self.center[1], p0[0] - self.center[0])

    def lateral_along(self, pts):
        rel = pts - self.center
        rho = np.hypot(rel[:, 0], rel[:, 1])
        lateral = self.turn * (self.radius - rho)
        ang = np.arctan2(rel[:, 1], rel[:, 0])
        darc = (ang - self.ang0 + math.pi) % (2.0 * math.pi) - math.pi
        along = -self.turn * darc * self.radius
        return lateral, along

    def point_at(self, s):
        s = np.asarray(s, dtype=float)
        ang = self.ang0 - self.turn * s / self.radius
        pos = self.center + self.radius * np.column_stack([np.cos(ang), np.sin(ang)])
        heading = self.heading0 + self.turn * s / self.radius
        return pos, heading


@dataclass
class SyntheticScene:
    """A generated frame plus every byproduct needed for oracle checks."""

    frame_id: str
    spec: SceneSpec
    image: np.ndarray  # (h, w, 3) uint8
    gt_mask: np.ndarray  # (h, w) bool, analytic
    gt_patches: np.ndarray  # (rows, cols) bool
    features: FeatureGrid
    log: list  # GeodeticPose records
    boxes: list
    calibration: Calibration
    frame_time: float
    scene_tag: str
    class_map: np.ndarray  # (h, w) uint8 class codes
    patch_class: np.ndarray  # (rows, cols) uint8
    true_pose: EnuPose
    path: _Path


def _codebook(dim: int, feature_seed: int) -> np.ndarray:
    rng = np.random.default_rng(feature_seed)
    m = rng.standard_normal((dim, 8))
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diag(r))


class FeatureModel:
    """Class feature modes on a shared seeded codebook.

    All modes have the same norm and differ by direction; distances between
    modes are chord lengths in within-class-sigma units. The road is a
    one-parameter family rotating from the lane-centre mode (chord 0) to the
    far-edge mode (chord ``intra_shift``) on one great circle; every other
    class is a fixed mode on its own orthogonal circle.
    """

    def __init__(self, spec: SceneSpec):
        seed = spec.feature_seed if spec.feature_seed is not None else spec.seed
        self.basis = _codebook(spec.feature_dim, seed)
        self.r = spec.mean_norm
        self.spec = spec

    def _chord_angle(self, chord: float) -> float:
        return 2.0 * math.asin(min(1.0, chord / (2.0 * self.r)))

    def _on_circle(self, angle, ortho_col: int) -> np.ndarray:
        angle = np.asarray(angle, dtype=float)
        return self.r * (
            np.cos(angle)[..., None] * self.basis[:, 0]
            + np.sin(angle)[..., None] * self.basis[:, ortho_col]
        )

    def road_modes(self, lateral: np.ndarray) -> np.ndarray:
        """Road mode vectors for absolute lateral offsets in metres.

        The driven track (up to ~a half vehicle width off the centerline)
        keeps the reference appearance; the remaining lane surface sits most
        of the way to the far-edge mode, other lanes and crossing arms reach
        it fully. The profile models tracks cleared through snow cover.
        """
        spec = self.spec
        knots_m = [0.9, 1.3, spec.lateral_scale]
        levels = [0.0, 0.72, 1.0]
        u = np.interp(np.abs(lateral), knots_m, levels)
        angles = np.array([self._chord_angle(c) for c in u * spec.intra_shift])
        return self._on_circle(angles, 1)

    def mode(self, code: int) -> np.ndarray:
        if code == ROAD_EGO:
            return self._on_circle(0.0, 1).reshape(-1)
        if code == ROAD_ADJ:
            return self._on_circle(self._chord_angle(self.spec.intra_shift), 1).reshape(-1)
        if code == OFFROAD:
            return self._on_circle(self._chord_angle(self.spec.separation), 2).reshape(-1)
        if code == SIDEWALK:
            if self.spec.distractor_separation is None:
                return self.mode(OFFROAD)
            return self._on_circle(
                self._chord_angle(self.spec.distractor_separation), 3
            ).reshape(-1)
        if code == VEHICLE:
            return self._on_circle(math.radians(120.0), 4).reshape(-1)
        if code == SKY:
            return self._on_circle(math.radians(150.0), 5).reshape(-1)
        raise ValueError(f"unknown class code {code}")


def class_means(spec: SceneSpec) -> dict[int, np.ndarray]:
    """Fixed cluster means per class (road classes at their extreme modes)."""
    model = FeatureModel(spec)
    return {code: model.mode(code) for code in range(6)}


def _fold_noise(eps: np.ndarray, mean: np.ndarray, other: np.ndarray) -> np.ndarray:
    """Reflect noise so the sample stays on its own side of the cluster midplane."""
    mn = mean / np.linalg.norm(mean)
    on = other / np.linalg.norm(other)
    u = mn - on
    nu = np.linalg.norm(u)
    if nu < 1e-12:
        return eps
    uh = u / nu
    margin = 0.95 * float(mean @ u) / nu
    t = eps @ uh
    bad = t < -margin
    eps = eps.copy()
    eps[bad] -= (2.0 * (t[bad] + margin))[:, None] * uh
    return eps


def _make_homography(spec: SceneSpec) -> tuple[Homography, tuple]:
    """Forward camera at ``camera_height`` looking along +Y of the receiver frame.

    Maps pixel (u, v) to ground (X, Y) with the image horizon on row ``cy``:
    X = ch (u - cx) / (v - cy), Y = f ch / (v - cy).
    """
    f = spec.resolved_focal
    ch = spec.camera_height
    cx = spec.image_size / 2.0
    cy = float(spec.horizon_row)
    h = np.array(
        [
            [ch, 0.0, -ch * cx],
            [0.0, 0.0, f * ch],
            [0.0, 1.0, -cy],
        ]
    )
    hom = Homography(h)
    n = spec.image_size
    pair_pixels = [
        (0.25 * n, 0.85 * n),
        (0.75 * n, 0.85 * n),
        (0.35 * n, 0.60 * n),
        (0.65 * n, 0.70 * n),
    ]
    pairs = tuple((p, pixel_to_ground(hom, p)) for p in pair_pixels)
    return hom, pairs


def _classify_ground(
    spec: SceneSpec, path: _Path, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Class codes plus absolute lateral offsets from the driven centerline."""
    lateral, along = path.lateral_along(pts)
    codes = np.full(len(pts), OFFROAD, dtype=np.uint8)
    hw = spec.road_half_width
    on_route = along > -15.0
    codes[on_route & (np.abs(lateral) <= hw)] = ROAD_EGO
    if spec.kind in ("straight", "adjacent-lane"):
        adj = on_route & (lateral < -hw) & (lateral >= -hw - spec.adjacent_width)
        codes[adj] = ROAD_ADJ
    if spec.kind == "intersection":
        cross = (np.abs(along - spec.cross_offset) <= hw) & (
            np.abs(lateral) <= spec.cross_extent
        )
        codes[cross & (codes != ROAD_EGO)] = ROAD_ADJ
    if spec.distractor_separation is not None:
        lo = hw + spec.sidewalk_gap
        side = on_route & (lateral >= lo) & (lateral <= lo + spec.sidewalk_width)
        codes[side & (codes == OFFROAD)] = SIDEWALK
    return codes, np.abs(lateral)


def _patch_classes(class_map: np.ndarray, patch: int) -> np.ndarray:
    """Patch class: drivable majority first, then the dominant sub-class.

    Aligns patch semantics with the 0.5-coverage rule used to derive patch
    ground truth, so noise-free features are exactly consistent with it.
    """
    h, w = class_map.shape
    rows, cols = h // patch, w // patch
    blocks = class_map.reshape(rows, patch, cols, patch).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(rows, cols, patch * patch)
    out = np.empty((rows, cols), dtype=np.uint8)
    counts = np.stack([(blocks == code).sum(axis=2) for code in range(6)], axis=2)
    drivable = counts[:, :, ROAD_EGO] + counts[:, :, ROAD_ADJ]
    road_majority = drivable * 2 >= patch * patch
    ego_dominant = counts[:, :, ROAD_EGO] >= counts[:, :, ROAD_ADJ]
    out[road_majority & ego_dominant] = ROAD_EGO
    out[road_majority & ~ego_dominant] = ROAD_ADJ
    nondrivable = counts.copy()
    nondrivable[:, :, ROAD_EGO] = 0
    nondrivable[:, :, ROAD_ADJ] = 0
    dominant = nondrivable.argmax(axis=2).astype(np.uint8)
    out[~road_majority] = dominant[~road_majority]
    return out


def generate_scene(spec: SceneSpec, frame_id: str = "frame_0000") -> SyntheticScene:
    """Build one deterministic scene from its spec."""
    rng = np.random.default_rng(spec.seed)
    n = spec.image_size
    patch = spec.patch_size
    horizon = spec.horizon_row

    heading0 = float(rng.uniform(0.0, 2.0 * math.pi))
    p0 = np.zeros(2)
    if spec.kind == "curve":
        turn = 1 if rng.integers(0, 2) else -1
        radius = float(rng.uniform(max(20.0, spec.curve_radius * 0.75), spec.curve_radius * 1.25))
        path: _Path = _CirclePath(p0, heading0, radius, turn)
    else:
        path = _StraightPath(p0, heading0)

    # Pose log along the centerline, with planted position/heading noise.
    s_vals = np.arange(0.0, spec.log_length_m + 1e-9, spec.speed_mps * spec.log_dt)
    positions, headings = path.point_at(s_vals)
    pos_noise = rng.normal(0.0, spec.gnss_noise, size=positions.shape)
    head_noise = rng.normal(0.0, math.radians(spec.heading_noise_deg), size=len(s_vals))
    origin = GeodeticPose(
        latitude=spec.origin_lat, longitude=spec.origin_lon, altitude=0.0, heading=0.0, timestamp=0.0
    )
    log = []
    for i, s in enumerate(s_vals):
        x, y = positions[i] + pos_noise[i]
        lat, lon, alt = enu_to_geodetic(x, y, 0.0, origin)
        heading_deg = math.degrees(headings[i] + head_noise[i]) % 360.0
        log.append(
            GeodeticPose(
                latitude=lat,
                longitude=lon,
                altitude=alt,
                heading=heading_deg,
                timestamp=float(i) * spec.log_dt,
            )
        )
    frame_time = 0.0
    true_pose = EnuPose(
        x=float(p0[0]), y=float(p0[1]), z=0.0, heading=heading0, timestamp=frame_time
    )

    homography, pairs = _make_homography(spec)
    calibration = Calibration(
        homography=homography, vehicle_width=spec.vehicle_width, pairs=pairs
    )

    # Per-pixel class map from exact geometry (rows below the horizon project
    # to the ground plane; everything above is sky).
    class_map = np.full((n, n), SKY, dtype=np.uint8)
    lateral_map = np.zeros((n, n))
    vs, us = np.mgrid[horizon:n, 0:n]
    pix = np.column_stack([us.ravel(), vs.ravel()]).astype(float)
    ground, valid = apply_homography(homography, pix)
    c, s = math.cos(true_pose.heading), math.sin(true_pose.heading)
    east = true_pose.x + ground[:, 0] * c + ground[:, 1] * s
    north = true_pose.y - ground[:, 0] * s + ground[:, 1] * c
    codes, lateral = _classify_ground(spec, path, np.column_stack([east, north]))
    codes[~valid] = OFFROAD
    class_map[horizon:, :] = codes.reshape(n - horizon, n)
    lateral_map[horizon:, :] = lateral.reshape(n - horizon, n)

    # Planted vehicle: a box on the ego lane ahead, over-painted in the image.
    boxes = []
    if spec.plant_vehicle:
        dist = float(rng.uniform(18.0, 30.0))
        f = spec.resolved_focal
        cx, cy = n / 2.0, float(horizon)
        u_c = cx + f * 0.3 / dist
        v_c = cy + f * spec.camera_height / dist
        w_px = f * 1.8 / dist
        h_px = f * 1.5 / dist
        u0, u1 = u_c - w_px / 2.0, u_c + w_px / 2.0
        v0, v1 = v_c - h_px, v_c
        u0, u1 = max(0.0, u0), min(float(n), u1)
        v0, v1 = max(0.0, v0), min(float(n), v1)
        if u1 - u0 >= 2.0 and v1 - v0 >= 2.0:
            class_map[int(v0) : int(math.ceil(v1)), int(u0) : int(math.ceil(u1))] = VEHICLE
            boxes.append(
                BoundingBox(
                    frame=frame_id,
                    cls="car",
                    conf=0.9,
                    u_min=u0,
                    v_min=v0,
                    u_max=u1,
                    v_max=v1,
                )
            )

    # Render: palette colour per class plus quantized luminance noise, which
    # keeps the number of distinct colours small and the noise honest. Road
    # colour steps toward the snow colour in three lateral zones (driven
    # track, rest of the lane, outer surface), mirroring snow cover.
    palette = np.array([PALETTE[code] for code in range(6)], dtype=np.float64)
    image = palette[class_map]
    if spec.color_blend > 0.0:
        road_px = np.isin(class_map, DRIVABLE_CODES)
        zone = np.digitize(lateral_map, [1.3, spec.lateral_scale])
        w = (spec.color_blend * np.array([0.0, 0.6, 1.0])[zone])[..., None]
        image = np.where(road_px[..., None], (1.0 - w) * image + w * palette[OFFROAD], image)
    image = np.round(image).astype(np.int64)
    step = max(1, int(round(spec.pixel_noise / 1.1547)))
    levels = rng.choice(np.arange(-2, 3), size=(n, n, 1), p=[1 / 9, 2 / 9, 3 / 9, 2 / 9, 1 / 9])
    image = np.clip(image + levels * step, 0, 255).astype(np.uint8)

    # Ground truth from geometry alone.
    gt_mask = np.isin(class_map, DRIVABLE_CODES)
    gt_mask[:horizon, :] = False
    gt_patches = mask_to_patch_grid(gt_mask, patch, 0.5)

    # Features: class-conditional clusters with folded noise and outliers.
    # Road patches take their mode from the lateral appearance gradient.
    patch_class = _patch_classes(class_map, patch)
    model = FeatureModel(spec)
    means = {code: model.mode(code) for code in range(6)}
    rows = cols = n // patch
    flat_class = patch_class.ravel()
    n_patches = rows * cols

    drivable_px = np.isin(class_map, DRIVABLE_CODES)
    blocks = drivable_px.reshape(rows, patch, cols, patch)
    driv_count = blocks.sum(axis=(1, 3))
    lat_sum = (lateral_map * drivable_px).reshape(rows, patch, cols, patch).sum(axis=(1, 3))
    patch_lateral = np.where(driv_count > 0, lat_sum / np.maximum(driv_count, 1), 0.0)

    modes = np.empty((n_patches, spec.feature_dim))
    for code in range(6):
        sel = flat_class == code
        if sel.any():
            modes[sel] = means[code]
    road_sel = np.isin(flat_class, DRIVABLE_CODES)
    if road_sel.any():
        modes[road_sel] = model.road_modes(patch_lateral.ravel()[road_sel])

    eps = rng.standard_normal((n_patches, spec.feature_dim)) * spec.feature_noise
    outlier = rng.random(n_patches) < spec.outlier_fraction
    outlier &= ~np.isin(flat_class, (VEHICLE, SKY))
    values = np.empty((n_patches, spec.feature_dim))
    for i in range(n_patches):
        if outlier[i]:
            # Opposing-cluster draw: context, not the feature, must repair it.
            values[i] = means[OFFROAD if road_sel[i] else ROAD_EGO] + eps[i]
            continue
        if spec.feature_noise > 0:
            other = means[OFFROAD] if road_sel[i] or flat_class[i] == SIDEWALK else means[ROAD_EGO]
            if flat_class[i] == SIDEWALK:
                folded = eps[i : i + 1]  # the distractor is allowed to be ambiguous
            else:
                folded = _fold_noise(eps[i : i + 1], modes[i], other)
            values[i] = modes[i] + folded[0]
        else:
            values[i] = modes[i]
    grid = FeatureGrid(values=values.reshape(rows, cols, spec.feature_dim).astype(np.float32))

    return SyntheticScene(
        frame_id=frame_id,
        spec=spec,
        image=image,
        gt_mask=gt_mask,
        gt_patches=gt_patches,
        features=grid,
        log=log,
        boxes=boxes,
        calibration=calibration,
        frame_time=frame_time,
        scene_tag=spec.scene_tag,
        class_map=class_map,
        patch_class=patch_class,
        true_pose=true_pose,
        path=path,
    )


def mix_counts(n: int, ratios: dict[str, float] | None = None) -> dict[str, int]:
    """Apportion ``n`` scenes across tags by largest remainder.

    Ties are broken toward the larger integer share first, then toward the
    later tag in canonical order, which keeps the apportionment total stable.
    """
    if ratios is None:
        ratios = DEFAULT_MIX
    total = sum(ratios.values())
    quotas = {tag: n * ratios.get(tag, 0.0) / total for tag in TAG_ORDER}
    counts = {tag: int(math.floor(q)) for tag, q in quotas.items()}
    leftover = n - sum(counts.values())
    order = sorted(
        TAG_ORDER,
        key=lambda tag: (
            quotas[tag] - counts[tag],
            counts[tag],
            TAG_ORDER.index(tag),
        ),
        reverse=True,
    )
    for tag in order[:leftover]:
        counts[tag] += 1
    return counts


def generate_suite(
    n: int,
    base_spec: SceneSpec,
    seed: int,
    ratios: dict[str, float] | None = None,
    split_fractions: tuple[float, float] = (0.2, 0.2),
) -> tuple[list[SyntheticScene], dict]:
    """Generate ``n`` scenes with the default tag mix plus a manifest.

    The base spec supplies everything except kind and per-scene seeds; the
    suburban kind gets the sidewalk distractor. Splits are assigned per tag
    (val and test fractions from ``split_fractions``, remainder train).
    """
    if n < 1:
        raise SceneSpecError("suite size must be >= 1")
    counts = mix_counts(n, ratios)
    scenes = []
    frames = []
    idx = 0
    for tag in TAG_ORDER:
        c = counts[tag]
        for j in range(c):
            if split_fractions and c > 2:
                n_val = max(1, int(round(split_fractions[0] * c)))
                n_test = max(1, int(round(split_fractions[1] * c)))
            else:
                n_val = n_test = 0
            if j < c - n_val - n_test:
                split = "train"
            elif j < c - n_test:
                split = "val"
            else:
                split = "test"
            frame_id = f"frame_{idx:04d}"
            spec = replace(
                base_spec,
                seed=seed * 100_003 + idx,
                kind=TAG_TO_KIND[tag],
                feature_seed=base_spec.feature_seed
                if base_spec.feature_seed is not None
                else seed,
                distractor_separation=4.0 if tag == "suburban" else None,
                plant_vehicle=(tag == "highway" and j % 3 == 0),
            )
            scene = generate_scene(spec, frame_id)
            scenes.append(scene)
            frames.append(
                {
                    "id": frame_id,
                    "scene": tag,
                    "kind": spec.kind,
                    "split": split,
                    "frame_time": scene.frame_time,
                }
            )
            idx += 1
    manifest = {
        "seed": seed,
        "count": n,
        "ratios": ratios or DEFAULT_MIX,
        "scene_counts": counts,
        "image_size": base_spec.image_size,
        "patch_size": base_spec.patch_size,
        "feature_dim": base_spec.feature_dim,
        "frames": frames,
    }
    return scenes, manifest


def write_suite(scenes: list[SyntheticScene], manifest: dict, out_dir) -> None:
    """Write a suite in the exact formats the labeling pipeline consumes."""
    from pathlib import Path

    from . import fileio
    from .features import save_feature_grid
    from .geometry import save_calibration

    out = Path(out_dir)
    for sub in ("images", "gt", "features", "gnss"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    all_boxes = []
    for scene in scenes:
        fileio.save_image_png(out / "images" / f"{scene.frame_id}.png", scene.image)
        fileio.save_mask_png(out / "gt" / f"{scene.frame_id}.png", scene.gt_mask)
        save_feature_grid(out / "features" / f"{scene.frame_id}.tdfg", scene.features)
        fileio.save_gnss_log(out / "gnss" / f"{scene.frame_id}.csv", scene.log)
        all_boxes.extend(scene.boxes)
    fileio.save_boxes(out / "boxes.jsonl", all_boxes)
    save_calibration(out / "calibration.txt", scenes[0].calibration)
    fileio.save_manifest(out / "manifest.json", manifest)
