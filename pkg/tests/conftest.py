import numpy as np
import pytest

from drivelabel.geometry import geodetic_to_enu
from drivelabel.labeler import FrameBundle
from drivelabel.synth import SceneSpec, generate_scene
from drivelabel.trajectory import (
    fit_arc,
    mask_to_patch_grid,
    rasterize_corridor,
    remove_vehicle_boxes,
    window_future_poses,
)


def bundle_from_scene(scene) -> FrameBundle:
    """Run the geometry front half of the pipeline on a synthetic scene."""
    enu_log = [geodetic_to_enu(p, scene.log[0]) for p in scene.log]
    poses = window_future_poses(enu_log, scene.frame_time)
    arc = fit_arc(poses)
    vehicle = min(enu_log, key=lambda p: abs(p.timestamp - scene.frame_time))
    spec = scene.spec
    corridor = rasterize_corridor(
        arc,
        scene.calibration.homography,
        vehicle,
        scene.calibration.vehicle_width,
        (spec.image_size, spec.image_size),
        spec.horizon_row,
    )
    corridor = remove_vehicle_boxes(corridor, scene.boxes)
    sample = mask_to_patch_grid(corridor, spec.patch_size, 0.5)
    return FrameBundle(
        frame_id=scene.frame_id,
        image=scene.image,
        features=scene.features,
        trajectory=sample,
        boxes=scene.boxes,
        scene=scene.scene_tag,
    )


@pytest.fixture(scope="session")
def straight_scene():
    return generate_scene(SceneSpec(seed=42, kind="straight", feature_seed=7))


@pytest.fixture(scope="session")
def curve_scene():
    return generate_scene(SceneSpec(seed=43, kind="curve", feature_seed=7))


@pytest.fixture(scope="session")
def clean_scene():
    """Perfectly separable limit: huge separation, no feature or pixel noise."""
    return generate_scene(
        SceneSpec(
            seed=44,
            kind="adjacent-lane",
            separation=50.0,
            feature_noise=0.0,
            outlier_fraction=0.0,
            gnss_noise=0.0,
            heading_noise_deg=0.0,
            feature_seed=7,
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
