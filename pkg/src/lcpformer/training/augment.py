import numpy as np

from lcpformer.data.synthetic import rotate_z
from lcpformer.errors import LcpConfigError
from lcpformer.geometry.cloud import PointCloud

# Augmentation policies
AUGMENT_ANISOTROPIC = "anisotropic"
AUGMENT_SCENE = "scene"
AUGMENT_NONE = "none"
AUGMENTS = [AUGMENT_ANISOTROPIC, AUGMENT_SCENE, AUGMENT_NONE]

# Shape classification recipe
SCALE_RANGE = (0.67, 1.5)
SHIFT_RANGE = (-0.2, 0.2)

# Scene recipe
SCENE_FLIP_PROBABILITY = 0.5
SCENE_ROTATION_DEGREES = 5.0
SCENE_SCALE_RANGE = (0.9, 1.1)


def anisotropic_scale_shift(cloud: PointCloud, rng: np.random.Generator) -> PointCloud:
    scale = rng.uniform(*SCALE_RANGE, size=3)
    shift = rng.uniform(*SHIFT_RANGE, size=3)
    return cloud.with_coords(cloud.coords * scale + shift)


def scene_jitter(cloud: PointCloud, rng: np.random.Generator) -> PointCloud:
    coords = cloud.coords.copy()
    if rng.uniform() < SCENE_FLIP_PROBABILITY:
        coords[:, 0] = -coords[:, 0]
    coords = rotate_z(coords, np.deg2rad(rng.uniform(-SCENE_ROTATION_DEGREES, SCENE_ROTATION_DEGREES)))
    return cloud.with_coords(coords * rng.uniform(*SCENE_SCALE_RANGE))


def augment(cloud: PointCloud, rng: np.random.Generator, policy: str = AUGMENT_ANISOTROPIC) -> PointCloud:
    if policy == AUGMENT_ANISOTROPIC:
        return anisotropic_scale_shift(cloud, rng)
    if policy == AUGMENT_SCENE:
        return scene_jitter(cloud, rng)
    if policy == AUGMENT_NONE:
        return cloud
    raise LcpConfigError(f"Unknown augmentation policy: {policy}")
