"""
Seeded synthetic datasets: single shapes for classification, tabletop scenes for segmentation.

Everything is a pure function of the dataset spec (one generator stream per dataset).
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from lcpformer.data.dataset import TASK_SHAPES, DatasetSpec, Sample
from lcpformer.errors import LcpConfigError
from lcpformer.geometry.cloud import PointCloud

# Torus tube radius (ring radius is 1)
TORUS_TUBE = 0.35

# Scenes: ground plane side, object footprint radii, clearance between footprints
SCENE_EXTENT = 2.0
OBJECT_RADIUS = (0.2, 0.4)
OBJECT_GAP = 0.05

# Placement attempts per object, then per scene
PLACEMENT_TRIES = 100
SCENE_TRIES = 20

# Ground class of scenes
GROUND = 0


def _unit_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    return _unit_directions(rng, n)


def cube(rng: np.random.Generator, n: int) -> np.ndarray:
    # Six faces of equal area
    points = rng.uniform(-1.0, 1.0, size=(n, 3))
    face = rng.integers(0, 6, size=n)
    points[np.arange(n), face // 2] = np.where(face % 2 == 0, -1.0, 1.0)
    return points


def _disk(rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    r = np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0.0, 2 * np.pi, size=n)
    return r * np.cos(a), r * np.sin(a)


def cylinder(rng: np.random.Generator, n: int) -> np.ndarray:
    # Radius 1, height 2: side area 4 pi, caps 2 pi
    side = rng.uniform(size=n) < 2.0 / 3.0
    a = rng.uniform(0.0, 2 * np.pi, size=n)
    dx, dy = _disk(rng, n)
    x = np.where(side, np.cos(a), dx)
    y = np.where(side, np.sin(a), dy)
    z = np.where(side, rng.uniform(-1.0, 1.0, size=n), np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0))
    return np.stack([x, y, z], axis=1)


def torus(rng: np.random.Generator, n: int) -> np.ndarray:
    # Area element is proportional to (1 + r cos v): rejection sampling
    out = np.empty((0, 3))
    while out.shape[0] < n:
        u = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        v = rng.uniform(0.0, 2 * np.pi, size=2 * n)
        keep = rng.uniform(size=2 * n) * (1 + TORUS_TUBE) < 1 + TORUS_TUBE * np.cos(v)
        ring = 1 + TORUS_TUBE * np.cos(v[keep])
        batch = np.stack([ring * np.cos(u[keep]), ring * np.sin(u[keep]), TORUS_TUBE * np.sin(v[keep])], axis=1)
        out = np.concatenate([out, batch])
    return out[:n]


def cone(rng: np.random.Generator, n: int) -> np.ndarray:
    # Base radius 1 at z=-1, apex at z=1: side area sqrt(5) pi, base pi
    side = rng.uniform(size=n) < np.sqrt(5) / (np.sqrt(5) + 1)
    t = np.sqrt(rng.uniform(size=n))
    a = rng.uniform(0.0, 2 * np.pi, size=n)
    dx, dy = _disk(rng, n)
    x = np.where(side, t * np.cos(a), dx)
    y = np.where(side, t * np.sin(a), dy)
    z = np.where(side, 1.0 - 2.0 * t, -1.0)
    return np.stack([x, y, z], axis=1)


SHAPES: Dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    "sphere": sphere,
    "cube": cube,
    "cylinder": cylinder,
    "torus": torus,
    "cone": cone,
}
SHAPE_NAMES = list(SHAPES)


def rotate_z(points: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def shape_cloud(rng: np.random.Generator, kind: int, n: int, noise: float) -> np.ndarray:
    """
    One shape surface, noised, randomly rotated about z, scaled to unit max radius.
    """
    points = SHAPES[SHAPE_NAMES[kind]](rng, n)
    if noise > 0:
        points = points + rng.normal(0.0, noise, size=points.shape)
    points = rotate_z(points, rng.uniform(0.0, 2 * np.pi))
    return points / np.linalg.norm(points, axis=1).max()


def gen_shapes(spec: DatasetSpec) -> List[Sample]:
    spec.validate()
    if spec.classes > len(SHAPES):
        raise LcpConfigError(f"Only {len(SHAPES)} shape kinds are available (asked for {spec.classes} classes)")
    rng = np.random.default_rng(spec.seed)
    return [Sample(PointCloud(shape_cloud(rng, c, spec.points, spec.noise)), c) for c in range(spec.classes) for _ in range(spec.samples)]


@dataclass
class Placement:
    center: np.ndarray
    radius: float
    kind: int


def place_objects(rng: np.random.Generator, count: int, kinds: int, extent: float = SCENE_EXTENT) -> List[Placement]:
    """
    Drop up to count objects on the ground plane. Footprints (discs of the object radius) stay
    inside the plane and at least OBJECT_GAP apart.

    Objects that cannot be placed within the tries budget are dropped.
    """
    half = extent / 2
    placed: List[Placement] = []
    for _ in range(count):
        radius = rng.uniform(*OBJECT_RADIUS)
        kind = int(rng.integers(1, kinds + 1))
        centers = np.array([p.center for p in placed]).reshape(-1, 2)
        clearance = np.array([p.radius for p in placed]) + radius + OBJECT_GAP
        for _ in range(PLACEMENT_TRIES):
            center = rng.uniform(-half + radius, half - radius, size=2)
            if np.all(np.linalg.norm(centers - center, axis=1) > clearance):
                placed.append(Placement(center, radius, kind))
                break
    return placed


def object_points(rng: np.random.Generator, placement: Placement, n: int) -> np.ndarray:
    """
    Surface points of a placed object, footprint scaled to the object radius, resting on the ground.
    """
    if n == 0:
        return np.zeros((0, 3))
    local = SHAPES[SHAPE_NAMES[placement.kind - 1]](rng, n)
    local = local / np.linalg.norm(local[:, :2], axis=1).max()
    local[:, 2] -= local[:, 2].min()
    return local * placement.radius + np.array([placement.center[0], placement.center[1], 0.0])


def scene_cloud(rng: np.random.Generator, spec: DatasetSpec) -> Tuple[PointCloud, List[Placement]]:
    count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    kinds = min(spec.classes - 1, len(SHAPES))
    for _ in range(SCENE_TRIES):
        placements = place_objects(rng, count, kinds)
        if len(placements) >= spec.min_objects:
            break
    else:
        raise LcpConfigError(f"Cannot place {spec.min_objects} separate objects on the ground plane")
    budget = spec.points // 8
    n_ground = spec.points - budget * len(placements)
    if n_ground < 0:
        raise LcpConfigError(f"{spec.points} points cannot hold {len(placements)} objects")

    half = SCENE_EXTENT / 2
    ground = np.concatenate([rng.uniform(-half, half, size=(n_ground, 2)), np.zeros((n_ground, 1))], axis=1)
    parts, labels = [ground], [np.full(n_ground, GROUND)]
    for p in placements:
        parts.append(object_points(rng, p, budget))
        labels.append(np.full(budget, p.kind))
    points = np.concatenate(parts)
    if spec.noise > 0:
        points = points + rng.normal(0.0, spec.noise, size=points.shape)
    return PointCloud(points, labels=np.concatenate(labels)), placements


def gen_scenes(spec: DatasetSpec) -> List[Sample]:
    spec.validate()
    if spec.classes < 2:
        raise LcpConfigError("Scenes need a ground class and at least one object class")
    rng = np.random.default_rng(spec.seed)
    return [Sample(scene_cloud(rng, spec)[0]) for _ in range(spec.samples)]


def generate(spec: DatasetSpec) -> List[Sample]:
    return gen_shapes(spec) if spec.task == TASK_SHAPES else gen_scenes(spec)
