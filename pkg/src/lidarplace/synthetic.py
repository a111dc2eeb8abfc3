"""Synthetic scenes for benchmarks and end-to-end checks.

The loop world is a ring of box-shaped objects around a circular route on a
ground plane. Object height and footprint drift smoothly with the bearing
from the ring centre, so nearby places share structure while far-apart
places do not, the way real neighbourhoods differ.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, Pose


@dataclass(frozen=True)
class World:
    points: np.ndarray
    intensity: np.ndarray


def loop_world(seed: int = 0, radius: float = 50.0, n_objects: int = 300,
               band: float = 35.0, ground_points: int = 5000) -> World:
    rng = np.random.default_rng(seed)
    bearing = rng.uniform(0, 2 * np.pi, n_objects)
    dist = radius + rng.uniform(-band, band, n_objects)
    centers = np.column_stack([dist * np.cos(bearing), dist * np.sin(bearing)])
    height = (4.0 + 2.5 * np.cos(bearing)) * rng.uniform(0.85, 1.15, n_objects)
    width = (3.0 + 1.5 * np.sin(bearing)) * rng.uniform(0.85, 1.15, n_objects)
    depth = width * rng.uniform(0.5, 1.5, n_objects)
    refl = rng.uniform(0, 255, n_objects)
    pts, inten = [], []
    for c, h, w, d, r in zip(centers, height, width, depth, refl):
        m = int(20 * w * d + 30 * h + 50)
        p = rng.uniform(-0.5, 0.5, (m, 3)) * (w, d, h)
        p[:, :2] += c
        p[:, 2] += h / 2 - 1.5
        pts.append(p)
        inten.append(np.clip(r + rng.normal(0, 5, m), 0, 255))
    extent = radius + band + 10
    g = rng.uniform(-extent, extent, (ground_points, 2))
    pts.append(np.column_stack([g, np.full(len(g), -1.5)]))
    inten.append(np.clip(rng.normal(30, 5, len(g)), 0, 255))
    return World(np.vstack(pts), np.concatenate(inten))


def scan_at(world: World, xy, rng: np.random.Generator, max_range: float = 30.0,
            n_points: int = 8000, noise: float = 0.03, source_id: str = "") -> PointCloud:
    """Sensor-centred cloud of world points within ``max_range`` of ``xy`` (world-aligned axes)."""
    d = world.points[:, :2] - np.asarray(xy)
    near = np.flatnonzero((d ** 2).sum(axis=1) <= max_range ** 2)
    pick = rng.choice(near, size=min(len(near), n_points), replace=False)
    p = world.points[pick].copy()
    p[:, :2] -= xy
    p += rng.normal(0, noise, p.shape)
    return PointCloud(p, world.intensity[pick], source_id=source_id)


def loop_poses(n: int, radius: float = 50.0, jitter: float = 0.0, rng=None, prefix: str = "",
               t0: float = 0.0) -> list[Pose]:
    ang = np.linspace(0, 2 * np.pi, n, endpoint=False)
    xy = np.column_stack([radius * np.cos(ang), radius * np.sin(ang)])
    if jitter:
        xy = xy + rng.normal(0, jitter, xy.shape)
    return [Pose(f"{prefix}{i:04d}", float(x), float(y), None, t0 + float(i))
            for i, (x, y) in enumerate(xy)]


def two_lap_dataset(n_per_lap: int = 40, seed: int = 0, radius: float = 50.0,
                    jitter: float = 0.5, **scan_kw):
    """Two traversals of the same loop: returns ``(clouds, poses)`` for lap 1 then lap 2."""
    world = loop_world(seed, radius)
    rng = np.random.default_rng([seed, 1])
    clouds, poses = [], []
    for lap in (1, 2):
        lap_poses = loop_poses(n_per_lap, radius, jitter if lap == 2 else 0.0, rng,
                               prefix=f"lap{lap}_", t0=1000.0 * lap)
        for p in lap_poses:
            clouds.append(scan_at(world, p.xy, rng, source_id=p.source_id, **scan_kw))
        poses.extend(lap_poses)
    return clouds, poses


def random_scan(n_points: int, seed: int = 0, max_range: float = 60.0) -> PointCloud:
    """Uniform cloud in a ball with random intensities; used for timing."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n_points, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = max_range * rng.uniform(0.05, 1, n_points) ** (1 / 3)
    return PointCloud(v * r[:, None], rng.uniform(0, 255, n_points), source_id=f"random_{n_points}")
