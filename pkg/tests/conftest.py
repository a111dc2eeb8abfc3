import numpy as np
import pytest

from lidarplace.cloud import PointCloud, Pose, save_poses, save_xyzi_binary
from lidarplace.synthetic import two_lap_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cloud(rng, n=500, scale=20.0, intensity=True):
    pts = rng.uniform(-scale, scale, (n, 3))
    inten = rng.uniform(0, 255, n) if intensity else None
    return PointCloud(pts, inten, source_id="rand")


@pytest.fixture
def loop_dataset_dir(tmp_path):
    """Small two-lap dataset on disk: xyzi scans, pose CSV and a config file."""
    clouds, poses = two_lap_dataset(6, seed=3, n_points=1500)
    scans = tmp_path / "scans"
    scans.mkdir()
    for c in clouds:
        save_xyzi_binary(c, scans / f"{c.source_id}.bin")
    save_poses(poses, tmp_path / "poses.csv")
    (tmp_path / "pipeline.cfg").write_text(
        "dataset.format = xyzi\n"
        "dataset.clouds = scans\n"
        "dataset.poses = poses.csv\n"
        "sensor.preset = vlp16\n"
        "filter.r_min = 0.5\n"
        "filter.r_max = 60\n"
        "coords.mode = spherical\n"
        "intensity.mode = equalize\n"
        "quantize.steps = 1.0, 2.0, 1.875\n"
        "quantize.axes = r, theta, phi\n"
        "quantize.features = intensity\n"
        "model.widths = 8, 16\n"
        "model.descriptor_dim = 16\n"
        "eval.threshold_m = 25\n"
        "cluster.k = 2\n"
        "bench.repetitions = 3\n",
        encoding="utf-8")
    return tmp_path
