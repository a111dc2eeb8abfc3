import csv
import math
import re

import numpy as np
import pytest

from lidarplace import formats
from lidarplace.cli import main
from lidarplace.cloud import Frame, PointCloud, load_poses, save_poses
from lidarplace.config import PipelineConfig, load_config, parse_config
from lidarplace.errors import ConfigError, FormatError
from lidarplace.evaluation import DescriptorSet, TestArea


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.train_batch_size == 2048 and cfg.train_lr == 1e-3
        assert cfg.train_milestones == (250, 350) and cfg.train_tau == 0.01
        assert cfg.eval_threshold_m == 25.0 and math.isinf(cfg.filter_r_max)

    def test_round_trip(self):
        cfg = parse_config("coords.mode = spherical\nquantize.steps = 0.1, 2.0, 1.875\n"
                           "eval.areas = 10:20:150; -5:0:30\ndownsample.voxel = none\n"
                           "filter.r_max = 60\n")
        again = parse_config(cfg.serialize())
        assert again == cfg
        assert again.serialize() == cfg.serialize()
        assert cfg.eval_areas == (TestArea(10, 20, 150), TestArea(-5, 0, 30))

    def test_hash_tracks_content(self):
        a = parse_config("model.seed = 1")
        assert a.config_hash() == parse_config("# comment\nmodel.seed = 1  # trailing").config_hash()
        assert a.config_hash() != parse_config("model.seed = 2").config_hash()
        assert re.fullmatch(r"[0-9a-f]{12}", a.config_hash())

    def test_axes_reorder_steps(self):
        cfg = parse_config("coords.mode = spherical\nquantize.steps = 1.875, 0.1, 2.0\n"
                           "quantize.axes = phi, r, theta\n")
        spec = cfg.quantization_spec()
        assert spec.steps == (0.1, 2.0, 1.875)
        assert spec.wrap_theta  # full-circle default sensor
        cfg2 = cfg.replace(sensor_preset="sick-lms151")
        assert not cfg2.quantization_spec().wrap_theta

    @pytest.mark.parametrize("text", [
        "coords.mode = polar",
        "unknown.key = 1",
        "model.seed = abc",
        "no equals sign",
        "filter.r_min = 10\nfilter.r_max = 5",
        "coords.mode = spherical\nquantize.steps = 0.1",
        "sensor.preset = nope",
        "quantize.axes = x, y",
    ])
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_files(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("dataset.poses = missing.csv\n")
        with pytest.raises(ConfigError, match="missing.csv"):
            load_config(p)
        assert load_config(p, check_files=False).dataset_poses == "missing.csv"


class TestFormats:
    def test_archive_round_trip(self, tmp_path, rng):
        clouds = [PointCloud(rng.normal(size=(10, 3)), rng.uniform(size=10), source_id="a"),
                  PointCloud(np.abs(rng.normal(size=(4, 3))), None, Frame.SPHERICAL, source_id="b")]
        formats.write_archive(clouds, tmp_path / "x.lpca")
        back = formats.read_archive(tmp_path / "x.lpca")
        assert [c.source_id for c in back] == ["a", "b"]
        np.testing.assert_array_equal(back[0].points, clouds[0].points)
        np.testing.assert_array_equal(back[0].intensity, clouds[0].intensity)
        assert back[1].frame is Frame.SPHERICAL and back[1].intensity is None

    def test_descriptor_round_trip(self, tmp_path, rng):
        ds = DescriptorSet(["p", "q"], rng.normal(size=(2, 5)), [[1, 2], [3, 4]],
                           [0.5, 1.5], [np.nan, 7.0], role="query")
        formats.write_descriptor_set(ds, tmp_path / "d.lpds")
        back = formats.read_descriptor_set(tmp_path / "d.lpds")
        assert back.source_ids == ("p", "q") and back.role == "query"
        np.testing.assert_array_equal(back.descriptors, ds.descriptors.astype(np.float32))
        np.testing.assert_array_equal(back.positions, ds.positions)
        assert np.isnan(back.z[0]) and back.z[1] == 7.0

    def test_truncated(self, tmp_path, rng):
        ds = DescriptorSet(["p"], rng.normal(size=(1, 5)), [[1, 2]])
        p = tmp_path / "d.lpds"
        formats.write_descriptor_set(ds, p)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(FormatError):
            formats.read_descriptor_set(p)


def run(cfg_dir, *args):
    return main([args[0], "--config", str(cfg_dir / "pipeline.cfg"), *args[1:]])


class TestCli:
    def test_preprocess_describe_deterministic(self, loop_dataset_dir):
        d = loop_dataset_dir
        for name in ("a", "b"):
            assert run(d, "preprocess", "--out", str(d / name)) == 0
            assert run(d, "describe", "--out", str(d / name), "--jobs", "3") == 0
        for f in ("processed.lpca", "manifest.csv", "descriptors.lpds"):
            assert (d / "a" / f).read_bytes() == (d / "b" / f).read_bytes()

    def test_preprocess_outputs(self, loop_dataset_dir):
        d = loop_dataset_dir
        assert run(d, "preprocess", "--out", str(d / "o")) == 0
        clouds = formats.read_archive(d / "o" / "processed.lpca")
        assert len(clouds) == 12
        for c in clouds:
            assert c.frame is Frame.SPHERICAL
            assert c.intensity.min() >= 0 and c.intensity.max() <= 1
        rows = read_csv(d / "o" / "manifest.csv")
        assert [r["source_id"] for r in rows] == [c.source_id for c in clouds]
        assert len({r["config_hash"] for r in rows}) == 1

    def test_voxel_none_keeps_counts(self, loop_dataset_dir):
        d = loop_dataset_dir
        cfg = d / "pipeline.cfg"
        cfg.write_text(cfg.read_text() + "downsample.voxel = none\nfilter.r_min = 0\nfilter.r_max = inf\n")
        assert run(d, "preprocess", "--out", str(d / "o")) == 0
        for r in read_csv(d / "o" / "manifest.csv"):
            assert r["input_points"] == r["output_points"]

    def test_run_scope_intensity(self, loop_dataset_dir):
        d = loop_dataset_dir
        cfg = d / "pipeline.cfg"
        cfg.write_text(cfg.read_text() + "intensity.scope = run\n")
        assert run(d, "preprocess", "--out", str(d / "o")) == 0
        joint = np.concatenate([c.intensity for c in formats.read_archive(d / "o" / "processed.lpca")])
        assert joint.min() == 0 and joint.max() == 1

    def test_eval_and_cluster(self, loop_dataset_dir):
        d = loop_dataset_dir
        out = str(d / "o")
        assert run(d, "preprocess", "--out", out) == 0
        assert run(d, "describe", "--out", out) == 0
        assert run(d, "eval", "--out", out) == 0
        rows = read_csv(d / "o" / "metrics.csv")
        assert [r["metric"] for r in rows] == ["recall@1", "recall@1%"]
        assert float(rows[0]["value"]) == 1.0  # database equals query set
        assert rows[0]["threshold_m"] == "25.0"
        assert run(d, "cluster", "--out", out, "--seed", "3") == 0
        labels = read_csv(d / "o" / "clusters.csv")
        assert len(labels) == 12 and {r["label"] for r in labels} <= {"0", "1"}
        svg = (d / "o" / "clusters.svg").read_text()
        assert svg.count('class="pt"') == 12

    def test_bench(self, loop_dataset_dir):
        d = loop_dataset_dir
        assert run(d, "bench", "--out", str(d / "o"), "--sizes", "300,600") == 0
        rows = read_csv(d / "o" / "bench.csv")
        assert [int(r["points"]) for r in rows] == [300, 600]
        assert all(float(r["median_ms"]) > 0 for r in rows)
        assert (d / "o" / "bench.svg").read_text().count('class="series"') == 2

    def test_missing_pose(self, loop_dataset_dir, capsys):
        d = loop_dataset_dir
        poses = load_poses(d / "poses.csv")
        del poses["lap2_0003"]
        save_poses(poses, d / "poses.csv")
        assert run(d, "preprocess", "--out", str(d / "o")) == 0
        assert run(d, "describe", "--out", str(d / "o")) == 1
        assert "lap2_0003" in capsys.readouterr().err

    def test_empty_cloud_reported(self, loop_dataset_dir, capsys):
        d = loop_dataset_dir
        (d / "scans" / "lap1_0000.bin").write_bytes(b"")
        assert run(d, "preprocess", "--out", str(d / "o")) == 1
        assert "lap1_0000" in capsys.readouterr().err
        assert len(formats.read_archive(d / "o" / "processed.lpca")) == 11

    def test_config_error_exit(self, tmp_path, capsys):
        p = tmp_path / "bad.cfg"
        p.write_text("coords.mode = polar\n")
        assert main(["preprocess", "--config", str(p)]) == 2
        assert "coords.mode" in capsys.readouterr().err
