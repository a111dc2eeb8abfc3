"""End-to-end commands behind the CLI: preprocess, describe, eval, cluster, bench."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats, intensity, svg
from .cloud import PointCloud, load_csv_cloud, load_poses, load_xyzi_binary, range_filter, voxel_downsample
from .config import PipelineConfig
from .errors import ConfigError, DataError, LidarPlaceError
from .evaluation import DescriptorSet, area_mask, kmeans, recall_at
from .geometry import to_spherical
from .sparse.network import forward
from .synthetic import random_scan

log = logging.getLogger(__name__)

ARCHIVE_NAME = "processed.lpca"
MANIFEST_NAME = "manifest.csv"
DESCRIPTORS_NAME = "descriptors.lpds"


def _map(fn, items, jobs: int):
    """Ordered map over a bounded thread pool; results come back in input order."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _catching(fn):
    def run(x):
        try:
            return fn(x), None
        except LidarPlaceError as exc:
            return None, exc
    return run


def load_cloud(path, cfg: PipelineConfig) -> PointCloud:
    return load_xyzi_binary(path) if cfg.dataset_format == "xyzi" else load_csv_cloud(path)


def preprocess_geometry(cloud: PointCloud, cfg: PipelineConfig) -> PointCloud:
    if cfg.filter_r_min > 0 or np.isfinite(cfg.filter_r_max):
        cloud = range_filter(cloud, cfg.filter_r_min, cfg.filter_r_max)
    if cfg.downsample_voxel is not None:
        cloud = voxel_downsample(cloud, cfg.downsample_voxel)
    if cfg.coords_mode == "spherical":
        cloud = to_spherical(cloud.require_nonempty(), cfg.sensor_fov)
    return cloud.require_nonempty()


def preprocess_cloud(cloud: PointCloud, cfg: PipelineConfig) -> PointCloud:
    """Filter, downsample, transform and normalise one cloud (per-scan intensity)."""
    cloud = preprocess_geometry(cloud, cfg)
    if cloud.has_intensity and cfg.intensity_mode != "none":
        cloud = cloud.replace(intensity=intensity.normalize(cloud.intensity, cfg.intensity_mode,
                                                            cfg.intensity_bins))
    return cloud


def _normalize_run(clouds: list[PointCloud], cfg: PipelineConfig) -> list[PointCloud]:
    with_i = [c for c in clouds if c.has_intensity]
    if not with_i or cfg.intensity_mode == "none":
        return clouds
    joint = intensity.normalize(np.concatenate([c.intensity for c in with_i]),
                                cfg.intensity_mode, cfg.intensity_bins)
    out, pos = [], 0
    for c in clouds:
        if c.has_intensity:
            out.append(c.replace(intensity=joint[pos:pos + len(c)]))
            pos += len(c)
        else:
            out.append(c)
    return out


@dataclass
class CommandResult:
    outputs: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def cmd_preprocess(cfg: PipelineConfig, out_dir, jobs: int = 1) -> CommandResult:
    paths = cfg.cloud_paths()
    if not paths:
        raise ConfigError("dataset.clouds matches no input files")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_scan = cfg.intensity_scope == "scan"

    def work(path):
        raw = load_cloud(path, cfg)
        done = preprocess_cloud(raw, cfg) if per_scan else preprocess_geometry(raw, cfg)
        return raw, done

    result = CommandResult()
    processed, counts = [], []
    for path, (res, err) in zip(paths, _map(_catching(work), paths, jobs)):
        if err is not None:
            result.errors.append((path.stem, str(err)))
            log.error("%s: %s", path, err)
            continue
        raw, done = res
        processed.append(done)
        counts.append(len(raw))
    if not per_scan:
        processed = _normalize_run(processed, cfg)
    archive = out_dir / ARCHIVE_NAME
    formats.write_archive(processed, archive)
    manifest = out_dir / MANIFEST_NAME
    h = cfg.config_hash()
    with manifest.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "input_points", "output_points", "frame", "has_intensity",
                    "config_hash"])
        for c, n_in in zip(processed, counts):
            w.writerow([c.source_id, n_in, len(c), c.frame.value, int(c.has_intensity), h])
    result.outputs = {"archive": archive, "manifest": manifest}
    return result


def cmd_describe(cfg: PipelineConfig, archive, out_dir, seed: int | None = None,
                 jobs: int = 1, role: str = "database") -> CommandResult:
    if not cfg.dataset_poses:
        raise ConfigError("dataset.poses is required to build a descriptor set")
    poses = load_poses(cfg.resolve(cfg.dataset_poses))
    clouds = formats.read_archive(archive)
    missing = [c.source_id for c in clouds if c.source_id not in poses]
    if missing:
        raise DataError(f"no pose for source_id {missing[0]!r}")
    graph = cfg.graph(seed)
    spec = cfg.quantization_spec()

    def work(cloud):
        try:
            return forward(cloud, graph, spec, cfg.quantize_features).values
        except LidarPlaceError as exc:
            raise type(exc)(f"{cloud.source_id}: {exc}") from exc

    descs = _map(work, clouds, jobs)
    ps = [poses[c.source_id] for c in clouds]
    ds = DescriptorSet([c.source_id for c in clouds],
                       np.array(descs).reshape(len(clouds), graph.out_dim),
                       np.array([p.xy for p in ps]).reshape(len(ps), 2),
                       np.array([p.timestamp for p in ps]),
                       np.array([np.nan if p.z is None else p.z for p in ps]),
                       role)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / DESCRIPTORS_NAME
    formats.write_descriptor_set(ds, path)
    return CommandResult({"descriptors": path})


METRIC_FIELDS = ["config_hash", "query_file", "database_file", "threshold_m", "test_areas",
                 "recall_floor", "metric", "n", "value", "evaluated", "successes",
                 "queries", "database_size"]


def evaluate_sets(queries: DescriptorSet, database: DescriptorSet, cfg: PipelineConfig):
    protocol = cfg.protocol()
    if protocol.test_areas:
        queries = queries.subset(area_mask(queries.positions, protocol.test_areas))
        database = database.subset(area_mask(database.positions, protocol.test_areas))
    rows = []
    for label, n in (("recall@1", 1), ("recall@1%", "1%")):
        r = recall_at(queries, database, protocol, n)
        rows.append({"metric": label, "n": r.n,
                     "value": "" if r.value is None else f"{r.value:.6f}",
                     "evaluated": r.evaluated, "successes": r.successes,
                     "queries": len(queries), "database_size": len(database)})
    return rows


def cmd_eval(cfg: PipelineConfig, query_path, database_path, out_dir) -> CommandResult:
    q = formats.read_descriptor_set(query_path)
    db = formats.read_descriptor_set(database_path)
    rows = evaluate_sets(q, db, cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "metrics.csv"
    common = {"config_hash": cfg.config_hash(), "query_file": str(query_path),
              "database_file": str(database_path), "threshold_m": cfg.eval_threshold_m,
              "test_areas": len(cfg.eval_areas), "recall_floor": cfg.eval_recall_floor}
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, METRIC_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({**common, **row})
    return CommandResult({"metrics": path, "rows": rows})


def cmd_cluster(cfg: PipelineConfig, descriptors_path, out_dir, seed: int | None = None) -> CommandResult:
    ds = formats.read_descriptor_set(descriptors_path)
    res = kmeans(ds.descriptors, cfg.cluster_k, cfg.cluster_seed if seed is None else seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    labels_path = out_dir / "clusters.csv"
    with labels_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "x", "y", "label", "config_hash"])
        for sid, (x, y), lab in zip(ds.source_ids, ds.positions, res.labels):
            w.writerow([sid, repr(float(x)), repr(float(y)), int(lab), h])
    svg_path = out_dir / "clusters.svg"
    svg_path.write_text(svg.scatter(ds.positions[:, 0], ds.positions[:, 1], res.labels,
                                    title=f"k-means clusters (k={cfg.cluster_k})",
                                    xlabel="x [m]", ylabel="y [m]"), encoding="utf-8")
    return CommandResult({"labels": labels_path, "plot": svg_path, "result": res})


def time_pipeline(cloud: PointCloud, cfg: PipelineConfig, graph, repetitions: int) -> np.ndarray:
    spec = cfg.quantization_spec()
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        forward(preprocess_cloud(cloud, cfg), graph, spec, cfg.quantize_features)
        times.append((time.perf_counter() - t0) * 1e3)
    return np.array(times)


def cmd_bench(cfg: PipelineConfig, out_dir, sizes=None, seed: int | None = None) -> CommandResult:
    sizes = list(sizes or cfg.bench_sizes)
    seed = cfg.model_seed if seed is None else seed
    graph = cfg.graph(seed)
    rows = []
    for n in sizes:
        ms = time_pipeline(random_scan(n, seed), cfg, graph, cfg.bench_repetitions)
        rows.append({"points": n, "repetitions": len(ms),
                     "median_ms": float(np.median(ms)), "p95_ms": float(np.percentile(ms, 95))})
    for a, b in zip(rows, rows[1:]):
        if b["points"] > a["points"] and b["median_ms"] < a["median_ms"]:
            log.warning("median time fell from %d to %d points", a["points"], b["points"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    path = out_dir / "bench.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["points", "repetitions", "median_ms", "p95_ms", "config_hash"])
        for r in rows:
            w.writerow([r["points"], r["repetitions"], f"{r['median_ms']:.3f}",
                        f"{r['p95_ms']:.3f}", h])
    plot = out_dir / "bench.svg"
    plot.write_text(svg.line_plot(
        {"median": ([r["points"] for r in rows], [r["median_ms"] for r in rows]),
         "p95": ([r["points"] for r in rows], [r["p95_ms"] for r in rows])},
        title="Inference time per cloud", xlabel="points", ylabel="ms"), encoding="utf-8")
    return CommandResult({"timings": path, "plot": plot, "rows": rows})
