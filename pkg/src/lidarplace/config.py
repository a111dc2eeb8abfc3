"""Pipeline configuration: a flat ``key = value`` text file with dotted keys.

Example::

    # USyd-style spherical + intensity run
    dataset.format = xyzi
    dataset.clouds = scans/*.bin
    dataset.poses = poses.csv
    sensor.preset = vlp16
    coords.mode = spherical
    intensity.mode = equalize
    quantize.steps = 0.1, 2.0, 1.875
    quantize.axes = r, theta, phi

Unknown keys are rejected. Relative paths resolve against the config file's
directory.
"""

from __future__ import annotations

import dataclasses
import glob
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .cloud import Frame
from .errors import ConfigError, LidarPlaceError
from .evaluation import EvalProtocol, TestArea
from .geometry import SensorFov, sensor_preset
from .sparse.network import LayerGraph, default_graph
from .sparse.tensor import QuantizationSpec
from .sparse.weights import load_weights

CARTESIAN_AXES = ("x", "y", "z")
SPHERICAL_AXES = ("r", "theta", "phi")


def _fmt_float(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


def _bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "yes", "1", "on"):
        return True
    if s in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("none", "") else float(s)


def _floats(s: str) -> tuple:
    return tuple(float(p) for p in s.split(",") if p.strip())


def _ints(s: str) -> tuple:
    return tuple(int(p) for p in s.split(",") if p.strip())


def _words(s: str) -> tuple:
    return tuple(p.strip() for p in s.split(",") if p.strip())


def _areas(s: str) -> tuple:
    out = []
    for chunk in s.split(";"):
        if chunk.strip():
            cx, cy, side = (float(p) for p in chunk.split(":"))
            out.append(TestArea(cx, cy, side))
    return tuple(out)


_PARSE = {float: float, int: int, str: str.strip, bool: _bool, "opt_float": _opt_float,
          "floats": _floats, "ints": _ints, "words": _words, "areas": _areas}


def _show(kind, v) -> str:
    if kind is float:
        return _fmt_float(v)
    if kind is bool:
        return "true" if v else "false"
    if kind == "opt_float":
        return "none" if v is None else _fmt_float(v)
    if kind == "floats":
        return ", ".join(_fmt_float(x) for x in v)
    if kind in ("ints",):
        return ", ".join(str(x) for x in v)
    if kind == "words":
        return ", ".join(v)
    if kind == "areas":
        return "; ".join(f"{_fmt_float(a.cx)}:{_fmt_float(a.cy)}:{_fmt_float(a.side)}" for a in v)
    return str(v)


def _f(default, kind=None):
    return field(default=default, metadata={"kind": kind or type(default)})


@dataclass(frozen=True)
class PipelineConfig:
    """Every pipeline knob. Field ``section_name`` is written as ``section.name``."""

    dataset_format: str = _f("xyzi")
    dataset_clouds: str = _f("")
    dataset_poses: str = _f("")
    sensor_preset: str = _f("vlp16")
    filter_r_min: float = _f(0.0)
    filter_r_max: float = _f(math.inf)
    downsample_voxel: float | None = _f(None, "opt_float")
    coords_mode: str = _f("cartesian")
    intensity_mode: str = _f("none")
    intensity_bins: int = _f(256)
    intensity_scope: str = _f("scan")
    quantize_steps: tuple = _f((0.1,), "floats")
    quantize_axes: tuple = _f((), "words")
    quantize_features: str = _f("ones")
    quantize_wrap_theta: str = _f("auto")
    model_widths: tuple = _f((16, 32, 64), "ints")
    model_descriptor_dim: int = _f(64)
    model_kernel: int = _f(3)
    model_norm: str = _f("affine")
    model_pool: str = _f("gem")
    model_pool_p: float = _f(3.0)
    model_normalize: bool = _f(True)
    model_weights: str = _f("")
    model_seed: int = _f(0)
    eval_threshold_m: float = _f(25.0)
    eval_areas: tuple = _f((), "areas")
    eval_recall_floor: int = _f(1)
    eval_exclude_self: bool = _f(False)
    cluster_k: int = _f(10)
    cluster_seed: int = _f(0)
    bench_sizes: tuple = _f((4096, 25000), "ints")
    bench_repetitions: int = _f(20)
    # training metadata only; nothing in this package trains
    train_batch_size: int = _f(2048)
    train_split_size: int = _f(16)
    train_epochs: int = _f(400)
    train_lr: float = _f(1e-3)
    train_milestones: tuple = _f((250, 350), "ints")
    train_weight_decay: float = _f(1e-4)
    train_tau: float = _f(0.01)
    base_dir: str = field(default=".", compare=False, metadata={"kind": None})

    def __post_init__(self):
        self._validate()

    # -- keys ---------------------------------------------------------------
    @staticmethod
    def key_of(name: str) -> str:
        section, rest = name.split("_", 1)
        return f"{section}.{rest}"

    @classmethod
    def fields_by_key(cls) -> dict:
        return {cls.key_of(f.name): f for f in dataclasses.fields(cls) if f.metadata.get("kind")}

    # -- validation ---------------------------------------------------------
    def _validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.dataset_format in ("xyzi", "csv"), f"dataset.format must be xyzi or csv, got {self.dataset_format!r}")
        need(self.coords_mode in ("cartesian", "spherical"), f"coords.mode must be cartesian or spherical")
        need(self.intensity_mode in ("none", "minmax", "equalize"), "intensity.mode must be none, minmax or equalize")
        need(self.intensity_scope in ("scan", "run"), "intensity.scope must be scan or run")
        need(self.intensity_bins >= 2, "intensity.bins must be >= 2")
        need(self.quantize_features in ("ones", "intensity"), "quantize.features must be ones or intensity")
        need(self.quantize_wrap_theta in ("auto", "true", "false"), "quantize.wrap_theta must be auto, true or false")
        need(0 <= self.filter_r_min < self.filter_r_max, "need 0 <= filter.r_min < filter.r_max")
        need(self.downsample_voxel is None or self.downsample_voxel > 0, "downsample.voxel must be > 0 or none")
        need(all(s > 0 for s in self.quantize_steps), "quantize.steps must be positive")
        if self.coords_mode == "spherical":
            need(len(self.quantize_steps) == 3,
                 "spherical coordinates need a three-value quantize.steps (r, theta, phi)")
        else:
            need(len(self.quantize_steps) in (1, 3), "quantize.steps takes one or three values")
        axes = self.quantize_axes or (SPHERICAL_AXES if self.coords_mode == "spherical" else CARTESIAN_AXES)
        expect = SPHERICAL_AXES if self.coords_mode == "spherical" else CARTESIAN_AXES
        need(sorted(axes) == sorted(expect), f"quantize.axes must be a permutation of {', '.join(expect)}")
        need(self.model_kernel % 2 == 1, "model.kernel must be odd")
        need(len(self.model_widths) >= 1 and all(w > 0 for w in self.model_widths), "model.widths must be positive")
        need(self.model_pool in ("gem", "mean", "max"), "model.pool must be gem, mean or max")
        need(self.model_norm in ("affine", "layer"), "model.norm must be affine or layer")
        need(self.eval_threshold_m > 0, "eval.threshold_m must be > 0")
        need(self.eval_recall_floor >= 1, "eval.recall_floor must be >= 1")
        need(self.cluster_k >= 1, "cluster.k must be >= 1")
        need(self.bench_repetitions >= 1, "bench.repetitions must be >= 1")
        try:
            self.sensor_fov
        except LidarPlaceError as exc:
            raise ConfigError(str(exc)) from None

    def check_files(self):
        """Raise ConfigError if a referenced file or directory does not exist."""
        if self.dataset_poses and not self.resolve(self.dataset_poses).is_file():
            raise ConfigError(f"dataset.poses: no such file {self.resolve(self.dataset_poses)}")
        if self.model_weights and not self.resolve(self.model_weights).is_file():
            raise ConfigError(f"model.weights: no such file {self.resolve(self.model_weights)}")
        if self.dataset_clouds and not self.cloud_paths():
            raise ConfigError(f"dataset.clouds: nothing matches {self.resolve(self.dataset_clouds)}")

    # -- derived objects ----------------------------------------------------
    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else Path(self.base_dir) / path

    def cloud_paths(self) -> list[Path]:
        if not self.dataset_clouds:
            return []
        root = self.resolve(self.dataset_clouds)
        if root.is_dir():
            ext = ".bin" if self.dataset_format == "xyzi" else ".csv"
            return sorted(p for p in root.iterdir() if p.suffix == ext)
        return sorted(Path(p) for p in glob.glob(str(root)))

    @property
    def sensor_fov(self) -> SensorFov:
        return sensor_preset(self.sensor_preset)

    @property
    def frame(self) -> Frame:
        return Frame(self.coords_mode)

    def quantization_spec(self) -> QuantizationSpec:
        steps = self.quantize_steps * 3 if len(self.quantize_steps) == 1 else self.quantize_steps
        if self.quantize_axes:
            canon = SPHERICAL_AXES if self.coords_mode == "spherical" else CARTESIAN_AXES
            by_axis = dict(zip(self.quantize_axes, steps))
            steps = tuple(by_axis[a] for a in canon)
        wrap = False
        if self.coords_mode == "spherical":
            wrap = (self.sensor_fov.full_circle if self.quantize_wrap_theta == "auto"
                    else self.quantize_wrap_theta == "true")
        return QuantizationSpec(steps, self.frame, wrap)

    def graph(self, seed: int | None = None) -> LayerGraph:
        if self.model_weights:
            return load_weights(self.resolve(self.model_weights))
        g = default_graph(1, self.model_widths, self.model_descriptor_dim, self.model_kernel,
                          self.model_pool, self.model_pool_p, self.model_normalize, self.model_norm)
        return g.with_random_weights(self.model_seed if seed is None else seed)

    def protocol(self) -> EvalProtocol:
        return EvalProtocol(self.eval_threshold_m, self.eval_areas, self.eval_recall_floor,
                            self.eval_exclude_self)

    # -- text form ----------------------------------------------------------
    def serialize(self) -> str:
        lines = []
        for key, f in self.fields_by_key().items():
            lines.append(f"{key} = {_show(f.metadata['kind'], getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()[:12]

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)


def parse_config(text: str, base_dir=".") -> PipelineConfig:
    fields = PipelineConfig.fields_by_key()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        f = fields[key]
        try:
            values[f.name] = _PARSE[f.metadata["kind"]](val)
        except (ValueError, LidarPlaceError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return PipelineConfig(**values, base_dir=str(base_dir))


def load_config(path, check_files: bool = True) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text, base_dir=path.parent)
    if check_files:
        cfg.check_files()
    return cfg
