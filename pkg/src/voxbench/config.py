"""Run configuration: key-value config files, parameter validation, CSV output.

Config files are plain ``key = value`` lines with dotted section names and
``#`` comments, diffable and overridable one key at a time. Backend
parameters mirror the benchmark's parameter table by name; parameters that
do not apply to the chosen backend are rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .evaluate import MetricsReport


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, or wrong backend."""


def parse_kv_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    return parse_kv_text(Path(path).read_text(encoding="utf-8"))


def apply_overrides(raw: dict[str, str], sets: list[str]) -> dict[str, str]:
    merged = dict(raw)
    for item in sets:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key=value")
        key, value = item.split("=", 1)
        merged[key.strip().lower()] = value.strip()
    return merged


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _coerce(kind, text: str):
    if kind is bool:
        return _parse_bool(text)
    if kind is int:
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"expected an integer, got {text!r}") from exc
    if kind is float:
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"expected a number, got {text!r}") from exc
    return text


@dataclass(frozen=True)
class ParamSpec:
    kind: type
    default: object
    check: object = None  # callable(value) -> error message | None

    def parse(self, name: str, text: str):
        value = _coerce(self.kind, text)
        self.validate(name, value)
        return value

    def validate(self, name: str, value) -> None:
        if self.check is not None:
            message = self.check(value)
            if message:
                raise ConfigError(f"{name}: {message}")


def _in_range(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        if lo_open and not v > lo:
            return f"must be > {lo}"
        if not lo_open and not v >= lo:
            return f"must be >= {lo}"
        if hi_open and not v < hi:
            return f"must be < {hi}"
        if not hi_open and not v <= hi:
            return f"must be <= {hi}"
        return None

    return check


_VOXEL_LENGTH = ParamSpec(float, 0.1, _in_range(0.01, 1.0))

BACKEND_PARAMS: dict[str, dict[str, ParamSpec]] = {
    "octree": {
        "minimum_voxel_length": _VOXEL_LENGTH,
        "hit_probability": ParamSpec(float, 1.0, _in_range(0.0, 1.0, lo_open=True)),
        "miss_probability": ParamSpec(float, 0.4, _in_range(0.0, 1.0, lo_open=True, hi_open=True)),
        "occupancy_threshold": ParamSpec(float, 0.5, _in_range(0.0, 1.0, lo_open=True, hi_open=True)),
        "clamp_min": ParamSpec(float, -2.0),
        "clamp_max": ParamSpec(float, 3.5),
    },
    "skiplist": {
        "minimum_voxel_length": _VOXEL_LENGTH,
        "minimum_voxel_weight": ParamSpec(int, 1, lambda v: None if v >= 1 else "must be >= 1"),
        "decrement_mode": ParamSpec(
            str, "none", lambda v: None if v in ("none", "raycast") else "must be 'none' or 'raycast'"
        ),
    },
    "tsdf": {
        "minimum_voxel_length": _VOXEL_LENGTH,
        "truncation_distance": ParamSpec(float, 0.1, _in_range(0.001, 2.0)),
        "constant_weight": ParamSpec(bool, False),
        "max_weight": ParamSpec(float, 100.0, _in_range(1.0, 1.0e9)),
        "occupied_distance_factor": ParamSpec(float, 0.5, _in_range(0.01, 10.0)),
        "space_carving": ParamSpec(bool, True),
    },
}

_ALL_PARAM_NAMES = sorted({name for table in BACKEND_PARAMS.values() for name in table})


@dataclass
class RunConfig:
    episode: Path
    backend: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    integration_latency_s: float = 0.1
    out: Path | None = None
    per_frame_out: Path | None = None

    @property
    def latency_ns(self) -> int:
        return int(round(self.integration_latency_s * 1e9))

    def with_param(self, name: str, value) -> "RunConfig":
        params = dict(self.params)
        params[name] = value
        return RunConfig(
            episode=self.episode,
            backend=self.backend,
            params=params,
            seed=self.seed,
            integration_latency_s=self.integration_latency_s,
            out=self.out,
            per_frame_out=self.per_frame_out,
        )


def resolve_backend_params(backend: str, given: dict[str, str | object]) -> dict:
    """Defaults for the backend overlaid with validated user values;
    parameters belonging to other backends are rejected."""
    if backend not in BACKEND_PARAMS:
        raise ConfigError(
            f"unknown backend {backend!r}; expected one of {sorted(BACKEND_PARAMS)}"
        )
    table = BACKEND_PARAMS[backend]
    params = {name: spec.default for name, spec in table.items()}
    for name, value in given.items():
        if name not in table:
            if name in _ALL_PARAM_NAMES:
                raise ConfigError(f"parameter {name!r} does not apply to backend {backend!r}")
            raise ConfigError(f"unknown backend parameter {name!r}")
        spec = table[name]
        if isinstance(value, str):
            params[name] = spec.parse(name, value)
        else:
            spec.validate(name, value)
            params[name] = value
    if backend == "octree" and params["clamp_max"] <= params["clamp_min"]:
        raise ConfigError("clamp_max must exceed clamp_min")
    return params


def build_run_config(raw: dict[str, str], *, episode=None, backend=None, seed=None,
                     out=None, per_frame_out=None) -> RunConfig:
    """RunConfig from parsed config text plus command-line overrides."""
    episode_path = episode or raw.get("episode.path")
    if not episode_path:
        raise ConfigError("an episode path is required (--episode or episode.path)")
    backend_name = backend or raw.get("backend.name")
    if not backend_name:
        raise ConfigError("a backend name is required (--backend or backend.name)")
    backend_name = backend_name.strip().lower()

    given = {}
    for key, value in raw.items():
        if key.startswith("backend.") and key != "backend.name":
            given[key.split(".", 1)[1]] = value
    params = resolve_backend_params(backend_name, given)

    seed_value = seed if seed is not None else int(raw.get("run.seed", "0"))
    latency = float(raw.get("eval.integration_latency_s", "0.1"))
    if latency < 0:
        raise ConfigError("eval.integration_latency_s must be >= 0")

    known_prefixes = ("backend.", "episode.", "run.", "eval.", "sweep.")
    for key in raw:
        if not key.startswith(known_prefixes):
            raise ConfigError(f"unknown configuration key {key!r}")

    return RunConfig(
        episode=Path(episode_path),
        backend=backend_name,
        params=params,
        seed=seed_value,
        integration_latency_s=latency,
        out=Path(out) if out else None,
        per_frame_out=Path(per_frame_out) if per_frame_out else None,
    )


@dataclass
class SweepConfig:
    base: RunConfig
    parameter: str
    values: list

    def run_configs(self) -> list[RunConfig]:
        return [self.base.with_param(self.parameter, v) for v in self.values]


def build_sweep_config(base: RunConfig, raw: dict[str, str], *, parameter=None, values=None) -> SweepConfig:
    name = (parameter or raw.get("sweep.parameter", "")).strip().lower()
    if not name:
        raise ConfigError("a swept parameter is required (--param or sweep.parameter)")
    table = BACKEND_PARAMS[base.backend]
    if name not in table:
        raise ConfigError(f"parameter {name!r} does not apply to backend {base.backend!r}")
    text = values if values is not None else raw.get("sweep.values", "")
    if not text:
        raise ConfigError("sweep values are required (--values or sweep.values)")
    spec = table[name]
    parsed = [spec.parse(name, part.strip()) for part in str(text).split(",") if part.strip()]
    if not parsed:
        raise ConfigError("sweep values are empty")
    if len(set(map(repr, parsed))) != len(parsed):
        raise ConfigError("sweep values must be distinct")
    return SweepConfig(base=base, parameter=name, values=parsed)


# ---------------------------------------------------------------------------
# Recording scenarios
# ---------------------------------------------------------------------------

_SCENARIO_KEYS: dict[str, ParamSpec] = {
    "scenario.duration_s": ParamSpec(float, 96.0, _in_range(0.0, 3600.0)),
    "scenario.seed": ParamSpec(int, 0),
    "scenario.noise_sigma": ParamSpec(float, 0.005, _in_range(0.0, 1.0)),
    "grid.resolution": ParamSpec(float, 0.1, _in_range(0.01, 1.0)),
    "sensors.max_range": ParamSpec(float, 10.0, _in_range(0.1, 1000.0)),
    "sensors.lidar_rings": ParamSpec(int, 16, _in_range(1, 1024)),
    "sensors.lidar_azimuth_steps": ParamSpec(int, 180, _in_range(1, 100_000)),
    "sensors.lidar_vfov_deg": ParamSpec(float, 40.0, _in_range(1.0, 360.0)),
    "sensors.lidar_rate_hz": ParamSpec(float, 10.0, _in_range(0.01, 1000.0)),
    "sensors.camera_width": ParamSpec(int, 80, _in_range(1, 4096)),
    "sensors.camera_height": ParamSpec(int, 60, _in_range(1, 4096)),
    "sensors.camera_hfov_deg": ParamSpec(float, 60.0, _in_range(1.0, 179.0, hi_open=True)),
    "sensors.camera_vfov_deg": ParamSpec(float, 45.0, _in_range(1.0, 179.0, hi_open=True)),
    "sensors.camera_rate_hz": ParamSpec(float, 30.0, _in_range(0.01, 1000.0)),
    "sensors.camera_pool_factor": ParamSpec(int, 2, _in_range(1, 64)),
}

_SENSOR_NAMES = ("lidar_a", "lidar_b", "lidar_c", "camera")


def build_episode_config(raw: dict[str, str], *, seed=None):
    """EpisodeConfig for ``record`` from config text plus a seed override.

    Sensor poses accept per-sensor keys like ``sensors.lidar_a.position``
    (comma-separated x,y,z), ``.yaw_deg`` and ``.pitch_deg``.
    """
    from dataclasses import replace

    from .simulate import EpisodeConfig, default_sensors

    values = {}
    pose_overrides: dict[str, dict[str, object]] = {}
    for key, text in raw.items():
        if key in _SCENARIO_KEYS:
            values[key] = _SCENARIO_KEYS[key].parse(key, text)
            continue
        parts = key.split(".")
        if len(parts) == 3 and parts[0] == "sensors" and parts[1] in _SENSOR_NAMES:
            name, attr = parts[1], parts[2]
            override = pose_overrides.setdefault(name, {})
            if attr == "position":
                coords = [float(v) for v in text.split(",")]
                if len(coords) != 3:
                    raise ConfigError(f"{key}: expected 'x,y,z', got {text!r}")
                override["position"] = tuple(coords)
            elif attr in ("yaw_deg", "pitch_deg"):
                override[attr] = _coerce(float, text)
            else:
                raise ConfigError(f"unknown sensor attribute {key!r}")
            continue
        raise ConfigError(f"unknown scenario key {key!r}")

    def get(key):
        return values.get(key, _SCENARIO_KEYS[key].default)

    sensors = []
    for sensor in default_sensors(
        noise_sigma=get("scenario.noise_sigma"), max_range=get("sensors.max_range")
    ):
        if sensor.kind == "lidar":
            sensor = replace(
                sensor,
                rings=get("sensors.lidar_rings"),
                azimuth_steps=get("sensors.lidar_azimuth_steps"),
                vfov_deg=get("sensors.lidar_vfov_deg"),
                rate_hz=get("sensors.lidar_rate_hz"),
            )
        else:
            sensor = replace(
                sensor,
                width=get("sensors.camera_width"),
                height=get("sensors.camera_height"),
                hfov_deg=get("sensors.camera_hfov_deg"),
                vfov_cam_deg=get("sensors.camera_vfov_deg"),
                rate_hz=get("sensors.camera_rate_hz"),
                pool_factor=get("sensors.camera_pool_factor"),
            )
        sensor = replace(sensor, **pose_overrides.get(sensor.name, {}))
        sensors.append(sensor)

    return EpisodeConfig(
        duration_s=get("scenario.duration_s"),
        seed=seed if seed is not None else get("scenario.seed"),
        noise_sigma=get("scenario.noise_sigma"),
        grid_resolution=get("grid.resolution"),
        sensors=tuple(sensors),
    )


# ---------------------------------------------------------------------------
# Metrics CSV
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "backend",
    "params",
    "frames_evaluated",
    "frames_skipped",
    "sum_tp",
    "sum_fp",
    "sum_fn",
    "precision",
    "recall",
    "f1",
    "f2",
    "f3",
    "mean_precision",
    "mean_recall",
)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def params_field(config: RunConfig) -> str:
    items = dict(config.params)
    items["integration_latency_s"] = config.integration_latency_s
    items["seed"] = config.seed
    return ";".join(f"{k}={format_value(items[k])}" for k in sorted(items))


def metrics_row(config: RunConfig, report: MetricsReport) -> list[str]:
    return [
        config.backend,
        params_field(config),
        str(report.frames_evaluated),
        str(report.frames_skipped),
        str(report.sum_tp),
        str(report.sum_fp),
        str(report.sum_fn),
        f"{report.precision:.6f}",
        f"{report.recall:.6f}",
        f"{report.f_score(1):.6f}",
        f"{report.f_score(2):.6f}",
        f"{report.f_score(3):.6f}",
        f"{report.mean_precision:.6f}",
        f"{report.mean_recall:.6f}",
    ]


def write_metrics_csv(path: str | Path, rows: list[list[str]]) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_csv_cell(cell) for cell in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _csv_cell(cell: str) -> str:
    if any(ch in cell for ch in (",", '"', "\n")):
        return '"' + cell.replace('"', '""') + '"'
    return cell


PER_FRAME_COLUMNS = ("t_ns", "tp", "fp", "fn", "precision", "recall", "f1", "f2", "f3")


def write_per_frame_csv(path: str | Path, report: MetricsReport) -> None:
    lines = [",".join(PER_FRAME_COLUMNS)]
    for f in report.frames:
        lines.append(
            f"{f.t_ns},{f.tp},{f.fp},{f.fn},{f.precision:.6f},{f.recall:.6f},"
            f"{f.f1:.6f},{f.f2:.6f},{f.f3:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
