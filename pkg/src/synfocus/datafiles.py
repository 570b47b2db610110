"""On-disk formats: pose records, scene configs, dataset manifests, run reports.

Pose record files are plain text, one record per line, with a header line
that pins the field order and units (meters for translations, degrees for
angles). They are diff-able and hand-editable:

    # image tx_m ty_m tz_m alpha_deg beta_deg gamma_deg id
    images/view_000.pfm 0.0 0.0 30.0 0.0 0.0 0.0 0

Scene/capture/perturbation configs are INI-style key/value files with
[scene], [capture], [perturbation] and [simulation] sections; see
parse_config for the keys. Angles and sigmas are given in degrees.

Run reports serialize to JSON. Wall-clock timings are volatile, so they go
to a separate timings file next to the report; everything else in the
report is a pure function of config plus seed and is byte-identical across
repeated runs.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .geometry import CameraIntrinsics, PoseParams
from .simulate import (
    CaptureSpec,
    GroundTexture,
    OccluderLayer,
    PerturbationSpec,
    SceneSpec,
    Target,
)

POSE_HEADER = "# image tx_m ty_m tz_m alpha_deg beta_deg gamma_deg id"

TIMINGS_SUFFIX = "_timings.json"


@dataclass(frozen=True)
class PoseRecord:
    """One line of a pose record file."""

    image: str
    pose: PoseParams
    image_id: int


def write_pose_records(path, records) -> None:
    lines = [POSE_HEADER]
    for rec in records:
        p = rec.pose
        fields = [rec.image] + [
            repr(v)
            for v in (
                p.t_x, p.t_y, p.t_z,
                math.degrees(p.alpha), math.degrees(p.beta), math.degrees(p.gamma),
            )
        ] + [str(rec.image_id)]
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_pose_records(path, check_images: bool = True) -> list[PoseRecord]:
    """Parse a pose record file; image paths resolve relative to the file."""
    path = Path(path)
    records = []
    ids = set()
    for lineno, line in enumerate(path.read_text(encoding="ascii").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ConfigError(f"{path}:{lineno}: expected 8 fields, got {len(parts)}")
        try:
            t_x, t_y, t_z, a_deg, b_deg, g_deg = (float(v) for v in parts[1:7])
            image_id = int(parts[7])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if image_id in ids:
            raise ConfigError(f"{path}:{lineno}: duplicate image id {image_id}")
        ids.add(image_id)
        if check_images and not (path.parent / parts[0]).exists():
            raise ConfigError(f"{path}:{lineno}: image file {parts[0]!r} does not exist")
        pose = PoseParams(t_x, t_y, t_z,
                          math.radians(a_deg), math.radians(b_deg), math.radians(g_deg))
        records.append(PoseRecord(image=parts[0], pose=pose, image_id=image_id))
    return records


@dataclass
class SimulationConfig:
    """Parsed scene + capture + perturbation settings."""

    scene: SceneSpec
    capture: CaptureSpec
    perturbation: PerturbationSpec
    seed: int
    echo: dict = field(default_factory=dict)


def _get(parser, section, key, convert, default=None, path=""):
    if not parser.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"{path}: missing required key [{section}] {key}")
    raw = parser.get(section, key)
    try:
        return convert(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: invalid value for [{section}] {key}: {raw!r} ({exc})") from exc


def _pair(convert):
    def inner(raw):
        parts = raw.split()
        if len(parts) != 2:
            raise ValueError("expected two whitespace-separated values")
        return (convert(parts[0]), convert(parts[1]))

    return inner


def _targets(raw: str) -> tuple[Target, ...]:
    targets = []
    for chunk in raw.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != 4:
            raise ValueError(f"target {chunk!r} needs 'x y radius intensity'")
        x, y, r, value = (float(v) for v in parts)
        targets.append(Target((x, y), r, value))
    return tuple(targets)


def parse_config(path) -> SimulationConfig:
    """Parse an INI-style simulation config; raises ConfigError with the
    offending key (or parser line diagnostics) on any problem."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as f:
            parser.read_file(f)
    except OSError:
        raise
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    for section in ("scene", "capture"):
        if not parser.has_section(section):
            raise ConfigError(f"{path}: missing [{section}] section")

    p = str(path)
    texture = GroundTexture(
        base_intensity=_get(parser, "scene", "base_intensity", float, 100.0, p),
        variance=_get(parser, "scene", "texture_variance", float, 16.0, p),
        seed=_get(parser, "scene", "texture_seed", int, 11, p),
        pitch=_get(parser, "scene", "texture_pitch", float, 0.4, p),
    )
    density = _get(parser, "scene", "occluder_density", float, 0.0, p)
    if density > 0:
        occluders = OccluderLayer(
            density=density,
            radius=_get(parser, "scene", "occluder_radius", float, 0.5, p),
            height=_get(parser, "scene", "occluder_height", float, 15.0, p),
            mean_intensity=_get(parser, "scene", "occluder_mean", float, 90.0, p),
            intensity_variance=_get(parser, "scene", "occluder_variance", float, 1.0, p),
        )
    elif density < 0:
        raise ConfigError(f"{p}: invalid value for [scene] occluder_density: must be >= 0")
    else:
        occluders = None
    try:
        scene = SceneSpec(
            ground_extent=_get(parser, "scene", "ground_extent", _pair(float), (70.0, 70.0), p),
            ground_texture=texture,
            targets=_get(parser, "scene", "targets", _targets, (), p),
            occluders=occluders,
        )
        image_size = _get(parser, "capture", "image_size", _pair(int), (256, 256), p)
        focal = _get(parser, "capture", "focal_length", float, 300.0, p)
        if parser.has_option("capture", "principal_point"):
            pp = _get(parser, "capture", "principal_point", _pair(float), path=p)
            intrinsics = CameraIntrinsics(focal, pp, image_size)
        else:
            intrinsics = CameraIntrinsics.centered(focal, image_size)
        look_at = None
        if parser.has_option("capture", "look_at"):
            raw = parser.get("capture", "look_at").split()
            if len(raw) != 3:
                raise ConfigError(f"{p}: invalid value for [capture] look_at: expected 'x y z'")
            look_at = tuple(float(v) for v in raw)
        capture = CaptureSpec(
            grid_rows=_get(parser, "capture", "grid_rows", int, 5, p),
            grid_cols=_get(parser, "capture", "grid_cols", int, 6, p),
            aperture=_get(parser, "capture", "aperture", _pair(float), (30.0, 30.0), p),
            altitude=_get(parser, "capture", "altitude", float, 30.0, p),
            intrinsics=intrinsics,
            pixel_noise_sigma=_get(parser, "capture", "pixel_noise_sigma", float, 0.0, p),
            look_at=look_at,
        )
        for optional in ("perturbation", "simulation"):
            if not parser.has_section(optional):
                parser.add_section(optional)
        perturbation = PerturbationSpec(
            sigma_t_x=_get(parser, "perturbation", "sigma_tx", float, 0.0, p),
            sigma_t_y=_get(parser, "perturbation", "sigma_ty", float, 0.0, p),
            sigma_t_z=_get(parser, "perturbation", "sigma_tz", float, 0.0, p),
            sigma_alpha=math.radians(_get(parser, "perturbation", "sigma_alpha_deg", float, 0.0, p)),
            sigma_beta=math.radians(_get(parser, "perturbation", "sigma_beta_deg", float, 0.0, p)),
            sigma_gamma=math.radians(_get(parser, "perturbation", "sigma_gamma_deg", float, 0.0, p)),
            seed=_get(parser, "perturbation", "seed", int, 4, p),
        )
        seed = _get(parser, "simulation", "seed", int, 1, p)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    echo = {section: dict(parser.items(section)) for section in parser.sections()}
    return SimulationConfig(scene=scene, capture=capture, perturbation=perturbation,
                            seed=seed, echo=echo)


def _json_dumps(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(_json_dumps(payload), encoding="utf-8")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@dataclass
class RunReport:
    """Everything one pipeline run reports: config echo, traces and metrics.

    timings (seconds per phase) are kept apart from the deterministic body
    when serialized, so repeated runs produce byte-identical report files.
    """

    config: dict
    objective_trace: list
    n_stop: int
    included: list
    optimized: list
    order: list
    parameter_evaluations: int
    baseline_parameter_evaluations: int
    unrefined_objective: float
    final_objective: float
    metrics: dict | None = None
    failures: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def body(self) -> dict:
        return {
            "config": self.config,
            "objective_trace": self.objective_trace,
            "n_stop": self.n_stop,
            "included": self.included,
            "optimized": self.optimized,
            "order": self.order,
            "parameter_evaluations": self.parameter_evaluations,
            "baseline_parameter_evaluations": self.baseline_parameter_evaluations,
            "unrefined_objective": self.unrefined_objective,
            "final_objective": self.final_objective,
            "metrics": self.metrics,
            "failures": self.failures,
        }


def save_run_report(path, report: RunReport) -> None:
    """Write report.json (deterministic) plus a volatile timings sidecar."""
    path = Path(path)
    path.write_text(_json_dumps(report.body()), encoding="utf-8")
    timings_path = path.with_name(path.stem + TIMINGS_SUFFIX)
    timings_path.write_text(_json_dumps({"timings_s": report.timings}), encoding="utf-8")


def load_run_report(path) -> RunReport:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        body = json.load(f)
    timings = {}
    timings_path = path.with_name(path.stem + TIMINGS_SUFFIX)
    if timings_path.exists():
        with open(timings_path, "r", encoding="utf-8") as f:
            timings = json.load(f).get("timings_s", {})
    body["failures"] = [tuple(item) for item in body.get("failures", [])]
    return RunReport(timings=timings, **body)
