"""Scenario files: indenter shape and motion timeline, material and
illumination choices, stream settings, duration and seed.

The format is strict INI; unknown or duplicate keys are rejected with
file/line diagnostics, and the timeline must be strictly increasing.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import configio
from .contactaudio import ModalModel, default_modal_model
from .core import Pose6D
from .elastomer import (
    SILICONE_PARAMS,
    VHB_PARAMS,
    ElastomerParams,
    Indenter,
    edge_indenter,
    flat_indenter,
    sphere_indenter,
    textured_indenter,
)
from .errors import ConfigurationError
from .photorender import (
    AlbedoModel,
    IlluminationConfig,
    default_illumination,
    lambertian_albedo,
    read_ppm,
    semi_specular_albedo,
)

__all__ = ["Keyframe", "IndenterSpec", "Scenario", "parse_scenario", "serialize_scenario"]


@dataclass(frozen=True)
class Keyframe:
    t: float  # s
    x: float = 50.0
    y: float = 12.5
    z: float = 0.0  # mm lift-off
    rx_deg: float = 0.0
    ry_deg: float = 0.0
    rz_deg: float = 0.0
    force: float = 0.0  # N

    def pose(self) -> Pose6D:
        return Pose6D(
            translation=[self.x, self.y, self.z],
            rotation=np.deg2rad([self.rx_deg, self.ry_deg, self.rz_deg]),
        )


@dataclass(frozen=True)
class IndenterSpec:
    kind: str = "sphere"
    radius: float = 5.0
    size: tuple = (20.0, 10.0)
    length: float = 20.0
    wedge_angle_deg: float = 30.0
    texture_file: str = ""
    depth_scale: float = 1.0

    def build(self, base_dir: Path) -> Indenter:
        if self.kind == "sphere":
            return sphere_indenter(self.radius)
        if self.kind == "flat":
            return flat_indenter(self.size)
        if self.kind == "edge":
            return edge_indenter(self.length, self.wedge_angle_deg)
        if self.kind == "textured":
            img = read_ppm(base_dir / self.texture_file)
            gray = img.values.mean(axis=2)
            return textured_indenter(gray, resolution=0.25, depth_scale=self.depth_scale)
        raise ConfigurationError(f"unknown indenter kind {self.kind!r}")


@dataclass
class Scenario:
    duration_s: float = 2.0
    seed: int = 0
    fps: float = 30.0
    physics_dt: float = 0.002
    optics_config: str = "default"
    elastomer: ElastomerParams = field(default_factory=lambda: VHB_PARAMS)
    illumination: IlluminationConfig = field(default_factory=default_illumination)
    albedo: AlbedoModel = field(default_factory=semi_specular_albedo)
    audio_model: ModalModel = field(default_factory=default_modal_model)
    indenter_spec: IndenterSpec = field(default_factory=IndenterSpec)
    timeline: tuple = ()
    video_format: str = "raw"  # raw | rle
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ConfigurationError("duration must be positive")
        ts = [k.t for k in self.timeline]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigurationError("timeline timestamps must be strictly increasing")
        if self.video_format not in ("raw", "rle"):
            raise ConfigurationError("video_format must be raw or rle")

    def interpolate(self, t: float) -> Keyframe:
        """Linear interpolation between keyframes; clamped at the ends."""
        frames = self.timeline
        if not frames:
            return Keyframe(t=t, force=0.0)
        if t <= frames[0].t:
            return replace(frames[0], t=t)
        if t >= frames[-1].t:
            return replace(frames[-1], t=t)
        for a, b in zip(frames, frames[1:]):
            if a.t <= t <= b.t:
                w = (t - a.t) / (b.t - a.t)
                mix = {
                    name: (1 - w) * getattr(a, name) + w * getattr(b, name)
                    for name in ("x", "y", "z", "rx_deg", "ry_deg", "rz_deg", "force")
                }
                return Keyframe(t=t, **mix)
        raise AssertionError("unreachable")

    def config_hash(self) -> str:
        blob = repr(
            (
                self.duration_s,
                self.seed,
                self.fps,
                self.physics_dt,
                self.optics_config,
                self.elastomer,
                self.illumination,
                self.albedo,
                self.audio_model,
                self.indenter_spec,
                self.timeline,
                self.video_format,
            )
        ).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_SCENARIO_SCHEMA = {
    "scenario": {"duration", "seed", "fps", "physics_dt", "video_format"},
    "optics": {"config"},
    "elastomer": {
        "kind",
        "thickness",
        "stiffness",
        "shear_stiffness",
        "smoothing_radius",
        "tau_load",
        "tau_recover",
        "friction",
    },
    "illumination": {"elevation_deg"},
    "albedo": {"kind"},
    "audio": {"impact_coeff", "slip_gain"},
    "indenter": {"kind", "radius", "size", "length", "wedge_angle_deg", "file", "depth_scale"},
    "timeline": {"k*"},
}


def parse_scenario(path) -> Scenario:
    path = Path(path)
    cp = configio.load_config(path)
    _validate_scenario_schema(cp, path)

    sec = cp["scenario"] if "scenario" in cp else {}
    duration = configio.get_float(sec, "duration", default=2.0) if sec else 2.0
    seed = configio.get_int(sec, "seed", default=0) if sec else 0
    fps = configio.get_float(sec, "fps", default=30.0) if sec else 30.0
    physics_dt = configio.get_float(sec, "physics_dt", default=0.002) if sec else 0.002
    video_format = configio.get_str(sec, "video_format", default="raw") if sec else "raw"

    optics_config = "default"
    if "optics" in cp:
        optics_config = configio.get_str(cp["optics"], "config", default="default")

    elastomer = VHB_PARAMS
    albedo = semi_specular_albedo()
    if "elastomer" in cp:
        esec = cp["elastomer"]
        kind = configio.get_str(esec, "kind", default="vhb").lower()
        if kind not in ("vhb", "silicone"):
            raise ConfigurationError(f"{path}: elastomer kind must be vhb or silicone")
        base = VHB_PARAMS if kind == "vhb" else SILICONE_PARAMS
        albedo = semi_specular_albedo() if kind == "vhb" else lambertian_albedo()
        elastomer = ElastomerParams(
            kind=base.kind,
            thickness=configio.get_float(esec, "thickness", default=base.thickness),
            stiffness=configio.get_float(esec, "stiffness", default=base.stiffness),
            shear_stiffness=configio.get_float(esec, "shear_stiffness", default=base.shear_stiffness),
            smoothing_radius=configio.get_float(esec, "smoothing_radius", default=base.smoothing_radius),
            tau_load=configio.get_float(esec, "tau_load", default=base.tau_load),
            tau_recover=configio.get_float(esec, "tau_recover", default=base.tau_recover),
            friction=configio.get_float(esec, "friction", default=base.friction),
        )

    illumination = default_illumination()
    if "illumination" in cp:
        illumination = default_illumination(
            elevation_deg=configio.get_float(cp["illumination"], "elevation_deg", default=40.0)
        )
    if "albedo" in cp:
        kind = configio.get_str(cp["albedo"], "kind", default=albedo.kind)
        if kind not in ("SemiSpecular", "Lambertian"):
            raise ConfigurationError(f"{path}: albedo kind must be SemiSpecular or Lambertian")
        albedo = semi_specular_albedo() if kind == "SemiSpecular" else lambertian_albedo()

    audio_model = default_modal_model()
    if "audio" in cp:
        asec = cp["audio"]
        audio_model = ModalModel(
            modes=audio_model.modes,
            impact_coeff=configio.get_float(asec, "impact_coeff", default=audio_model.impact_coeff),
            slip_gain=configio.get_float(asec, "slip_gain", default=audio_model.slip_gain),
        )

    indenter_spec = IndenterSpec()
    if "indenter" in cp:
        isec = cp["indenter"]
        kind = configio.get_str(isec, "kind", default="sphere")
        size = configio.get_floats(isec, "size", n=2, default=(20.0, 10.0))
        indenter_spec = IndenterSpec(
            kind=kind,
            radius=configio.get_float(isec, "radius", default=5.0),
            size=(size[0], size[1]),
            length=configio.get_float(isec, "length", default=20.0),
            wedge_angle_deg=configio.get_float(isec, "wedge_angle_deg", default=30.0),
            texture_file=configio.get_str(isec, "file", default=""),
            depth_scale=configio.get_float(isec, "depth_scale", default=1.0),
        )

    timeline = []
    if "timeline" in cp:
        tsec = cp["timeline"]
        for key in tsec:
            vals = configio.get_floats(tsec, key, n=8)
            timeline.append(
                Keyframe(
                    t=vals[0],
                    x=vals[1],
                    y=vals[2],
                    z=vals[3],
                    rx_deg=vals[4],
                    ry_deg=vals[5],
                    rz_deg=vals[6],
                    force=vals[7],
                )
            )

    return Scenario(
        duration_s=duration,
        seed=seed,
        fps=fps,
        physics_dt=physics_dt,
        optics_config=optics_config,
        elastomer=elastomer,
        illumination=illumination,
        albedo=albedo,
        audio_model=audio_model,
        indenter_spec=indenter_spec,
        timeline=tuple(timeline),
        video_format=video_format,
        base_dir=path.parent,
    )


def _validate_scenario_schema(cp, path):
    for section in cp.sections():
        if section == "timeline":
            for key in cp[section]:
                if not (key.startswith("k") and key[1:].isdigit()):
                    raise ConfigurationError(
                        f"{path}: timeline keys must look like k0, k1, ... (got {key!r})"
                    )
            continue
        if section not in _SCENARIO_SCHEMA:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
        allowed = _SCENARIO_SCHEMA[section]
        for key in cp[section]:
            if key not in allowed:
                from .configio import _key_line

                line = _key_line(path, section, key)
                where = f"line {line}" if line else "unknown line"
                raise ConfigurationError(
                    f"{path}: unknown key '{key}' in section [{section}] ({where})"
                )


def serialize_scenario(scenario: Scenario, path) -> None:
    """Write a scenario back out in the documented format."""
    lines = [
        "[scenario]",
        f"duration = {scenario.duration_s}",
        f"seed = {scenario.seed}",
        f"fps = {scenario.fps}",
        f"physics_dt = {scenario.physics_dt}",
        f"video_format = {scenario.video_format}",
        "",
        "[optics]",
        f"config = {scenario.optics_config}",
        "",
        "[elastomer]",
        f"kind = {'vhb' if scenario.elastomer.kind == 'VHB' else 'silicone'}",
        f"thickness = {scenario.elastomer.thickness}",
        f"stiffness = {scenario.elastomer.stiffness}",
        f"shear_stiffness = {scenario.elastomer.shear_stiffness}",
        f"smoothing_radius = {scenario.elastomer.smoothing_radius}",
        f"tau_load = {scenario.elastomer.tau_load}",
        f"tau_recover = {scenario.elastomer.tau_recover}",
        f"friction = {scenario.elastomer.friction}",
        "",
        "[albedo]",
        f"kind = {scenario.albedo.kind}",
        "",
        "[audio]",
        f"impact_coeff = {scenario.audio_model.impact_coeff}",
        f"slip_gain = {scenario.audio_model.slip_gain}",
        "",
        "[indenter]",
        f"kind = {scenario.indenter_spec.kind}",
    ]
    spec = scenario.indenter_spec
    if spec.kind == "sphere":
        lines.append(f"radius = {spec.radius}")
    elif spec.kind == "flat":
        lines.append(f"size = {spec.size[0]}, {spec.size[1]}")
    elif spec.kind == "edge":
        lines.append(f"length = {spec.length}")
        lines.append(f"wedge_angle_deg = {spec.wedge_angle_deg}")
    elif spec.kind == "textured":
        lines.append(f"file = {spec.texture_file}")
        lines.append(f"depth_scale = {spec.depth_scale}")
    lines.extend(["", "[timeline]"])
    for i, k in enumerate(scenario.timeline):
        lines.append(
            f"k{i} = {k.t}, {k.x}, {k.y}, {k.z}, {k.rx_deg}, {k.ry_deg}, {k.rz_deg}, {k.force}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
