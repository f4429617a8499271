"""Configuration schema with the published parameter values as defaults."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import InvalidConfig
from .geometry import CameraIntrinsics


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NoiseConfig(_Strict):
    sigma_a: float = Field(2.0, ge=0, description="velocity random walk, m/s/sqrt(s)")
    sigma_w: float = Field(2.0, ge=0, description="orientation random walk, rad/sqrt(s)")
    sigma_px: float = Field(1.0, gt=0, description="per-axis pixel measurement std")
    gate_threshold: float = Field(9.21, gt=0, description="chi-square gate, 2 DoF")
    gating: bool = True


class IntrinsicsConfig(_Strict):
    fx: float = Field(200.0, gt=0)
    fy: float = Field(200.0, gt=0)
    cx: float = 120.0
    cy: float = 90.0
    width: int = Field(240, gt=0)
    height: int = Field(180, gt=0)

    @model_validator(mode="after")
    def _principal_point(self):
        if not (0 <= self.cx < self.width):
            raise ValueError("cx must lie in [0, width)")
        if not (0 <= self.cy < self.height):
            raise ValueError("cy must lie in [0, height)")
        return self

    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)


class LandmarkConfig(_Strict):
    parallax_deg: float = Field(1.0, gt=0)
    max_landmarks: int = Field(60, gt=0, description="cap on mapped landmarks")
    max_pending: int = Field(30, ge=0, description="cap on cloned features awaiting triangulation")
    fd_state_step: float = Field(1e-6, gt=0)
    fd_pixel_step: float = Field(1e-4, gt=0)


class BootstrapConfig(_Strict):
    reference_size: int = Field(20, ge=4)
    min_correspondences: int = Field(8, ge=4)
    min_displacement_px: float = Field(5.0, gt=0)
    smoother_accel_std: float = Field(50.0, gt=0, description="px/s^2")
    pose_prior_var: float = Field(1e-6, gt=0)
    velocity_prior_var: float = Field(1.0, gt=0)


class TrackingConfig(_Strict):
    min_landmarks: int = Field(5, ge=0)
    failure_duration: float = Field(0.5, ge=0, description="seconds below min_landmarks")


class SceneConfig(_Strict):
    kind: Literal["plane", "box"] = "plane"
    # plane: z = 0 over [xmin, xmax] x [ymin, ymax]; box adds [zmin, zmax]
    extents: list[float] = Field(default_factory=lambda: [-3.0, 6.0, -3.0, 6.0])

    @model_validator(mode="after")
    def _extents(self):
        need = 4 if self.kind == "plane" else 6
        e = self.extents
        if len(e) != need:
            raise ValueError(f"{self.kind} scene needs {need} extents")
        if any(e[i + 1] <= e[i] for i in range(0, need, 2)):
            raise ValueError("extents must be increasing (min, max) pairs")
        return self


class TrajectoryConfig(_Strict):
    waypoints: list[list[float]] = Field(default_factory=lambda: [
        [0.0, 0.0, 3.0], [1.5, -0.5, 3.3], [3.0, 0.5, 2.8], [3.5, 2.0, 3.2],
        [2.0, 3.0, 2.7], [0.5, 2.5, 3.1],
    ])
    # roll, pitch, yaw in degrees per waypoint, applied on top of a nadir-looking camera
    attitudes: Optional[list[list[float]]] = Field(default_factory=lambda: [
        [0.0, 0.0, 0.0], [8.0, -5.0, 15.0], [-5.0, 10.0, 40.0], [6.0, -8.0, 70.0],
        [-8.0, 5.0, 40.0], [5.0, 6.0, 15.0],
    ])
    duration: float = Field(30.0, gt=0)
    closed: bool = True

    @model_validator(mode="after")
    def _shape(self):
        if len(self.waypoints) < 2 or any(len(w) != 3 for w in self.waypoints):
            raise ValueError("waypoints must be at least two 3-vectors")
        if self.attitudes is not None and (
                len(self.attitudes) != len(self.waypoints) or any(len(a) != 3 for a in self.attitudes)):
            raise ValueError("attitudes must give one (roll, pitch, yaw) per waypoint")
        return self


class SimConfig(_Strict):
    seed: int = 0
    landmark_count: int = Field(1500, gt=0)
    scene: SceneConfig = Field(default_factory=SceneConfig)
    lifetime_mean: float = Field(12.0, gt=0)
    lifetime_std: float = Field(3.0, ge=0)
    trajectory: TrajectoryConfig = Field(default_factory=TrajectoryConfig)
    tick_rate_hz: float = Field(1000.0, gt=0)
    pixel_noise_sigma: float = Field(1.0, ge=0)
    intrinsics: IntrinsicsConfig = Field(default_factory=IntrinsicsConfig)
    min_pixel_motion: float = Field(1.0, gt=0)
    border_px: float = Field(2.0, ge=0)


class RunConfig(_Strict):
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    landmarks: LandmarkConfig = Field(default_factory=LandmarkConfig)
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    tracking: TrackingConfig = Field(default_factory=TrackingConfig)
    intrinsics: IntrinsicsConfig = Field(default_factory=IntrinsicsConfig)
    simulator: SimConfig = Field(default_factory=SimConfig)


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict | None) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as err:
        raise InvalidConfig(_format_error(err)) from None


def load_config(path: str | Path | None) -> RunConfig:
    """Read a YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise InvalidConfig(f"cannot read config {path}: {err}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise InvalidConfig(f"config {path} is not valid YAML: {err}") from None
    if data is not None and not isinstance(data, dict):
        raise InvalidConfig("config root must be a mapping")
    return parse_config(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(), sort_keys=False)
