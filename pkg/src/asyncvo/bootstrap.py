"""Homography-based initialization from a reference and a current feature set."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .config import BootstrapConfig, NoiseConfig
from .errors import DegenerateConfiguration, GeometryError, NoValidSolution
from .eskf import TrackUpdate
from .geometry import (
    CameraIntrinsics,
    Pose,
    decompose_homography,
    estimate_homography,
    rot_to_quat,
    triangulate_two_view,
)
from .landmarks import triangulation_jacobians
from .state import FilterState, StateManager

logger = logging.getLogger(__name__)


@dataclass
class FeatureSet:
    entries: dict[int, tuple[np.ndarray, float]] = field(default_factory=dict)
    creation_t: float = 0.0

    def copy(self) -> "FeatureSet":
        return FeatureSet({k: (z.copy(), t) for k, (z, t) in self.entries.items()}, self.creation_t)

    def drop(self, fid: int) -> None:
        self.entries.pop(fid, None)


class TrackSmoother:
    """Independent constant-velocity Kalman filters, one per feature track."""

    def __init__(self, accel_std: float = 50.0, meas_std: float = 1.0, init_vel_std: float = 200.0):
        self.q = accel_std ** 2
        # a zero measurement std would make the first update singular
        self.r = max(meas_std, 1e-3) ** 2
        self.v0 = init_vel_std ** 2
        self.tracks: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}

    def _predict(self, x, P, dt):
        if dt <= 0:
            return x, P
        F = np.eye(4)
        F[0, 2] = F[1, 3] = dt
        q = self.q
        Q = np.zeros((4, 4))
        Q[[0, 1], [0, 1]] = q * dt ** 3 / 3
        Q[[0, 1], [2, 3]] = Q[[2, 3], [0, 1]] = q * dt ** 2 / 2
        Q[[2, 3], [2, 3]] = q * dt
        return F @ x, F @ P @ F.T + Q

    def update(self, fid: int, z, t: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if fid not in self.tracks:
            x = np.array([z[0], z[1], 0.0, 0.0])
            P = np.diag([self.r, self.r, self.v0, self.v0])
            self.tracks[fid] = (x, P, t)
            return z.copy()
        x, P, t0 = self.tracks[fid]
        x, P = self._predict(x, P, t - t0)
        S = P[:2, :2] + self.r * np.eye(2)
        K = np.linalg.solve(S, P[:2, :]).T
        x = x + K @ (z - x[:2])
        P = P - K @ P[:2, :]
        P = 0.5 * (P + P.T)
        self.tracks[fid] = (x, P, t)
        return x[:2].copy()

    def position_at(self, fid: int, t: float) -> np.ndarray:
        x, P, t0 = self.tracks[fid]
        return x[:2] + x[2:] * max(t - t0, 0.0)

    def covariance(self, fid: int) -> np.ndarray:
        return self.tracks[fid][1].copy()

    def drop(self, fid: int) -> None:
        self.tracks.pop(fid, None)

    def clear(self) -> None:
        self.tracks.clear()


class BootstrapPhase(enum.Enum):
    COLLECTING = "collecting"
    REFERENCE_FROZEN = "reference_frozen"
    INITIALIZED = "initialized"


@dataclass
class InitResult:
    initialized: bool
    reason: str = ""
    manager: StateManager | None = None
    t: float = 0.0
    rotation: np.ndarray | None = None
    translation: np.ndarray | None = None
    landmark_ids: list[int] = field(default_factory=list)

    @property
    def state(self) -> FilterState | None:
        return None if self.manager is None else self.manager.state


def _not_ready(reason: str) -> InitResult:
    return InitResult(False, reason)


def try_initialize(ref: FeatureSet, cur: FeatureSet, intr: CameraIntrinsics,
                   cfg: BootstrapConfig = BootstrapConfig(), noise: NoiseConfig = NoiseConfig(),
                   fd_state_step: float = 1e-6, fd_pixel_step: float = 1e-4) -> InitResult:
    """Seed the filter from two feature sets of a planar scene.

    The reference camera defines the global frame and the translation to
    the current camera has unit length.
    """
    ids = sorted(set(ref.entries) & set(cur.entries))
    if len(ids) < cfg.min_correspondences:
        return _not_ready(f"{len(ids)} correspondences < {cfg.min_correspondences}")
    z1 = np.array([ref.entries[i][0] for i in ids])
    z2 = np.array([cur.entries[i][0] for i in ids])
    disp = float(np.median(np.linalg.norm(z2 - z1, axis=1)))
    if disp < cfg.min_displacement_px:
        return _not_ready(f"median displacement {disp:.2f} px below gate")

    x1, x2 = intr.normalize(z1), intr.normalize(z2)
    try:
        H = estimate_homography(x1, x2)
        dec = decompose_homography(H, x1, x2)
    except (DegenerateConfiguration, NoValidSolution) as err:
        return _not_ready(f"homography failed: {err}")

    # X2 = R X1 + t  =>  camera-to-global pose of the current camera
    Rc = dec.rotation.T
    pc = -Rc @ dec.translation
    ref_pose = Pose.identity()
    cur_pose = Pose(pc, rot_to_quat(Rc))

    points = {}
    for fid, a, b in zip(ids, z1, z2):
        try:
            points[fid] = triangulate_two_view(ref_pose, cur_pose, a, b, intr, min_parallax=0.0)
        except GeometryError:
            continue
    if len(points) < cfg.min_correspondences:
        return _not_ready(f"only {len(points)} features triangulated")

    dt = cur.creation_t - ref.creation_t
    v = pc / dt if dt > 0 else np.zeros(3)
    state = FilterState(cur_pose.p, cur_pose.q, v)
    P0 = np.diag([cfg.pose_prior_var] * 6 + [cfg.velocity_prior_var] * 3)
    sm = StateManager(state, P0)
    R_meas = noise.sigma_px ** 2 * np.eye(4)
    for fid, p_f in points.items():
        try:
            J_cam, _, J_z = triangulation_jacobians(ref_pose, cur_pose, ref.entries[fid][0], cur.entries[fid][0],
                                                    intr, fd_state_step, fd_pixel_step)
        except GeometryError:
            continue
        G_x = np.zeros((3, sm.dim))
        G_x[:, :6] = J_cam
        sm.augment_landmark(fid, p_f, G_x, J_z, R_meas)
    return InitResult(True, "ok", sm, cur.creation_t, dec.rotation, dec.translation, list(sm.state.landmark_ids))


class Bootstrapper:
    """Groups asynchronous updates into reference/current sets until initialization."""

    def __init__(self, intr: CameraIntrinsics, cfg: BootstrapConfig = BootstrapConfig(),
                 noise: NoiseConfig = NoiseConfig(), fd_state_step: float = 1e-6, fd_pixel_step: float = 1e-4):
        self.intr = intr
        self.cfg = cfg
        self.noise = noise
        self.fd_steps = (fd_state_step, fd_pixel_step)
        self.smoother = TrackSmoother(cfg.smoother_accel_std, noise.sigma_px)
        self.phase = BootstrapPhase.COLLECTING
        self.ref = FeatureSet()
        self.cur = FeatureSet()
        self.reseeds = 0
        self.last_reason = ""

    def reseed(self) -> None:
        self.ref = FeatureSet()
        self.cur = FeatureSet()
        self.smoother.clear()
        self.phase = BootstrapPhase.COLLECTING
        self.reseeds += 1

    def accumulate(self, msg: TrackUpdate) -> BootstrapPhase:
        fid = msg.feature_id
        if self.phase is BootstrapPhase.COLLECTING:
            smoothed = self.smoother.update(fid, msg.z, msg.t)
            self.ref.entries[fid] = (smoothed, msg.t)
            if len(self.ref.entries) >= self.cfg.reference_size:
                self.ref.creation_t = float(np.mean([t for _, t in self.ref.entries.values()]))
                self.cur = self.ref.copy()
                self.phase = BootstrapPhase.REFERENCE_FROZEN
        elif self.phase is BootstrapPhase.REFERENCE_FROZEN and fid in self.ref.entries:
            smoothed = self.smoother.update(fid, msg.z, msg.t)
            self.cur.entries[fid] = (smoothed, msg.t)
            self.cur.creation_t = msg.t
        return self.phase

    def handle_deletion(self, ids) -> None:
        for fid in ids:
            self.ref.drop(fid)
            self.cur.drop(fid)
            self.smoother.drop(fid)
        if self.phase is BootstrapPhase.REFERENCE_FROZEN and len(self.ref.entries) < self.cfg.min_correspondences:
            logger.info("bootstrap reference set fell below %d features; reseeding", self.cfg.min_correspondences)
            self.reseed()

    def current_set(self, t: float) -> FeatureSet:
        """Current set with every smoothed track predicted to time ``t``."""
        entries = {fid: (self.smoother.position_at(fid, t), t) for fid in self.cur.entries}
        return FeatureSet(entries, t)

    def try_initialize(self, t: float) -> InitResult:
        if self.phase is not BootstrapPhase.REFERENCE_FROZEN:
            return _not_ready(self.phase.value)
        res = try_initialize(self.ref, self.current_set(t), self.intr, self.cfg, self.noise, *self.fd_steps)
        self.last_reason = res.reason
        if res.initialized:
            self.phase = BootstrapPhase.INITIALIZED
        return res
