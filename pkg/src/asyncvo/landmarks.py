"""Delayed landmark initialization: clone on first sight, triangulate on parallax."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .config import LandmarkConfig, NoiseConfig
from .errors import DuplicateFeature, InsufficientParallax, NegativeDepth
from .eskf import TrackUpdate
from .geometry import CameraIntrinsics, Pose, quat_mul, exp_so3, ray_angle, triangulate_two_view
from .state import StateManager


@dataclass
class PendingFeature:
    feature_id: int
    first_obs: np.ndarray
    latest_obs: np.ndarray
    latest_t: float
    obs_count: int = 1


class TriangulationOutcome(enum.Enum):
    INSERTED = "inserted"
    STILL_PENDING = "still_pending"
    REJECTED = "rejected"


def register_feature(sm: StateManager, pending: dict[int, PendingFeature], msg: TrackUpdate) -> PendingFeature:
    """Clone the current pose for a newly seen feature."""
    fid = msg.feature_id
    if fid in pending or sm.state.has(fid):
        raise DuplicateFeature(fid)
    z = msg.z
    sm.clone_camera_pose(fid, z, msg.t)
    pf = PendingFeature(fid, z, z.copy(), msg.t)
    pending[fid] = pf
    return pf


def parallax_of(pending: PendingFeature, clone_pose: Pose, current_pose: Pose, intr: CameraIntrinsics) -> float:
    """Angle between the first-sight ray and the latest ray, both in the global frame."""
    a = clone_pose.R @ intr.bearing(pending.first_obs)
    b = current_pose.R @ intr.bearing(pending.latest_obs)
    return ray_angle(a, b)


def _perturb(pose: Pose, i: int, h: float) -> Pose:
    if i < 3:
        p = pose.p.copy()
        p[i] += h
        return Pose(p, pose.q)
    r = np.zeros(3)
    r[i - 3] = h
    return Pose(pose.p, quat_mul(exp_so3(r), pose.q))


def triangulation_jacobians(clone_pose: Pose, cam_pose: Pose, z_clone, z_cur, intr: CameraIntrinsics,
                            state_step: float = 1e-6, pixel_step: float = 1e-4):
    """Central differences of the two-view triangulation.

    Returns ``(J_cam, J_clone, J_z)``: 3x6 blocks w.r.t. the current and the
    cloned pose errors (position then orientation), and 3x4 w.r.t. the
    clone pixel followed by the current pixel.
    """
    z_clone = np.asarray(z_clone, dtype=float)
    z_cur = np.asarray(z_cur, dtype=float)

    def g(cp, kp, zc, zk):
        return triangulate_two_view(cp, kp, zc, zk, intr, min_parallax=0.0)

    J_cam = np.empty((3, 6))
    J_clone = np.empty((3, 6))
    for i in range(6):
        J_cam[:, i] = (g(clone_pose, _perturb(cam_pose, i, state_step), z_clone, z_cur)
                       - g(clone_pose, _perturb(cam_pose, i, -state_step), z_clone, z_cur)) / (2 * state_step)
        J_clone[:, i] = (g(_perturb(clone_pose, i, state_step), cam_pose, z_clone, z_cur)
                         - g(_perturb(clone_pose, i, -state_step), cam_pose, z_clone, z_cur)) / (2 * state_step)
    J_z = np.empty((3, 4))
    for i in range(4):
        dz = np.zeros(4)
        dz[i] = pixel_step
        J_z[:, i] = (g(clone_pose, cam_pose, z_clone + dz[:2], z_cur + dz[2:])
                     - g(clone_pose, cam_pose, z_clone - dz[:2], z_cur - dz[2:])) / (2 * pixel_step)
    return J_cam, J_clone, J_z


def try_triangulate(sm: StateManager, pending: dict[int, PendingFeature], msg: TrackUpdate,
                    intr: CameraIntrinsics, noise: NoiseConfig,
                    cfg: LandmarkConfig = LandmarkConfig()) -> TriangulationOutcome:
    """Insert a pending feature into the map once the parallax suffices.

    Rejected features have their clone marginalized and are removed from
    ``pending``; the caller records them as deleted.
    """
    pf = pending[msg.feature_id]
    pf.latest_obs = msg.z
    pf.latest_t = msg.t
    pf.obs_count += 1
    s = sm.state
    clone_pose = s.clone_pose(pf.feature_id)
    cam_pose = s.pose
    if parallax_of(pf, clone_pose, cam_pose, intr) < np.deg2rad(cfg.parallax_deg):
        return TriangulationOutcome.STILL_PENDING

    try:
        p_f = triangulate_two_view(clone_pose, cam_pose, pf.first_obs, pf.latest_obs, intr, min_parallax=0.0)
        J_cam, J_clone, J_z = triangulation_jacobians(clone_pose, cam_pose, pf.first_obs, pf.latest_obs, intr,
                                                      cfg.fd_state_step, cfg.fd_pixel_step)
    except (NegativeDepth, InsufficientParallax):
        sm.marginalize(pf.feature_id, kind="clone")
        del pending[pf.feature_id]
        return TriangulationOutcome.REJECTED

    G_x = np.zeros((3, sm.dim))
    G_x[:, 0:6] = J_cam
    o = s.clone_offset(pf.feature_id)
    G_x[:, o:o + 6] = J_clone
    R_meas = noise.sigma_px ** 2 * np.eye(4)
    sm.insert_landmark(pf.feature_id, p_f, G_x, J_z, R_meas)
    del pending[pf.feature_id]
    return TriangulationOutcome.INSERTED
