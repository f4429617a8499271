"""Error-state filter loop; each message is corrected on its own timestamp."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import NoiseConfig
from .errors import NegativeDt, NonPositiveDepth, SingularInnovation, UnknownLandmark
from .geometry import CameraIntrinsics
from .state import StateManager

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrackUpdate:
    feature_id: int
    t: float
    u: float
    v: float

    @property
    def z(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True)
class TrackDeletion:
    t: float
    feature_ids: tuple[int, ...] = field(default_factory=tuple)


class UpdateStatus(enum.Enum):
    ACCEPTED = "accepted"
    GATED = "gated"


@dataclass
class UpdateOutcome:
    status: UpdateStatus
    innovation: np.ndarray
    S: np.ndarray
    mahalanobis: float

    @property
    def accepted(self) -> bool:
        return self.status is UpdateStatus.ACCEPTED


def intrinsics_vector(intr: CameraIntrinsics) -> np.ndarray:
    return np.array([intr.fx, intr.fy, intr.cx, intr.cy])


def propagate(sm: StateManager, dt: float, noise: NoiseConfig) -> None:
    """Constant-velocity, constant-orientation prediction over ``dt`` seconds."""
    if dt < 0:
        raise NegativeDt(f"dt = {dt}")
    if dt == 0:
        return
    s = sm.state
    _kernels.propagate(sm.P, s.p, s.v, float(dt), noise.sigma_a ** 2, noise.sigma_w ** 2)


def reset(P: np.ndarray, applied_delta) -> np.ndarray:
    """Error reset ``P <- G P G^T`` for the correction just folded into the state.

    Operates in place and also returns ``P``.
    """
    d = np.asarray(applied_delta, dtype=float)
    _kernels.reset(P, np.ascontiguousarray(d[3:6]))
    return P


def update(sm: StateManager, msg: TrackUpdate, intr: CameraIntrinsics, noise: NoiseConfig,
           _intr_vec=None, _out=None) -> UpdateOutcome:
    """Correct the filter with one observation of a mapped landmark.

    Gated measurements leave state and covariance untouched. A landmark that
    has moved behind the camera raises NonPositiveDepth so that the caller
    can delete it.
    """
    s = sm.state
    k = s.landmark_index.get(msg.feature_id)
    if k is None:
        raise UnknownLandmark(msg.feature_id)
    iv = intrinsics_vector(intr) if _intr_vec is None else _intr_vec
    out = np.empty(6) if _out is None else _out
    gate = noise.gate_threshold if noise.gating else 0.0
    code = _kernels.update(sm.P, s.p, s.q, s.v, s.landmark_pos, s.clone_p, s.clone_q, k,
                           np.array((msg.u, msg.v)), iv, noise.sigma_px ** 2, gate, out)
    if code == _kernels.BEHIND_CAMERA:
        raise NonPositiveDepth(f"landmark {msg.feature_id} is behind the camera")
    if code == _kernels.SINGULAR:
        raise SingularInnovation(f"innovation covariance for feature {msg.feature_id} is singular")
    status = UpdateStatus.ACCEPTED if code == _kernels.ACCEPTED else UpdateStatus.GATED
    S = np.array([[out[2], out[3]], [out[3], out[4]]])
    return UpdateOutcome(status, out[:2].copy(), S, float(out[5]))


def update_batch(sm: StateManager, feature_ids, dts, zs, intr: CameraIntrinsics, noise: NoiseConfig):
    """Propagate-then-update over a block of mapped-landmark observations in one compiled call.

    ``dts[i]`` is the time step preceding row ``i``. Equivalent to calling
    :func:`propagate` and :func:`update` row by row. Returns per-row status
    codes (see ``_kernels``) and Mahalanobis distances; rows after a
    behind-camera or singular measurement are not processed and the error is
    raised.
    """
    s = sm.state
    try:
        slots = np.fromiter((s.landmark_index[f] for f in feature_ids), dtype=np.int64)
    except KeyError as err:
        raise UnknownLandmark(err.args[0]) from None
    dts = np.ascontiguousarray(dts, dtype=float)
    zs = np.ascontiguousarray(zs, dtype=float).reshape(-1, 2)
    if len(dts) != len(slots) or len(zs) != len(slots):
        raise ValueError("feature_ids, dts and zs must have the same length")
    if np.any(dts < 0):
        raise NegativeDt(f"dt = {dts.min()}")
    codes = np.full(len(slots), -1, dtype=np.int64)
    maha = np.full(len(slots), np.nan)
    gate = noise.gate_threshold if noise.gating else 0.0
    stop = _kernels.update_batch(sm.P, s.p, s.q, s.v, s.landmark_pos, s.clone_p, s.clone_q, slots, dts, zs,
                                 intrinsics_vector(intr), noise.sigma_a ** 2, noise.sigma_w ** 2,
                                 noise.sigma_px ** 2, gate, codes, maha)
    if stop < len(slots):
        fid = feature_ids[stop]
        if codes[stop] == _kernels.BEHIND_CAMERA:
            raise NonPositiveDepth(f"landmark {fid} is behind the camera")
        raise SingularInnovation(f"innovation covariance for feature {fid} is singular")
    return codes, maha


def handle_deletion(sm: StateManager, msg: TrackDeletion, pending: dict | None = None) -> int:
    """Marginalize every known id in ``msg``; returns how many were unknown."""
    unknown = 0
    s = sm.state
    for fid in msg.feature_ids:
        if fid in s.landmark_index:
            sm.marginalize(fid, kind="landmark")
        elif fid in s.clone_index:
            sm.marginalize(fid, kind="clone")
            if pending is not None:
                pending.pop(fid, None)
        else:
            unknown += 1
    if unknown:
        logger.debug("ignored %d unknown ids in deletion at t=%.6f", unknown, msg.t)
    return unknown
