"""Nominal state plus the covariance bookkeeping behind it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, DuplicateFeature, UnknownClone, UnknownEntity
from .geometry import Pose, canonical, quat_identity

CAMERA_DIM = 9
LANDMARK_DIM = 3
CLONE_DIM = 6

POS = slice(0, 3)
ROT = slice(3, 6)
VEL = slice(6, 9)
POSE = slice(0, 6)


@dataclass
class CloneRecord:
    pose: Pose
    first_obs: np.ndarray
    first_t: float


class FilterState:
    """Camera position/orientation/velocity plus landmarks and pose clones.

    Landmarks and clones are kept in contiguous arrays ordered like the
    covariance layout so the compiled update can correct them in place.
    """

    def __init__(self, p=None, q=None, v=None):
        self.p = np.zeros(3) if p is None else np.array(p, dtype=float)
        self.q = quat_identity() if q is None else canonical(q)
        self.v = np.zeros(3) if v is None else np.array(v, dtype=float)
        self.landmark_ids: list[int] = []
        self.landmark_pos = np.zeros((0, 3))
        self.clone_ids: list[int] = []
        self.clone_p = np.zeros((0, 3))
        self.clone_q = np.zeros((0, 4))
        self.clone_obs = np.zeros((0, 2))
        self.clone_t = np.zeros(0)
        self.landmark_index: dict[int, int] = {}
        self.clone_index: dict[int, int] = {}

    @property
    def pose(self) -> Pose:
        return Pose(self.p, self.q)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmark_ids)

    @property
    def n_clones(self) -> int:
        return len(self.clone_ids)

    @property
    def dim(self) -> int:
        return CAMERA_DIM + LANDMARK_DIM * self.n_landmarks + CLONE_DIM * self.n_clones

    @property
    def landmarks(self) -> dict[int, np.ndarray]:
        return {fid: self.landmark_pos[i].copy() for i, fid in enumerate(self.landmark_ids)}

    @property
    def clones(self) -> dict[int, CloneRecord]:
        return {fid: self.clone_record(fid) for fid in self.clone_ids}

    def clone_record(self, fid: int) -> CloneRecord:
        k = self.clone_index[fid]
        return CloneRecord(Pose(self.clone_p[k], self.clone_q[k]), self.clone_obs[k].copy(),
                           float(self.clone_t[k]))

    def clone_pose(self, fid: int) -> Pose:
        k = self.clone_index[fid]
        return Pose(self.clone_p[k], self.clone_q[k])

    def has(self, fid: int) -> bool:
        return fid in self.landmark_index or fid in self.clone_index

    def landmark_offset(self, fid: int) -> int:
        return CAMERA_DIM + LANDMARK_DIM * self.landmark_index[fid]

    def clone_offset(self, fid: int) -> int:
        return CAMERA_DIM + LANDMARK_DIM * self.n_landmarks + CLONE_DIM * self.clone_index[fid]

    def copy(self) -> "FilterState":
        out = FilterState(self.p, self.q, self.v)
        out.landmark_ids = list(self.landmark_ids)
        out.landmark_pos = self.landmark_pos.copy()
        out.clone_ids = list(self.clone_ids)
        out.clone_p = self.clone_p.copy()
        out.clone_q = self.clone_q.copy()
        out.clone_obs = self.clone_obs.copy()
        out.clone_t = self.clone_t.copy()
        out.landmark_index = dict(self.landmark_index)
        out.clone_index = dict(self.clone_index)
        return out

    def _reindex(self):
        self.landmark_index = {fid: i for i, fid in enumerate(self.landmark_ids)}
        self.clone_index = {fid: i for i, fid in enumerate(self.clone_ids)}


class StateManager:
    """Owns the nominal state and its error covariance ``P``.

    The error layout is: camera (position, orientation, velocity), then
    3 rows per landmark in insertion order, then 6 rows per clone.
    """

    def __init__(self, state: FilterState | None = None, cov=None):
        self.state = FilterState() if state is None else state
        if cov is None:
            cov = np.zeros((self.state.dim, self.state.dim))
        self.P = np.ascontiguousarray(cov, dtype=float)
        if self.P.shape != (self.state.dim, self.state.dim):
            raise DimensionMismatch(f"covariance is {self.P.shape}, state needs {self.state.dim}")

    @property
    def dim(self) -> int:
        return self.P.shape[0]

    def layout(self) -> list[tuple[str, int | None, int]]:
        """``(kind, id, offset)`` for every block, in matrix order."""
        s = self.state
        out = [("camera", None, 0)]
        out += [("landmark", fid, s.landmark_offset(fid)) for fid in s.landmark_ids]
        out += [("clone", fid, s.clone_offset(fid)) for fid in s.clone_ids]
        return out

    def copy(self) -> "StateManager":
        return StateManager(self.state.copy(), self.P.copy())

    # -- composition ------------------------------------------------------

    def compose(self, delta) -> None:
        """Fold an error vector into the nominal state (``x <- x (+) delta``)."""
        delta = np.ascontiguousarray(delta, dtype=float)
        if delta.shape != (self.dim,):
            raise DimensionMismatch(f"error vector has shape {delta.shape}, expected ({self.dim},)")
        s = self.state
        _kernels.compose(s.p, s.q, s.v, s.landmark_pos, s.clone_p, s.clone_q, delta)

    # -- structural operations ----------------------------------------------

    def clone_camera_pose(self, fid: int, z, t: float) -> None:
        """Stochastic cloning of the current 6-DoF pose for feature ``fid``."""
        s = self.state
        if s.has(fid):
            raise DuplicateFeature(fid)
        n = self.dim
        P = np.empty((n + CLONE_DIM, n + CLONE_DIM))
        P[:n, :n] = self.P
        P[n:, :n] = self.P[POSE, :]
        P[:n, n:] = self.P[:, POSE]
        P[n:, n:] = self.P[POSE, POSE]
        self.P = P
        s.clone_ids.append(fid)
        s.clone_index[fid] = len(s.clone_ids) - 1
        s.clone_p = np.vstack([s.clone_p, s.p])
        s.clone_q = np.vstack([s.clone_q, s.q])
        s.clone_obs = np.vstack([s.clone_obs, np.asarray(z, dtype=float).reshape(1, 2)])
        s.clone_t = np.append(s.clone_t, float(t))

    def augment_landmark(self, fid: int, p_f, G_x, G_z, R_meas) -> None:
        """Append a landmark whose error is ``G_x dx + G_z dz``.

        The new block is ``G_x P G_x^T + G_z R G_z^T`` with cross terms
        ``G_x P``; it is placed after the existing landmarks.
        """
        s = self.state
        if fid in s.landmark_index:
            raise DuplicateFeature(fid)
        n = self.dim
        G_x = np.asarray(G_x, dtype=float)
        G_z = np.asarray(G_z, dtype=float)
        R_meas = np.atleast_2d(np.asarray(R_meas, dtype=float))
        if G_x.shape != (3, n):
            raise DimensionMismatch(f"G_x is {G_x.shape}, expected (3, {n})")
        if G_z.ndim != 2 or G_z.shape[0] != 3 or R_meas.shape != (G_z.shape[1], G_z.shape[1]):
            raise DimensionMismatch("G_z and R_meas dimensions disagree")

        GP = G_x @ self.P
        block = GP @ G_x.T + G_z @ R_meas @ G_z.T
        block = 0.5 * (block + block.T)
        at = CAMERA_DIM + LANDMARK_DIM * s.n_landmarks
        # insert at `at`, shifting the clone blocks down
        P = np.empty((n + 3, n + 3))
        keep_a = slice(0, at)
        keep_b = slice(at, n)
        new_b = slice(at + 3, n + 3)
        P[keep_a, keep_a] = self.P[keep_a, keep_a]
        P[keep_a, new_b] = self.P[keep_a, keep_b]
        P[new_b, keep_a] = self.P[keep_b, keep_a]
        P[new_b, new_b] = self.P[keep_b, keep_b]
        P[at:at + 3, keep_a] = GP[:, keep_a]
        P[at:at + 3, new_b] = GP[:, keep_b]
        P[keep_a, at:at + 3] = GP[:, keep_a].T
        P[new_b, at:at + 3] = GP[:, keep_b].T
        P[at:at + 3, at:at + 3] = block
        self.P = P
        s.landmark_ids.append(fid)
        s.landmark_index[fid] = len(s.landmark_ids) - 1
        s.landmark_pos = np.vstack([s.landmark_pos, np.asarray(p_f, dtype=float).reshape(1, 3)])

    def insert_landmark(self, fid: int, p_f, G_x, G_z, R_meas) -> None:
        """Map a cloned feature: augment with its landmark, then drop the clone."""
        if fid not in self.state.clone_index:
            raise UnknownClone(fid)
        # augment_landmark checks the G_x width against the pre-insertion dimension
        self.augment_landmark(fid, p_f, G_x, G_z, R_meas)
        self.marginalize(fid, kind="clone")

    def marginalize(self, fid: int, kind: str | None = None) -> None:
        """Remove a landmark or clone together with its rows and columns."""
        s = self.state
        if kind is None:
            kind = "landmark" if fid in s.landmark_index else "clone"
        if kind == "landmark":
            if fid not in s.landmark_index:
                raise UnknownEntity(fid)
            i = s.landmark_index[fid]
            lo, size = s.landmark_offset(fid), LANDMARK_DIM
            s.landmark_ids.pop(i)
            s.landmark_pos = np.delete(s.landmark_pos, i, axis=0)
        elif kind == "clone":
            if fid not in s.clone_index:
                raise UnknownEntity(fid)
            k = s.clone_index[fid]
            lo, size = s.clone_offset(fid), CLONE_DIM
            s.clone_ids.pop(k)
            s.clone_p = np.delete(s.clone_p, k, axis=0)
            s.clone_q = np.delete(s.clone_q, k, axis=0)
            s.clone_obs = np.delete(s.clone_obs, k, axis=0)
            s.clone_t = np.delete(s.clone_t, k)
        else:
            raise ValueError(f"unknown entity kind {kind!r}")
        keep = np.r_[0:lo, lo + size:self.dim]
        self.P = np.ascontiguousarray(self.P[np.ix_(keep, keep)])
        s._reindex()

    # -- diagnostics ----------------------------------------------------------

    def camera_cov(self) -> np.ndarray:
        return self.P[:CAMERA_DIM, :CAMERA_DIM].copy()

    def is_finite(self) -> bool:
        s = self.state
        return bool(np.isfinite(self.P).all() and np.isfinite(s.p).all() and np.isfinite(s.q).all()
                    and np.isfinite(s.v).all() and np.isfinite(s.landmark_pos).all())
