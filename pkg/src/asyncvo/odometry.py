"""Message-driven odometry: bootstrap, then filter every track update."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .bootstrap import Bootstrapper, BootstrapPhase
from .config import RunConfig
from .errors import FilterDivergence, NegativeDt, NonPositiveDepth, SingularInnovation
from .eskf import TrackDeletion, TrackUpdate, handle_deletion, intrinsics_vector, propagate, update
from .evaluation import Trajectory
from .landmarks import PendingFeature, TriangulationOutcome, register_feature, try_triangulate
from .state import StateManager

logger = logging.getLogger(__name__)


@dataclass
class PoseEstimate:
    t: float
    p: np.ndarray
    q: np.ndarray
    v: np.ndarray
    n_landmarks: int
    n_clones: int
    camera_trace: float
    pose_cov: np.ndarray


@dataclass
class RunStats:
    updates: int = 0
    accepted: int = 0
    gated: int = 0
    singular: int = 0
    behind_camera: int = 0
    registered: int = 0
    inserted: int = 0
    rejected: int = 0
    capped: int = 0
    bootstrap_messages: int = 0
    deletions_unknown: int = 0


@dataclass
class AsyncOdometry:
    cfg: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        self.intr = self.cfg.intrinsics.camera()
        self._iv = intrinsics_vector(self.intr)
        self._out = np.empty(6)
        lm = self.cfg.landmarks
        self.bootstrapper = Bootstrapper(self.intr, self.cfg.bootstrap, self.cfg.noise,
                                         lm.fd_state_step, lm.fd_pixel_step)
        self.sm: StateManager | None = None
        self.pending: dict[int, PendingFeature] = {}
        self.deleted: set[int] = set()
        self.t: float | None = None
        self.estimates: list[PoseEstimate] = []
        self.events: list[dict] = []
        self.timeline: list[tuple[float, int, int]] = []
        self.stats = RunStats()
        self.init_time: float | None = None
        self._below_since: float | None = None
        self._lost = False

    @property
    def initialized(self) -> bool:
        return self.sm is not None

    # -- entry points -----------------------------------------------------------

    def run(self, messages: Iterable) -> "AsyncOdometry":
        for msg in messages:
            self.process(msg)
        return self

    def process(self, msg) -> None:
        if self.t is not None and msg.t < self.t - 1e-9:
            raise NegativeDt(f"message at t={msg.t:.6f} precedes filter time {self.t:.6f}")
        if isinstance(msg, TrackDeletion):
            self._on_deletion(msg)
        elif self.sm is None:
            self._bootstrap(msg)
        else:
            self._on_update(msg)
        if self.t is None or msg.t > self.t:
            self.t = msg.t

    # -- internals ----------------------------------------------------------------

    def _bootstrap(self, msg: TrackUpdate) -> None:
        self.stats.bootstrap_messages += 1
        b = self.bootstrapper
        if b.accumulate(msg) is not BootstrapPhase.REFERENCE_FROZEN:
            return
        res = b.try_initialize(msg.t)
        if not res.initialized:
            return
        self.sm = res.manager
        self.init_time = msg.t
        s = self.sm.state
        self.events.append({
            "type": "initialization", "t": msg.t,
            "p": s.p.tolist(), "q": s.q.tolist(),
            "landmarks": s.n_landmarks, "reseeds": b.reseeds,
        })
        logger.info("initialized at t=%.6f with %d landmarks", msg.t, s.n_landmarks)
        self._mark_timeline(msg.t)
        self._record(msg.t)

    def _on_deletion(self, msg: TrackDeletion) -> None:
        if self.sm is None:
            self.bootstrapper.handle_deletion(msg.feature_ids)
            return
        before = (self.sm.state.n_landmarks, self.sm.state.n_clones)
        self.stats.deletions_unknown += handle_deletion(self.sm, msg, self.pending)
        self.deleted.update(msg.feature_ids)
        if (self.sm.state.n_landmarks, self.sm.state.n_clones) != before:
            self._mark_timeline(msg.t)
            self._monitor(msg.t)

    def _on_update(self, msg: TrackUpdate) -> None:
        sm, s, noise = self.sm, self.sm.state, self.cfg.noise
        dt = msg.t - self.t
        if dt > 0:
            propagate(sm, dt, noise)
        if self._lost or s.n_landmarks < self.cfg.tracking.min_landmarks:
            self._monitor(msg.t)
        fid = msg.feature_id
        st = self.stats
        if fid in s.landmark_index:
            st.updates += 1
            try:
                out = update(sm, msg, self.intr, noise, self._iv, self._out)
            except NonPositiveDepth:
                st.behind_camera += 1
                sm.marginalize(fid, kind="landmark")
                self.deleted.add(fid)
                self._mark_timeline(msg.t)
                self._monitor(msg.t)
                return
            except SingularInnovation:
                st.singular += 1
                return
            if not out.accepted:
                st.gated += 1
                return
            st.accepted += 1
            if not (np.isfinite(s.p).all() and np.isfinite(s.q).all() and np.isfinite(s.v).all()):
                raise FilterDivergence(f"non-finite camera state at t={msg.t:.6f}")
            self._record(msg.t)
        elif fid in self.pending:
            outcome = try_triangulate(sm, self.pending, msg, self.intr, noise, self.cfg.landmarks)
            if outcome is TriangulationOutcome.INSERTED:
                st.inserted += 1
                if not np.isfinite(sm.P).all():
                    raise FilterDivergence(f"non-finite covariance after inserting {fid}")
                self._mark_timeline(msg.t)
                self._monitor(msg.t)
            elif outcome is TriangulationOutcome.REJECTED:
                st.rejected += 1
                self.deleted.add(fid)
                self._mark_timeline(msg.t)
        elif fid in self.deleted:
            return
        elif (s.n_landmarks + s.n_clones >= self.cfg.landmarks.max_landmarks
              or s.n_clones >= self.cfg.landmarks.max_pending):
            st.capped += 1
        else:
            register_feature(sm, self.pending, msg)
            st.registered += 1
            self._mark_timeline(msg.t)

    def _record(self, t: float) -> None:
        s, P = self.sm.state, self.sm.P
        self.estimates.append(PoseEstimate(
            t, s.p.copy(), s.q.copy(), s.v.copy(), s.n_landmarks, s.n_clones,
            float(P[0, 0] + P[1, 1] + P[2, 2] + P[3, 3] + P[4, 4] + P[5, 5] + P[6, 6] + P[7, 7] + P[8, 8]),
            P[:6, :6].copy(),
        ))

    def _mark_timeline(self, t: float) -> None:
        s = self.sm.state
        self.timeline.append((t, s.n_landmarks, s.n_clones))

    def _monitor(self, t: float) -> None:
        m = self.sm.state.n_landmarks
        tc = self.cfg.tracking
        if m < tc.min_landmarks:
            if self._below_since is None:
                self._below_since = t
            if not self._lost and t - self._below_since >= tc.failure_duration:
                self._lost = True
                self.events.append({"type": "tracking_failure", "t": t, "since": self._below_since,
                                    "landmarks": m})
                logger.warning("tracking failure: %d landmarks since t=%.3f", m, self._below_since)
        else:
            if self._lost:
                self.events.append({"type": "tracking_recovered", "t": t, "landmarks": m})
            self._lost = False
            self._below_since = None

    # -- outputs ------------------------------------------------------------------

    def trajectory(self, with_covariance: bool = False) -> Trajectory:
        """Estimated trajectory, keeping the last estimate per timestamp."""
        last: dict[float, PoseEstimate] = {}
        for e in self.estimates:
            last[e.t] = e
        ests = [last[t] for t in sorted(last)]
        if not ests:
            return Trajectory.empty()
        cov = np.array([e.pose_cov for e in ests]) if with_covariance else None
        return Trajectory(np.array([e.t for e in ests]), np.array([e.p for e in ests]),
                          np.array([e.q for e in ests]), cov)
