"""Synthetic world producing asynchronous, randomly ordered track messages."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from .config import SimConfig
from .errors import InvalidConfig
from .eskf import TrackDeletion, TrackUpdate
from .evaluation import Trajectory
from .geometry import rots_to_quats

# nadir-looking camera: optical axis along -z, image x along +x
R_NADIR = np.diag([1.0, -1.0, -1.0])


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


class SplineTrajectory:
    """C2 cubic spline through waypoints spaced evenly in time."""

    def __init__(self, waypoints, attitudes_deg, duration: float, closed: bool = True):
        W = np.asarray(waypoints, dtype=float)
        A = np.zeros_like(W) if attitudes_deg is None else np.deg2rad(np.asarray(attitudes_deg, dtype=float))
        if closed:
            W = np.vstack([W, W[:1]])
            A = np.vstack([A, A[:1]])
            bc = "periodic"
        else:
            bc = "clamped"
        knots = np.linspace(0.0, duration, len(W))
        self.duration = duration
        self._pos = CubicSpline(knots, W, bc_type=bc, axis=0)
        self._att = CubicSpline(knots, A, bc_type=bc, axis=0)

    def position(self, t):
        return self._pos(t)

    def velocity(self, t):
        return self._pos(t, 1)

    def rotation(self, t) -> np.ndarray:
        roll, pitch, yaw = self._att(t)
        return _rz(yaw) @ _ry(pitch) @ _rx(roll) @ R_NADIR

    def rotations(self, times) -> np.ndarray:
        """Stacked camera-to-world rotations, shape (n, 3, 3)."""
        a = self._att(np.asarray(times, dtype=float))
        cr, sr = np.cos(a[:, 0]), np.sin(a[:, 0])
        cp, sp = np.cos(a[:, 1]), np.sin(a[:, 1])
        cy, sy = np.cos(a[:, 2]), np.sin(a[:, 2])
        M = np.empty((len(a), 3, 3))
        M[:, 0, 0] = cy * cp
        M[:, 0, 1] = cy * sp * sr - sy * cr
        M[:, 0, 2] = cy * sp * cr + sy * sr
        M[:, 1, 0] = sy * cp
        M[:, 1, 1] = sy * sp * sr + cy * cr
        M[:, 1, 2] = sy * sp * cr - cy * sr
        M[:, 2, 0] = -sp
        M[:, 2, 1] = cp * sr
        M[:, 2, 2] = cp * cr
        return M @ R_NADIR


@dataclass
class LandmarkTrack:
    landmark: int
    position: np.ndarray
    birth: float
    death: float


@dataclass
class SimOutput:
    messages: list
    ground_truth: Trajectory
    tracks: dict[int, LandmarkTrack]
    landmarks: np.ndarray
    lifetimes: np.ndarray

    @property
    def updates(self) -> list[TrackUpdate]:
        return [m for m in self.messages if isinstance(m, TrackUpdate)]


def _sample_world(cfg: SimConfig, rng):
    n = cfg.landmark_count
    e = cfg.scene.extents
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(e[0], e[1], n)
    pts[:, 1] = rng.uniform(e[2], e[3], n)
    pts[:, 2] = 0.0 if cfg.scene.kind == "plane" else rng.uniform(e[4], e[5], n)
    life = rng.normal(cfg.lifetime_mean, cfg.lifetime_std, n)
    life = np.maximum(life, 0.1 * cfg.lifetime_mean)
    duration = cfg.trajectory.duration
    birth = rng.uniform(-cfg.lifetime_mean, duration, n)
    return pts, birth, birth + life, life


@njit(cache=True)
def _grow(a, n):
    out = np.empty((2 * n,) + a.shape[1:], a.dtype)
    out[:n] = a[:n]
    return out


@njit(cache=True)
def _sweep(P, R, pts, birth, death, times, intr, bounds, min_motion):
    """Visibility state machine over all ticks.

    Returns update rows (tick, landmark, track id) with exact pixels, ordered
    by tick and, within a tick, new tracks before continuing ones; plus
    deletion rows (tick, track id).
    """
    fx, fy, cx, cy = intr[0], intr[1], intr[2], intr[3]
    lo_u, hi_u, lo_v, hi_v = bounds[0], bounds[1], bounds[2], bounds[3]
    n = pts.shape[0]
    by_birth = np.argsort(birth, kind="mergesort")
    nxt = 0
    act = np.empty(n, np.int64)  # live landmarks, in order of birth
    na = 0
    track_of = np.full(n, -1, np.int64)
    last = np.zeros((n, 2))
    ui = np.empty((1024, 3), np.int64)
    uz = np.empty((1024, 2))
    di = np.empty((1024, 2), np.int64)
    nu = 0
    nd = 0
    next_id = 0
    vis = np.zeros(n, np.bool_)
    fresh = np.zeros(n, np.bool_)
    pu = np.empty(n)
    pv = np.empty(n)
    for k in range(times.shape[0]):
        t = times[k]
        while nxt < n and birth[by_birth[nxt]] <= t:
            act[na] = by_birth[nxt]
            na += 1
            nxt += 1
        for a in range(na):
            i = act[a]
            vis[i] = False
            if t < death[i]:
                d0 = pts[i, 0] - P[k, 0]
                d1 = pts[i, 1] - P[k, 1]
                d2 = pts[i, 2] - P[k, 2]
                z = R[k, 0, 2] * d0 + R[k, 1, 2] * d1 + R[k, 2, 2] * d2
                if z > 0.1:
                    u = fx * (R[k, 0, 0] * d0 + R[k, 1, 0] * d1 + R[k, 2, 0] * d2) / z + cx
                    v = fy * (R[k, 0, 1] * d0 + R[k, 1, 1] * d1 + R[k, 2, 1] * d2) / z + cy
                    if lo_u <= u < hi_u and lo_v <= v < hi_v:
                        vis[i] = True
                        pu[i] = u
                        pv[i] = v
        for phase in range(2):
            for a in range(na):
                i = act[a]
                if not vis[i]:
                    continue
                if phase == 0:
                    fresh[i] = track_of[i] < 0
                    if not fresh[i]:
                        continue
                    track_of[i] = next_id
                    next_id += 1
                elif fresh[i] or max(abs(pu[i] - last[i, 0]), abs(pv[i] - last[i, 1])) < min_motion:
                    continue
                if nu == ui.shape[0]:
                    ui = _grow(ui, nu)
                    uz = _grow(uz, nu)
                ui[nu, 0] = k
                ui[nu, 1] = i
                ui[nu, 2] = track_of[i]
                uz[nu, 0] = pu[i]
                uz[nu, 1] = pv[i]
                last[i, 0] = pu[i]
                last[i, 1] = pv[i]
                nu += 1
        keep = 0
        for a in range(na):
            i = act[a]
            if track_of[i] >= 0 and not vis[i]:
                if nd == di.shape[0]:
                    di = _grow(di, nd)
                di[nd, 0] = k
                di[nd, 1] = track_of[i]
                nd += 1
                track_of[i] = -1
            if t < death[i]:
                act[keep] = i
                keep += 1
        na = keep
    return ui[:nu], uz[:nu], di[:nd]


def generate(cfg: SimConfig) -> SimOutput:
    """Run the simulation; identical configs give identical outputs."""
    if not isinstance(cfg, SimConfig):
        raise InvalidConfig("generate() expects a SimConfig")
    rng = np.random.default_rng(cfg.seed)
    pts, birth, death, life = _sample_world(cfg, rng)
    tc = cfg.trajectory
    traj = SplineTrajectory(tc.waypoints, tc.attitudes, tc.duration, tc.closed)
    intr = cfg.intrinsics
    b = cfg.border_px
    n_ticks = int(np.floor(tc.duration * cfg.tick_rate_hz + 1e-9)) + 1
    times = np.round(np.arange(n_ticks) / cfg.tick_rate_hz, 6)
    gt_p = traj.position(times)
    R = traj.rotations(times)
    gt_q = rots_to_quats(R)

    ui, uz, di = _sweep(gt_p, R, pts, birth, death, times,
                        np.array([intr.fx, intr.fy, intr.cx, intr.cy]),
                        np.array([b, intr.width - b, b, intr.height - b]), cfg.min_pixel_motion)

    # seeded random order within each tick, then clipped Gaussian pixel noise
    order = np.lexsort((rng.random(len(ui)), ui[:, 0]))
    ui, uz = ui[order], uz[order]
    noise = np.clip(rng.normal(0.0, 1.0, uz.shape), -4.0, 4.0) * cfg.pixel_noise_sigma
    obs = uz + noise

    tracks: dict[int, LandmarkTrack] = {}
    for k, i, tid in ui[np.unique(ui[:, 2], return_index=True)[1]]:
        tracks[int(tid)] = LandmarkTrack(int(i), pts[i].copy(), float(times[k]), float("inf"))
    for k, tid in di:
        tracks[int(tid)].death = float(times[k])

    messages: list = []
    del_ticks = di[:, 0]
    starts = np.searchsorted(ui[:, 0], np.arange(n_ticks + 1))
    dstarts = np.searchsorted(del_ticks, np.arange(n_ticks + 1))
    tl = times.tolist()
    for k in np.union1d(ui[:, 0], del_ticks).tolist():
        t = tl[k]
        for j in range(starts[k], starts[k + 1]):
            messages.append(TrackUpdate(int(ui[j, 2]), t, float(obs[j, 0]), float(obs[j, 1])))
        if dstarts[k + 1] > dstarts[k]:
            messages.append(TrackDeletion(t, tuple(int(x) for x in di[dstarts[k]:dstarts[k + 1], 1])))

    gt = Trajectory(times, gt_p, gt_q)
    return SimOutput(messages, gt, tracks, pts, life)


def emit_ground_truth(output: SimOutput, path) -> Path:
    from .formats import write_trajectory
    return write_trajectory(output.ground_truth, path)
