"""Trajectory accuracy after Sim(3) alignment, plus a NEES consistency check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2

from .errors import DegenerateConfiguration, NoOverlap, SingularCovariance
from .geometry import Sim3Transform, canonical, log_so3, quat_conj, quat_mul, umeyama_sim3


@dataclass
class Trajectory:
    """Time-ordered poses; ``cov`` optionally holds 6x6 (position, rotation) covariances."""

    t: np.ndarray
    p: np.ndarray
    q: np.ndarray
    cov: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        self.q = np.asarray(self.q, dtype=float).reshape(-1, 4)
        if not (len(self.t) == len(self.p) == len(self.q)):
            raise ValueError("t, p and q must have the same length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")

    @classmethod
    def empty(cls) -> "Trajectory":
        return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 4)))

    def __len__(self) -> int:
        return len(self.t)

    def time_range(self) -> tuple[float, float]:
        if len(self) == 0:
            return (float("nan"), float("nan"))
        return float(self.t[0]), float(self.t[-1])

    def transformed(self, T: Sim3Transform) -> "Trajectory":
        cov = None
        if self.cov is not None:
            R = T.R
            B = np.zeros((6, 6))
            B[:3, :3] = T.scale * R
            B[3:, 3:] = R
            cov = B @ self.cov @ B.T
        return Trajectory(self.t, T.apply(self.p), T.apply_rotation(self.q) if len(self) else self.q, cov)


def associate(est: Trajectory, ref: Trajectory, max_dt: float) -> list[tuple[int, int]]:
    """Match samples by nearest timestamp, each sample used at most once.

    Candidate pairs within ``max_dt`` are accepted greedily in order of
    increasing time difference.
    """
    if len(est) == 0 or len(ref) == 0:
        raise NoOverlap("empty trajectory")
    j = np.searchsorted(ref.t, est.t)
    cands = []
    for i, jj in enumerate(j):
        # the two neighbours bracketing est.t[i], plus one more on each side for conflicts
        for k in (jj - 2, jj - 1, jj, jj + 1):
            if 0 <= k < len(ref):
                d = abs(est.t[i] - ref.t[k])
                if d <= max_dt:
                    cands.append((d, i, k))
    cands.sort()
    used_e, used_r = set(), set()
    pairs = []
    for d, i, k in cands:
        if i in used_e or k in used_r:
            continue
        used_e.add(i)
        used_r.add(k)
        pairs.append((i, k))
    if not pairs:
        raise NoOverlap(
            f"no samples within {max_dt} s: estimate spans [{est.t[0]:.6f}, {est.t[-1]:.6f}], "
            f"reference spans [{ref.t[0]:.6f}, {ref.t[-1]:.6f}]")
    pairs.sort()
    return pairs


@dataclass
class ApeReport:
    mean: float
    rmse: float
    median: float
    max: float
    std: float
    residuals: np.ndarray
    times: np.ndarray
    alignment: Sim3Transform
    count: int
    aligned: Trajectory | None = field(default=None, repr=False)
    reference: Trajectory | None = field(default=None, repr=False)
    est_index: np.ndarray | None = field(default=None, repr=False)
    ref_index: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        a = self.alignment
        return {
            "ape_mean_m": self.mean,
            "ape_rmse_m": self.rmse,
            "ape_median_m": self.median,
            "ape_max_m": self.max,
            "ape_std_m": self.std,
            "matched_samples": self.count,
            "alignment": {
                "scale": a.scale,
                "rotation_wxyz": [float(x) for x in a.rotation],
                "translation": [float(x) for x in a.translation],
            },
        }


def ape_sim3(est: Trajectory, ref: Trajectory, max_dt: float = 0.01) -> ApeReport:
    """Translational absolute pose error after Sim(3) Umeyama alignment."""
    pairs = associate(est, ref, max_dt)
    if len(pairs) < 3:
        raise DegenerateConfiguration(f"only {len(pairs)} associated samples")
    ie = np.array([i for i, _ in pairs])
    ir = np.array([k for _, k in pairs])
    T = umeyama_sim3(est.p[ie], ref.p[ir])
    aligned = est.transformed(T)
    res = np.linalg.norm(aligned.p[ie] - ref.p[ir], axis=1)
    return ApeReport(
        mean=float(res.mean()), rmse=float(np.sqrt(np.mean(res ** 2))), median=float(np.median(res)),
        max=float(res.max()), std=float(res.std()), residuals=res, times=ref.t[ir], alignment=T,
        count=len(pairs), aligned=aligned, reference=ref, est_index=ie, ref_index=ir,
    )


@dataclass
class NeesReport:
    per_sample: np.ndarray
    average: float
    lower: float
    upper: float
    dof: int = 6
    gauge_aligned: bool = True

    @property
    def consistent(self) -> bool:
        return self.lower <= self.average <= self.upper

    def to_dict(self) -> dict:
        d = {"nees_average": self.average, "nees_bounds_95": [self.lower, self.upper],
             "samples": int(len(self.per_sample))}
        if self.gauge_aligned:
            d["note"] = "errors taken after Sim(3) alignment; NEES is biased optimistic"
        return d


def pose_errors(est: Trajectory, ref: Trajectory, pairs) -> np.ndarray:
    """Stacked (position, global rotation-vector) errors ``truth (-) estimate``."""
    out = np.empty((len(pairs), 6))
    for n, (i, k) in enumerate(pairs):
        out[n, :3] = ref.p[k] - est.p[i]
        out[n, 3:] = log_so3(canonical(quat_mul(ref.q[k], quat_conj(est.q[i]))))
    return out


def nees(est: Trajectory, ref: Trajectory, max_dt: float = 0.01, align: bool = True) -> NeesReport:
    """Normalized estimation error squared over the 6-DoF pose."""
    if est.cov is None:
        raise ValueError("estimate trajectory carries no covariances")
    pairs = associate(est, ref, max_dt)
    if align:
        ie = [i for i, _ in pairs]
        ir = [k for _, k in pairs]
        est = est.transformed(umeyama_sim3(est.p[ie], ref.p[ir]))
    errs = pose_errors(est, ref, pairs)
    vals = np.empty(len(pairs))
    for n, (i, _) in enumerate(pairs):
        P = est.cov[i]
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError:
            raise SingularCovariance(f"pose covariance at t={est.t[i]:.6f} is not positive definite") from None
        y = np.linalg.solve(L, errs[n])
        vals[n] = y @ y
    n = len(vals)
    dof = 6
    lo = chi2.ppf(0.025, dof * n) / n
    hi = chi2.ppf(0.975, dof * n) / n
    return NeesReport(vals, float(vals.mean()), float(lo), float(hi), dof, align)
