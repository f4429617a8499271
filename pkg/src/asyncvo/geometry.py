"""Camera and rotation geometry used across the package.

Conventions used project-wide:

* quaternions are stored as ``[w, x, y, z]`` and returned with ``w >= 0``;
* a pose ``(p, q)`` maps camera coordinates into the global frame, so a global
  point ``X`` is seen by the camera at ``R(q).T @ (X - p)``;
* orientation errors are global (left) perturbations,
  ``q_true = exp_so3(dtheta) * q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateConfiguration,
    InsufficientParallax,
    NegativeDepth,
    NonPositiveDepth,
    NoValidSolution,
)

DEPTH_FLOOR = 1e-6
_SMALL_ANGLE = 1e-8


# ---------------------------------------------------------------------------
# Quaternions and SO(3)
# ---------------------------------------------------------------------------

def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def canonical(q) -> np.ndarray:
    """Normalize ``q`` and flip it onto the ``w >= 0`` hemisphere."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_rot(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_to_quat(R) -> np.ndarray:
    """Rotation matrix to canonical quaternion (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax([tr, *diag]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return canonical(q)


def rots_to_quats(R) -> np.ndarray:
    """Batch version of :func:`rot_to_quat` for an (n, 3, 3) stack."""
    xyzw = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = xyzw[:, [3, 0, 1, 2]]
    q[q[:, 0] < 0] *= -1.0
    return q


def exp_so3(r) -> np.ndarray:
    """Rotation vector to unit quaternion."""
    r = np.asarray(r, dtype=float)
    theta = float(np.linalg.norm(r))
    if theta < _SMALL_ANGLE:
        # Taylor expansion of cos(t/2) and sin(t/2)/t
        w = 1.0 - theta * theta / 8.0
        xyz = r * (0.5 - theta * theta / 48.0)
    else:
        w = np.cos(0.5 * theta)
        xyz = r * (np.sin(0.5 * theta) / theta)
    return canonical(np.array([w, *xyz]))


def log_so3(q) -> np.ndarray:
    """Unit quaternion to the minimal rotation vector (norm <= pi)."""
    q = canonical(q)
    w, v = q[0], q[1:]
    n = float(np.linalg.norm(v))
    if n < _SMALL_ANGLE:
        return 2.0 * v / w * (1.0 - n * n / (3.0 * w * w))
    return 2.0 * np.arctan2(n, w) / n * v


def rotation_angle(R) -> float:
    """Angle of a rotation matrix, robust near zero."""
    return float(np.linalg.norm(log_so3(rot_to_quat(R))))


# ---------------------------------------------------------------------------
# Camera model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def normalize(self, pixels) -> np.ndarray:
        """Pixels ``(..., 2)`` to normalized image coordinates ``(..., 2)``."""
        px = np.asarray(pixels, dtype=float)
        return np.stack([(px[..., 0] - self.cx) / self.fx, (px[..., 1] - self.cy) / self.fy], axis=-1)

    def bearing(self, pixel) -> np.ndarray:
        """Unnormalized camera-frame ray ``[x, y, 1]`` through a pixel."""
        return np.array([(pixel[0] - self.cx) / self.fx, (pixel[1] - self.cy) / self.fy, 1.0])

    def contains(self, pixel, margin: float = 0.0) -> bool:
        return (margin <= pixel[0] < self.width - margin) and (margin <= pixel[1] < self.height - margin)


@dataclass
class Pose:
    """Camera-to-global pose."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.q = canonical(self.q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), quat_identity())

    @property
    def R(self) -> np.ndarray:
        return quat_to_rot(self.q)

    def to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.p) @ self.R

    def perturbed(self, dp, dtheta) -> "Pose":
        """Pose after applying a (position, global rotation) error."""
        return Pose(self.p + dp, quat_mul(exp_so3(dtheta), self.q))


def project(intr: CameraIntrinsics, pose: Pose, landmark) -> np.ndarray:
    """Pixel coordinates of a global point seen from ``pose``."""
    X, Y, Z = pose.R.T @ (np.asarray(landmark, dtype=float) - pose.p)
    if Z <= DEPTH_FLOOR:
        raise NonPositiveDepth(f"camera-frame depth {Z:.3g} m is below the floor")
    return np.array([intr.fx * X / Z + intr.cx, intr.fy * Y / Z + intr.cy])


def projection_jacobians(intr: CameraIntrinsics, pose: Pose, landmark):
    """Jacobians of the pixel measurement at the zero error state.

    Returns ``(H_pos, H_rot, H_f)``, each 2x3, with respect to the camera
    position error, the global orientation error and the landmark error.
    """
    R = pose.R
    d = np.asarray(landmark, dtype=float) - pose.p
    X, Y, Z = R.T @ d
    if Z <= DEPTH_FLOOR:
        raise NonPositiveDepth(f"camera-frame depth {Z:.3g} m is below the floor")
    J = np.array([[intr.fx / Z, 0.0, -intr.fx * X / (Z * Z)],
                  [0.0, intr.fy / Z, -intr.fy * Y / (Z * Z)]])
    JRt = J @ R.T
    return -JRt, JRt @ skew(d), JRt


# ---------------------------------------------------------------------------
# Triangulation
# ---------------------------------------------------------------------------

def ray_angle(a, b) -> float:
    """Angle between two 3D directions (lengths are irrelevant)."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    # atan2 form keeps precision near 0 and pi; scalar math avoids numpy call overhead
    c = math.sqrt((a1 * b2 - a2 * b1) ** 2 + (a2 * b0 - a0 * b2) ** 2 + (a0 * b1 - a1 * b0) ** 2)
    return math.atan2(c, a0 * b0 + a1 * b1 + a2 * b2)


def triangulate_two_view(pose_a: Pose, pose_b: Pose, z_a, z_b, intr: CameraIntrinsics,
                         min_parallax: float = 1e-3) -> np.ndarray:
    """Midpoint triangulation of one feature seen from two poses.

    Raises InsufficientParallax when the baseline vanishes or the bearing
    rays are closer than ``min_parallax`` radians, and NegativeDepth when the
    point ends up behind either camera.
    """
    da = pose_a.R @ intr.bearing(z_a)
    db = pose_b.R @ intr.bearing(z_b)
    da /= np.linalg.norm(da)
    db /= np.linalg.norm(db)
    baseline = pose_b.p - pose_a.p
    if np.linalg.norm(baseline) < 1e-12:
        raise InsufficientParallax("zero baseline")
    if ray_angle(da, db) < min_parallax:
        raise InsufficientParallax("bearing rays are nearly parallel")

    c = da @ db
    # normal equations of min |pa + la*da - pb - lb*db|^2 for unit rays
    ba, bb = da @ baseline, db @ baseline
    den = 1.0 - c * c
    la = (ba - c * bb) / den
    lb = (c * ba - bb) / den
    X = 0.5 * (pose_a.p + la * da + pose_b.p + lb * db)

    if (pose_a.R.T @ (X - pose_a.p))[2] <= DEPTH_FLOOR or (pose_b.R.T @ (X - pose_b.p))[2] <= DEPTH_FLOOR:
        raise NegativeDepth("triangulated point is behind a camera")
    return X


# ---------------------------------------------------------------------------
# Homography
# ---------------------------------------------------------------------------

def _hartley(pts):
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1).mean()
    if dist < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / dist
    T = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return T


def estimate_homography(src, dst) -> np.ndarray:
    """DLT homography with ``dst ~ H @ src``, scaled to unit middle singular value."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (N, 2)")
    if len(src) < 4:
        raise DegenerateConfiguration("at least 4 correspondences are required")

    T1, T2 = _hartley(src), _hartley(dst)
    a = src @ T1[:2, :2].T + T1[:2, 2]
    b = dst @ T2[:2, :2].T + T2[:2, 2]
    n = len(a)
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = a
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -b[:, :1] * a
    A[0::2, 8] = -b[:, 0]
    A[1::2, 3:5] = a
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -b[:, 1:] * a
    A[1::2, 8] = -b[:, 1]

    _, s, Vt = np.linalg.svd(A)
    if s[7] < 1e-10 * s[0]:
        raise DegenerateConfiguration("rank-deficient DLT system")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(T2, Hn @ T1)
    return H / np.linalg.svd(H, compute_uv=False)[1]


def apply_homography(H, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    h = pts @ H[:, :2].T + H[:, 2]
    return h[:, :2] / h[:, 2:]


@dataclass
class HomographyDecomposition:
    """Relative motion ``X2 = R @ X1 + distance_ratio * t`` for plane ``n.X1 = 1``.

    ``t`` is unit length; the normalized homography is ``R + distance_ratio * t n^T``.
    """

    rotation: np.ndarray
    translation: np.ndarray
    normal: np.ndarray
    distance_ratio: float

    def homography(self) -> np.ndarray:
        return self.rotation + self.distance_ratio * np.outer(self.translation, self.normal)


def _homogeneous(pts):
    return np.column_stack([pts, np.ones(len(pts))])


def homography_candidates(H):
    """The four analytic (R, T, N) solutions of ``H = R + T N^T``."""
    H = H / np.linalg.svd(H, compute_uv=False)[1]
    evals, V = np.linalg.eigh(H.T @ H)
    order = np.argsort(evals)[::-1]
    evals, V = evals[order], V[:, order]
    if np.linalg.det(V) < 0:
        V = -V
    s1, s3 = evals[0], evals[2]
    if s1 - s3 < 1e-10:
        raise NoValidSolution("homography is a pure rotation; translation direction is undefined")
    v1, v2, v3 = V.T
    a = np.sqrt(max(1.0 - s3, 0.0))
    b = np.sqrt(max(s1 - 1.0, 0.0))
    den = np.sqrt(s1 - s3)
    out = []
    for u in ((a * v1 + b * v3) / den, (a * v1 - b * v3) / den):
        U = np.column_stack([v2, u, skew(v2) @ u])
        Hv2, Hu = H @ v2, H @ u
        W = np.column_stack([Hv2, Hu, skew(Hv2) @ Hu])
        R = W @ U.T
        N = skew(v2) @ u
        T = (H - R) @ N
        out.append((R, T, N))
        out.append((R, -T, -N))
    return out


def decompose_homography(H, src, dst) -> HomographyDecomposition:
    """Recover relative motion from a homography over normalized coordinates.

    Candidates are kept only if every correspondence has positive depth in
    both views; among the survivors the plane normal most directly facing
    the first camera is chosen.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    x1, x2 = _homogeneous(src), _homogeneous(dst)
    H = np.asarray(H, dtype=float)
    H = H / np.linalg.svd(H, compute_uv=False)[1]
    # sign so that dst is a positive multiple of H src
    if np.median(np.einsum("ij,ij->i", x2, x1 @ H.T)) < 0:
        H = -H

    best = None
    for R, T, N in homography_candidates(H):
        depth1 = x1 @ N  # proportional to 1 / Z1
        if np.any(depth1 <= 0):
            continue
        depth2 = (x1 @ (R + np.outer(T, N)).T)[:, 2]  # Z2 / Z1
        if np.any(depth2 <= 0):
            continue
        nz = N[2] / np.linalg.norm(N)
        if best is None or nz > best[0]:
            best = (nz, R, T, N)
    if best is None:
        raise NoValidSolution("no decomposition candidate passes the cheirality test")
    _, R, T, N = best
    tn, nn = np.linalg.norm(T), np.linalg.norm(N)
    if tn < 1e-12:
        raise NoValidSolution("translation vanishes")
    # fold the normal length into the ratio so that n is unit
    return HomographyDecomposition(R, T / tn, N / nn, float(tn * nn))


# ---------------------------------------------------------------------------
# Similarity alignment
# ---------------------------------------------------------------------------

@dataclass
class Sim3Transform:
    scale: float
    rotation: np.ndarray  # quaternion
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "Sim3Transform":
        return cls(1.0, quat_identity(), np.zeros(3))

    @property
    def R(self) -> np.ndarray:
        return quat_to_rot(self.rotation)

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=float) @ self.R.T + self.translation

    def apply_rotation(self, quats) -> np.ndarray:
        quats = np.atleast_2d(quats)
        return np.array([canonical(quat_mul(self.rotation, q)) for q in quats])

    def inverse(self) -> "Sim3Transform":
        Rinv = self.R.T
        return Sim3Transform(1.0 / self.scale, quat_conj(self.rotation),
                             -(Rinv @ self.translation) / self.scale)


def umeyama_sim3(est, ref) -> Sim3Transform:
    """Similarity transform minimizing ``sum |ref_i - (s R est_i + t)|^2``."""
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ValueError("point sets must have equal shapes")
    if len(est) < 3:
        raise DegenerateConfiguration("at least 3 point pairs are required")
    mu_e, mu_r = est.mean(axis=0), ref.mean(axis=0)
    e0, r0 = est - mu_e, ref - mu_r
    sv = np.linalg.svd(e0, compute_uv=False)
    if sv[1] <= 1e-10 * max(sv[0], 1e-300):
        raise DegenerateConfiguration("points are collinear")

    n = len(est)
    C = r0.T @ e0 / n
    U, D, Vt = np.linalg.svd(C)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    var_e = (e0 ** 2).sum() / n
    s = float(np.trace(np.diag(D) @ S) / var_e)
    t = mu_r - s * R @ mu_e
    return Sim3Transform(s, rot_to_quat(R), t)
