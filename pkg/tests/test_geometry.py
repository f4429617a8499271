import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asyncvo.errors import (DegenerateConfiguration, InsufficientParallax, NegativeDepth, NonPositiveDepth,
                            NoValidSolution)
from asyncvo.geometry import (CameraIntrinsics, Pose, Sim3Transform, apply_homography, canonical,
                              decompose_homography, estimate_homography, exp_so3, homography_candidates,
                              log_so3, project, projection_jacobians, quat_conj, quat_mul, quat_to_rot,
                              rot_to_quat, rots_to_quats, rotation_angle, skew, triangulate_two_view,
                              umeyama_sim3)

from conftest import point_in_front, random_pose

finite = st.floats(-3.0, 3.0, allow_nan=False)
vec3 = arrays(np.float64, 3, elements=finite)


def yaw(deg):
    return exp_so3([0.0, 0.0, np.deg2rad(deg)])


# -- SO(3) ------------------------------------------------------------------

def test_exp_identity_and_half_turn():
    np.testing.assert_allclose(exp_so3([0, 0, 0]), [1, 0, 0, 0], atol=0)
    np.testing.assert_allclose(exp_so3([np.pi, 0, 0]), [0, 1, 0, 0], atol=1e-15)


def test_log_examples():
    np.testing.assert_allclose(log_so3([1, 0, 0, 0]), 0, atol=0)
    np.testing.assert_allclose(log_so3([0, 0, 1, 0]), [0, np.pi, 0], atol=1e-15)
    np.testing.assert_allclose(log_so3(exp_so3([0.1, 0.2, 0.3])), [0.1, 0.2, 0.3], atol=1e-12)


@given(vec3)
def test_exp_log_round_trip(r):
    if np.linalg.norm(r) >= np.pi - 1e-3:
        r = r / np.linalg.norm(r) * (np.pi - 1e-2)
    q = exp_so3(r)
    assert abs(np.linalg.norm(q) - 1) < 1e-9
    assert q[0] >= 0
    np.testing.assert_allclose(log_so3(q), r, atol=1e-10)


@given(arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.1))
def test_double_cover_canonical(q):
    q = q / np.linalg.norm(q)
    np.testing.assert_allclose(quat_to_rot(q), quat_to_rot(-q), atol=1e-12)
    a, b = canonical(q), canonical(-q)
    assert a[0] >= 0
    if abs(q[0]) > 1e-9:
        np.testing.assert_allclose(a, b, atol=1e-15)


@given(vec3, vec3)
def test_quaternion_product_matches_matrices(a, b):
    qa, qb = exp_so3(a), exp_so3(b)
    np.testing.assert_allclose(quat_to_rot(quat_mul(qa, qb)), quat_to_rot(qa) @ quat_to_rot(qb), atol=1e-12)
    np.testing.assert_allclose(quat_to_rot(quat_mul(qa, quat_conj(qa))), np.eye(3), atol=1e-12)


def test_rot_to_quat_round_trip(rng):
    qs = np.array([exp_so3(rng.normal(0, 1.5, 3)) for _ in range(200)])
    for q in qs:
        np.testing.assert_allclose(rot_to_quat(quat_to_rot(q)), q, atol=1e-12)
    Rs = np.array([quat_to_rot(q) for q in qs])
    np.testing.assert_allclose(rots_to_quats(Rs), qs, atol=1e-12)


def test_rotation_angle():
    assert rotation_angle(quat_to_rot(exp_so3([0, 0.3, 0]))) == pytest.approx(0.3, abs=1e-12)


# -- projection -------------------------------------------------------------

def test_project_examples():
    intr = CameraIntrinsics(200, 200, 120, 120, 240, 240)
    ident = Pose.identity()
    np.testing.assert_allclose(project(intr, ident, [0, 0, 1]), [120, 120])
    np.testing.assert_allclose(project(intr, ident, [0.5, 0, 1]), [220, 120])


def test_project_yawed_pose_hand_computed():
    # camera axes in the global frame after a 90 deg yaw: x_c = y_g, y_c = -x_g, z_c = z_g
    intr = CameraIntrinsics(200, 200, 120, 120, 240, 240)
    pose = Pose([1.0, 2.0, 0.0], yaw(90))
    np.testing.assert_allclose(project(intr, pose, [1.0, 2.0, 2.0]), [120, 120], atol=1e-12)
    # camera-frame (0.2, 0, 2) sits at global p + 0.2 * y_g
    np.testing.assert_allclose(project(intr, pose, [1.0, 2.2, 2.0]), [140, 120], atol=1e-12)


def test_project_behind_camera(intr):
    with pytest.raises(NonPositiveDepth):
        project(intr, Pose.identity(), [0, 0, -1])
    with pytest.raises(NonPositiveDepth):
        projection_jacobians(intr, Pose.identity(), [0, 0, 1e-7])


def _fd_blocks(intr, pose, f, h=1e-6):
    Hp, Hr, Hf = np.zeros((2, 3)), np.zeros((2, 3)), np.zeros((2, 3))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        Hp[:, i] = (project(intr, pose.perturbed(e, 0 * e), f) - project(intr, pose.perturbed(-e, 0 * e), f)) / (2 * h)
        Hr[:, i] = (project(intr, pose.perturbed(0 * e, e), f) - project(intr, pose.perturbed(0 * e, -e), f)) / (2 * h)
        Hf[:, i] = (project(intr, pose, f + e) - project(intr, pose, f - e)) / (2 * h)
    return Hp, Hr, Hf


def test_projection_jacobians_vs_finite_differences(intr, rng):
    worst = 0.0
    for _ in range(1000):
        pose = random_pose(rng)
        f = point_in_front(rng, pose)
        for A, B in zip(projection_jacobians(intr, pose, f), _fd_blocks(intr, pose, f)):
            worst = max(worst, np.abs(A - B).max() / max(np.abs(B).max(), 1e-12))
    assert worst < 1e-5


def test_projection_jacobian_hand_cases(intr):
    Hp, Hr, Hf = projection_jacobians(intr, Pose.identity(), [0, 0, 2.0])
    assert Hp[0, 0] == pytest.approx(-intr.fx / 2.0)
    np.testing.assert_allclose(Hp, -Hf)


# -- triangulation ------------------------------------------------------------

def test_triangulate_exact(intr):
    a, b = Pose.identity(), Pose([1.0, 0, 0], [1, 0, 0, 0])
    X = np.array([0.0, 0.0, 5.0])
    got = triangulate_two_view(a, b, project(intr, a, X), project(intr, b, X), intr)
    np.testing.assert_allclose(got, X, atol=1e-9)


def test_triangulate_exact_random(intr, rng):
    for _ in range(200):
        a = random_pose(rng, rot_scale=0.2)
        X = point_in_front(rng, a, depth=(2, 5), spread=0.2)
        b = Pose(a.p + rng.normal(0, 0.5, 3), quat_mul(exp_so3(rng.normal(0, 0.05, 3)), a.q))
        try:
            za, zb = project(intr, a, X), project(intr, b, X)
        except NonPositiveDepth:
            continue
        da, db = X - a.p, X - b.p
        if np.arccos(da @ db / np.linalg.norm(da) / np.linalg.norm(db)) < np.deg2rad(1):
            continue
        np.testing.assert_allclose(triangulate_two_view(a, b, za, zb, intr), X, atol=1e-9)


def test_triangulate_noise_monte_carlo(intr, rng):
    a, b = Pose.identity(), Pose([1.0, 0, 0], [1, 0, 0, 0])
    X = np.array([0.0, 0.0, 5.0])
    za, zb = project(intr, a, X), project(intr, b, X)
    errs = [np.linalg.norm(triangulate_two_view(a, b, za + rng.normal(0, 1, 2), zb + rng.normal(0, 1, 2), intr) - X)
            for _ in range(2000)]
    # depth std ~ Z^2 sigma sqrt(2) / (f b) = 0.177 m; the bound is on the typical error
    assert np.median(errs) < 0.2


def test_triangulate_degenerate(intr):
    a = Pose.identity()
    with pytest.raises(InsufficientParallax):
        triangulate_two_view(a, a, [120, 90], [120, 90], intr)
    b = Pose([1.0, 0, 0], [1, 0, 0, 0])
    # rays diverging backwards: the intersection is behind both cameras
    with pytest.raises(NegativeDepth):
        triangulate_two_view(a, b, [100, 90], [140, 90], intr)


# -- homography ---------------------------------------------------------------

def _plane_scene(rng, R, t, n, d, count=30):
    """Points on n.X = d in view 1 and their images in both (normalized) views."""
    pts = []
    while len(pts) < count:
        x = np.array([rng.uniform(-0.6, 0.6), rng.uniform(-0.4, 0.4), 1.0])
        lam = d / (n @ x)
        if lam > 0:
            pts.append(lam * x)
    X1 = np.array(pts)
    X2 = X1 @ R.T + t
    return X1[:, :2] / X1[:, 2:], X2[:, :2] / X2[:, 2:]


def test_homography_exact_and_identity(rng):
    R = quat_to_rot(exp_so3([0.05, -0.1, 0.2]))
    t, n = np.array([0.3, -0.1, 0.05]), np.array([0.1, -0.2, 1.0]) / np.linalg.norm([0.1, -0.2, 1.0])
    src, dst = _plane_scene(rng, R, t, n, 3.0)
    H = estimate_homography(src, dst)
    assert np.abs(apply_homography(H, src) - dst).max() < 1e-9
    Hi = estimate_homography(src, src)
    np.testing.assert_allclose(Hi / Hi[2, 2], np.eye(3), atol=1e-9)


def test_homography_noise_transfer_error(intr, rng):
    R = quat_to_rot(exp_so3([0.02, 0.03, 0.1]))
    t, n = np.array([0.4, 0.1, 0.0]), np.array([0, 0, 1.0])
    errs = []
    for _ in range(50):
        s, d = _plane_scene(rng, R, t, n, 3.0, count=20)
        ps = s * [intr.fx, intr.fy] + [intr.cx, intr.cy] + rng.normal(0, 1, s.shape)
        pd = d * [intr.fx, intr.fy] + [intr.cx, intr.cy] + rng.normal(0, 1, d.shape)
        H = estimate_homography(ps, pd)
        fwd = np.linalg.norm(apply_homography(H, ps) - pd, axis=1)
        bwd = np.linalg.norm(apply_homography(np.linalg.inv(H), pd) - ps, axis=1)
        errs.append(np.median(0.5 * (fwd + bwd)))
    assert np.median(errs) < 2.0


def test_homography_too_few_points():
    with pytest.raises(DegenerateConfiguration):
        estimate_homography(np.zeros((3, 2)), np.zeros((3, 2)))


def test_decomposition_recovers_motion(rng):
    for _ in range(20):
        R = quat_to_rot(exp_so3(rng.normal(0, 0.1, 3)))
        t = rng.normal(0, 1, 3)
        t[2] *= 0.2
        t *= 0.4 / np.linalg.norm(t)
        n = np.array([*rng.normal(0, 0.15, 2), 1.0])
        n /= np.linalg.norm(n)
        d = rng.uniform(2, 5)
        src, dst = _plane_scene(rng, R, t, n, d)
        dec = decompose_homography(estimate_homography(src, dst), src, dst)
        assert rotation_angle(dec.rotation @ R.T) < 1e-6
        cosang = np.clip(dec.translation @ t / np.linalg.norm(t), -1, 1)
        assert np.arccos(cosang) < 1e-6
        assert dec.distance_ratio == pytest.approx(np.linalg.norm(t) / d, rel=1e-6)
        Hn = R + np.outer(t, n) / d
        Hr = dec.homography()
        Hn, Hr = Hn / np.linalg.norm(Hn), Hr / np.linalg.norm(Hr)
        assert min(np.linalg.norm(Hn - Hr), np.linalg.norm(Hn + Hr)) < 1e-6


def test_decomposition_candidates_reconstruct(rng):
    R = quat_to_rot(exp_so3([0.1, 0.0, -0.05]))
    H = R + np.outer([0.2, 0.1, 0.0], [0, 0, 0.5])
    for Rc, T, N in homography_candidates(H):
        np.testing.assert_allclose(Rc @ Rc.T, np.eye(3), atol=1e-10)
        Hs = H / np.linalg.svd(H, compute_uv=False)[1]
        np.testing.assert_allclose(Rc + np.outer(T, N), Hs, atol=1e-9)


def test_decomposition_pure_rotation():
    R = quat_to_rot(exp_so3([0.0, 0.1, 0.2]))
    pts = np.array([[0.1, 0.2], [-0.3, 0.1], [0.2, -0.25], [-0.1, -0.1], [0.3, 0.3]])
    with pytest.raises(NoValidSolution):
        homography_candidates(R)
    with pytest.raises(NoValidSolution):
        decompose_homography(np.eye(3), pts, pts)


# -- Umeyama ------------------------------------------------------------------

def test_umeyama_identity(rng):
    P = rng.normal(size=(20, 3))
    T = umeyama_sim3(P, P)
    assert T.scale == pytest.approx(1.0)
    np.testing.assert_allclose(T.apply(P), P, atol=1e-12)


def test_umeyama_recovers_inverse(rng):
    ref = rng.normal(size=(50, 3))
    fwd = Sim3Transform(0.5, yaw(90), np.array([1.0, 2.0, 3.0]))
    est = fwd.apply(ref)
    T = umeyama_sim3(est, ref)
    inv = fwd.inverse()
    assert T.scale == pytest.approx(inv.scale, rel=1e-12)
    assert np.abs(T.apply(est) - ref).max() < 1e-9
    np.testing.assert_allclose(T.translation, inv.translation, atol=1e-9)


def test_umeyama_degenerate():
    with pytest.raises(DegenerateConfiguration):
        umeyama_sim3(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 1, 0])
    with pytest.raises(DegenerateConfiguration):
        umeyama_sim3(line, line)


@settings(max_examples=50)
@given(vec3, vec3)
def test_umeyama_residual_rigid_invariance(r, t):
    rng = np.random.default_rng(7)
    ref = rng.normal(size=(15, 3))
    est = 1.7 * ref @ quat_to_rot(exp_so3([0.3, 0.1, 0.2])).T + rng.normal(0, 0.05, ref.shape)
    res0 = np.linalg.norm(umeyama_sim3(est, ref).apply(est) - ref, axis=1)
    G = Sim3Transform(1.0, exp_so3(r), t)
    e2, r2 = G.apply(est), G.apply(ref)
    res1 = np.linalg.norm(umeyama_sim3(e2, r2).apply(e2) - r2, axis=1)
    np.testing.assert_allclose(res0, res1, atol=1e-9)


def test_skew_is_cross_product(rng):
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)
