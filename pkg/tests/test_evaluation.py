import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asyncvo.errors import NoOverlap
from asyncvo.evaluation import Trajectory, ape_sim3, associate, nees
from asyncvo.geometry import Sim3Transform, exp_so3, quat_mul, quat_to_rot


def helix(n=200, t0=0.0, dt=0.01):
    t = t0 + dt * np.arange(n)
    p = np.column_stack([np.cos(t), np.sin(t), 0.3 * t])
    q = np.array([exp_so3([0.1 * np.sin(s), 0.2 * s, 0.05]) for s in t])
    return Trajectory(t, p, q)


def brute_force_associate(est_t, ref_t, max_dt):
    # same greedy rule written directly over all pairs
    cands = sorted((abs(a - b), i, k) for i, a in enumerate(est_t) for k, b in enumerate(ref_t) if abs(a - b) <= max_dt)
    ue, ur, out = set(), set(), []
    for _, i, k in cands:
        if i not in ue and k not in ur:
            ue.add(i)
            ur.add(k)
            out.append((i, k))
    return sorted(out)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 400), min_size=1, max_size=25, unique=True),
       st.lists(st.integers(0, 400), min_size=1, max_size=25, unique=True),
       st.integers(0, 30))
def test_association_matches_brute_force(a, b, tol):
    # integer milliseconds keep ties exact
    est_t, ref_t = np.sort(a) * 1e-3, np.sort(b) * 1e-3
    est = Trajectory(est_t, np.zeros((len(a), 3)), np.tile([1.0, 0, 0, 0], (len(a), 1)))
    ref = Trajectory(ref_t, np.zeros((len(b), 3)), np.tile([1.0, 0, 0, 0], (len(b), 1)))
    want = brute_force_associate(est_t, ref_t, tol * 1e-3 + 1e-12)
    if not want:
        with pytest.raises(NoOverlap):
            associate(est, ref, tol * 1e-3 + 1e-12)
        return
    got = associate(est, ref, tol * 1e-3 + 1e-12)
    # ties can break either way; the matched count and total offset must agree
    assert len(got) == len(want)
    assert sum(abs(est_t[i] - ref_t[k]) for i, k in got) == pytest.approx(
        sum(abs(est_t[i] - ref_t[k]) for i, k in want), abs=1e-12)


def test_no_overlap_names_both_ranges():
    a = helix(50)
    b = helix(50, t0=10.0)
    with pytest.raises(NoOverlap) as err:
        ape_sim3(a, b)
    msg = str(err.value)
    assert "0.000000" in msg and "10.000000" in msg


def test_ape_identity_is_zero():
    a = helix()
    rep = ape_sim3(a, a)
    assert rep.mean < 1e-12 and rep.max < 1e-12
    assert rep.count == len(a)
    assert rep.alignment.scale == pytest.approx(1.0)


def test_ape_removes_similarity():
    ref = helix()
    T = Sim3Transform(0.37, exp_so3([0.4, -1.0, 2.0]), np.array([5.0, -2.0, 1.0]))
    est = ref.transformed(T)
    rep = ape_sim3(est, ref)
    assert rep.max < 1e-9
    assert rep.alignment.scale == pytest.approx(1 / 0.37)
    np.testing.assert_allclose(rep.aligned.q, ref.q, atol=1e-9)


def test_ape_closed_form_four_points():
    # unit square with a saddle offset of +-h along z: no rotation helps, the scale shrinks
    ref_p = np.array([[1.0, 1, 0], [-1, 1, 0], [-1, -1, 0], [1, -1, 0]])
    h = 0.1
    est_p = ref_p + np.array([[0, 0, h], [0, 0, -h], [0, 0, h], [0, 0, -h]])
    q = np.tile([1.0, 0, 0, 0], (4, 1))
    t = np.arange(4.0)
    rep = ape_sim3(Trajectory(t, est_p, q), Trajectory(t, ref_p, q))
    assert rep.alignment.scale == pytest.approx(2.0 / (2.0 + h ** 2), rel=1e-12)
    want = h * np.sqrt(2.0) / np.sqrt(2.0 + h ** 2)
    np.testing.assert_allclose(rep.residuals, want, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10.0), st.integers(0, 1000))
def test_ape_invariant_to_reference_frame(scale, seed):
    rng = np.random.default_rng(seed)
    ref = helix(60)
    est = Trajectory(ref.t, ref.p + rng.normal(0, 0.05, ref.p.shape), ref.q)
    base = ape_sim3(est, ref).residuals
    T = Sim3Transform(1.0, exp_so3(rng.normal(size=3)), rng.normal(size=3) * 10)
    moved = ape_sim3(est, ref.transformed(T)).residuals
    np.testing.assert_allclose(moved, base, atol=1e-9)
    # rescaling the estimate changes nothing either
    rescaled = ape_sim3(est.transformed(Sim3Transform(scale, exp_so3([0, 0, 0]), np.zeros(3))), ref).residuals
    np.testing.assert_allclose(rescaled, base, atol=1e-9)


def with_cov(traj, cov):
    return Trajectory(traj.t, traj.p, traj.q, np.repeat(cov[None], len(traj), axis=0))


def test_nees_zero_error():
    ref = helix(30)
    rep = nees(with_cov(ref, np.eye(6)), ref, align=False)
    assert rep.average == pytest.approx(0.0, abs=1e-20)


def test_nees_unit_errors_give_six():
    ref = helix(30)
    est = Trajectory(ref.t, ref.p - 0.1, ref.q)
    # error of 0.1 on each position axis with variance 0.01/2 per axis -> 3 * 2 = 6
    cov = np.diag([0.005] * 3 + [1.0] * 3)
    rep = nees(with_cov(est, cov), ref, align=False)
    np.testing.assert_allclose(rep.per_sample, 6.0)


def test_nees_monte_carlo_mean():
    rng = np.random.default_rng(11)
    ref = helix(400)
    A = rng.normal(size=(6, 6))
    cov = 1e-4 * (A @ A.T + 0.5 * np.eye(6))
    L = np.linalg.cholesky(cov)
    err = rng.normal(size=(len(ref), 6)) @ L.T
    p = ref.p - err[:, :3]
    q = np.array([
        # truth = exp(e) * est  =>  est = exp(-e) * truth
        quat_mul(exp_so3(-e[3:]), qr)
        for e, qr in zip(err, ref.q)])
    rep = nees(with_cov(Trajectory(ref.t, p, q), cov), ref, align=False)
    assert 5.2 <= rep.average <= 6.9
    assert rep.consistent


def test_transformed_rotates_covariance():
    ref = helix(5)
    cov = np.diag([1.0, 2.0, 3.0, 0.1, 0.2, 0.3])
    T = Sim3Transform(2.0, exp_so3([0, 0, np.pi / 2]), np.zeros(3))
    out = with_cov(ref, cov).transformed(T)
    R = quat_to_rot(T.rotation)
    np.testing.assert_allclose(out.cov[0][:3, :3], 4.0 * R @ np.diag([1.0, 2, 3]) @ R.T, atol=1e-12)
    np.testing.assert_allclose(np.diag(out.cov[0])[:3], [8.0, 4.0, 12.0], atol=1e-12)


def test_ape_statistics_invariant_to_estimate_similarity():
    rng = np.random.default_rng(2)
    ref = helix(80)
    est = Trajectory(ref.t, ref.p + rng.normal(0, 0.05, ref.p.shape), ref.q)
    a = ape_sim3(est, ref)
    T = Sim3Transform(3.3, exp_so3([0.3, 2.0, -1.0]), np.array([-4.0, 1.0, 9.0]))
    b = ape_sim3(est.transformed(T), ref)
    for k in ("ape_mean_m", "ape_rmse_m", "ape_median_m", "ape_max_m", "ape_std_m"):
        assert b.to_dict()[k] == pytest.approx(a.to_dict()[k], abs=1e-9)
    assert np.all(a.residuals >= 0)
    assert a.max >= a.rmse >= 0 and a.max >= a.median >= 0 and a.count > 0
    assert a.rmse ** 2 == pytest.approx(np.mean(a.residuals ** 2), abs=1e-12)


def test_nees_of_consistent_toy_filter():
    """Random-walk pose with direct noisy observations; 500 independent Kalman runs."""
    rng = np.random.default_rng(21)
    Qd, Rd = 1e-4, 4e-4
    runs, steps = 500, 20
    t = 0.1 * np.arange(runs)
    est_p, ref_p, est_q, ref_q, covs = [], [], [], [], []
    for _ in range(runs):
        x = np.zeros(6)
        m, P = np.zeros(6), 1e-2 * np.eye(6)
        x = x + rng.normal(0, 0.1, 6)
        for _ in range(steps):
            x = x + rng.normal(0, np.sqrt(Qd), 6)
            P = P + Qd * np.eye(6)
            z = x + rng.normal(0, np.sqrt(Rd), 6)
            K = P @ np.linalg.inv(P + Rd * np.eye(6))
            m = m + K @ (z - m)
            P = (np.eye(6) - K) @ P
        ref_p.append(x[:3])
        ref_q.append(exp_so3(x[3:]))
        est_p.append(m[:3])
        # orientation error truth (-) estimate equals x - m to first order
        est_q.append(quat_mul(exp_so3(m[3:] - x[3:]), exp_so3(x[3:])))
        covs.append(P)
    est = Trajectory(t, est_p, est_q, np.array(covs))
    ref = Trajectory(t, ref_p, ref_q)
    rep = nees(est, ref, max_dt=1e-6, align=False)
    assert 5.2 <= rep.average <= 6.9
