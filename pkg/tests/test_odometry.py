import numpy as np
import pytest

from asyncvo.config import RunConfig
from asyncvo.errors import NegativeDt
from asyncvo.eskf import TrackDeletion, TrackUpdate
from asyncvo.odometry import AsyncOdometry
from asyncvo.simulator import generate


def short_config(seconds=5.0, **noise):
    return RunConfig.model_validate({
        "simulator": {"seed": 2, "landmark_count": 2000, "trajectory": {"duration": seconds}},
        "noise": noise,
    })


@pytest.fixture(scope="module")
def short_run():
    cfg = short_config()
    sim = generate(cfg.simulator)
    odo = AsyncOdometry(cfg).run(sim.messages)
    return cfg, sim, odo


def test_initializes_and_routes(short_run):
    cfg, sim, odo = short_run
    assert odo.initialized
    init = [e for e in odo.events if e["type"] == "initialization"]
    assert len(init) == 1 and init[0]["landmarks"] >= cfg.bootstrap.min_correspondences
    st = odo.stats
    assert st.updates == st.accepted + st.gated + st.singular + st.behind_camera
    assert st.registered >= st.inserted + st.rejected
    assert st.bootstrap_messages > 0
    n_updates = sum(isinstance(m, TrackUpdate) for m in sim.messages)
    # every update before init went to the bootstrapper, every later one was routed once
    assert st.bootstrap_messages + st.updates + st.registered + st.capped <= n_updates
    s = odo.sm.state
    assert odo.sm.dim == 9 + 3 * s.n_landmarks + 6 * s.n_clones
    assert s.n_landmarks + s.n_clones <= cfg.landmarks.max_landmarks
    assert not set(s.landmark_ids) & set(s.clone_ids)


def test_trajectory_is_time_ordered(short_run):
    _, _, odo = short_run
    tr = odo.trajectory(with_covariance=True)
    assert len(tr) > 100
    assert np.all(np.diff(tr.t) > 0)
    assert tr.cov.shape == (len(tr), 6, 6)
    assert tr.t[0] >= odo.init_time


def test_timeline_matches_dimensions(short_run):
    _, _, odo = short_run
    t = [x[0] for x in odo.timeline]
    assert all(a <= b for a, b in zip(t, t[1:]))


def test_out_of_order_message_rejected():
    odo = AsyncOdometry(short_config())
    odo.process(TrackUpdate(1, 0.5, 10.0, 10.0))
    with pytest.raises(NegativeDt):
        odo.process(TrackUpdate(2, 0.4, 10.0, 10.0))


def test_tracking_failure_event():
    cfg = short_config(4.0)
    sim = generate(cfg.simulator)
    odo = AsyncOdometry(cfg).run(sim.messages)
    assert odo.initialized
    t = odo.t
    s = odo.sm.state
    odo.process(TrackDeletion(t, tuple(s.landmark_ids) + tuple(s.clone_ids)))
    assert s.n_landmarks == 0
    # new features that never gain parallax stay pending; nothing gets mapped
    for k in range(1, 200):
        odo.process(TrackUpdate(10_000_000 + k % 5, t + 0.005 * k, 100.0, 80.0))
    fails = [e for e in odo.events if e["type"] == "tracking_failure"]
    assert len(fails) == 1
    assert fails[0]["t"] - fails[0]["since"] >= cfg.tracking.failure_duration
