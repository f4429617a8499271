"""Asynchronous monocular visual odometry with an error-state Kalman filter.

Each feature-track sample corrects the filter the moment it arrives; there
are no frames or keyframes.
"""

from .config import RunConfig, load_config
from .errors import VOError
from .eskf import TrackDeletion, TrackUpdate, propagate, update, update_batch
from .evaluation import Trajectory, ape_sim3, nees
from .geometry import CameraIntrinsics, Pose
from .odometry import AsyncOdometry
from .simulator import generate
from .state import FilterState, StateManager

__version__ = "0.1.0"

__all__ = [
    "AsyncOdometry", "CameraIntrinsics", "FilterState", "Pose", "RunConfig", "StateManager",
    "TrackDeletion", "TrackUpdate", "Trajectory", "VOError", "ape_sim3", "generate", "load_config",
    "nees", "propagate", "update", "update_batch",
]
