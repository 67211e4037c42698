"""Online multi-object association, embedding-loss math and MOT evaluation."""

from .association import INFEASIBLE, Assignment, appearance_cost, fuse_costs, motion_cost, solve_assignment
from .geometry import Box, iou
from .kalman import KalmanFilter, MotionState
from .metrics import MotReport, evaluate_clear, evaluate_idf1
from .sequence import SequenceResult
from .tracker import Detection, Tracker, TrackerConfig, TrackStatus, tracker_run

__version__ = "0.1.0"

__all__ = [
    "INFEASIBLE",
    "Assignment",
    "Box",
    "Detection",
    "KalmanFilter",
    "MotReport",
    "MotionState",
    "SequenceResult",
    "TrackStatus",
    "Tracker",
    "TrackerConfig",
    "appearance_cost",
    "evaluate_clear",
    "evaluate_idf1",
    "fuse_costs",
    "iou",
    "motion_cost",
    "solve_assignment",
    "tracker_run",
]
