from .base import FilterSettings, Trajectory
from .wingrock import DelayTruth, PidGains, WingRockScenario, WingRockTruth
from .quadrotor import QuadrotorScenario, QuadTruth, SpiralReference, TrackingGains

__all__ = [
    "DelayTruth", "FilterSettings", "PidGains", "QuadTruth", "QuadrotorScenario",
    "SpiralReference", "TrackingGains", "Trajectory", "WingRockScenario", "WingRockTruth",
]
