"""Multi-target particle filtering with a drift-homotopy MCMC move step."""

from homotrack.dynamics import MotionConfig
from homotrack.homotopy import HomotopySchedule
from homotrack.observation import ObservationConfig, ObservationSet

__all__ = ["MotionConfig", "ObservationConfig", "ObservationSet", "HomotopySchedule"]

__version__ = "0.1.0"
