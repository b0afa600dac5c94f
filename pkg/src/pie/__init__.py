"""Progressive editing with DDIM on synthetic worlds, with analytic oracles for exact checks."""

from .core import PieConfig, Trajectory, blend, pie_step, run_progression
from .ddim import denoise_from, forward_noise, inverse_step, invert, reverse_step, sample
from .oracle import GaussianWorldOracle
from .schedule import NoiseSchedule, anchored_schedule, linear_schedule

__all__ = ["PieConfig", "Trajectory", "blend", "pie_step", "run_progression", "denoise_from",
           "forward_noise", "inverse_step", "invert", "reverse_step", "sample",
           "GaussianWorldOracle", "NoiseSchedule", "anchored_schedule", "linear_schedule"]
__version__ = "0.1.0"
