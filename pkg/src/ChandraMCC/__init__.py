"""ChandraMCC - fast maximum correntropy Kalman filtering.

ChandraMCC implements the classical Kalman filter, the improved maximum
correntropy Kalman filter (IMCC-KF) in Riccati and two-stage form, and four
Chandrasekhar-type IMCC-KF variants that propagate a low-rank factorization
of the covariance difference instead of the covariance itself. A seeded
Monte-Carlo harness compares them on a satellite-tracking model under
impulsive noise.

Example:
    Run one filter on a simulated trajectory::

        from ChandraMCC import FilterSpec, run_filter, satellite_model, simulate

        model = satellite_model(0.63e-2)
        traj = simulate(model, 300, seed=7)
        out = run_filter(model, traj, FilterSpec("alg2"))

Or from command line::

    chandramcc bench --runs 50
"""

from __future__ import annotations

try:
    from ._version import __version__
except ImportError:
    # Fallback if package is not installed in development mode
    __version__ = "0.0.0+dev"

from .core import FilterOutput, FilterSpec, run_filter
from .filters import KernelStrategy
from .main import main
from .statespace import LtiModel, ShotNoiseSpec, Trajectory, satellite_model, simulate

__all__ = [
    "main",
    "__version__",
    "FilterOutput",
    "FilterSpec",
    "run_filter",
    "KernelStrategy",
    "LtiModel",
    "ShotNoiseSpec",
    "Trajectory",
    "satellite_model",
    "simulate",
]
