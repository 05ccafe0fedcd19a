"""Numerical laboratory for moments of the parabolic Anderson model.

Modules
-------
model         covariance model, scaling laws and rate calculators
variational   the space-time variational constant
feynman_kac   Monte Carlo moments through the Feynman-Kac formula
chaos         truncated chaos expansion, Mehler action, hypercontractivity
cli           the ``pamlab`` command
"""

from .kernels import BACKEND
from .model import (CovarianceModel, DegenerateInputError, EngineError, ResourceCapError,
                    SingularityError, escaling, hypercontract_map, lyapunov_prediction,
                    q_of_tau, time_rate_exponent, white_noise_rate)

__version__ = "0.1.0"

__all__ = ["BACKEND", "CovarianceModel", "DegenerateInputError", "EngineError",
           "ResourceCapError", "SingularityError", "escaling", "hypercontract_map",
           "lyapunov_prediction", "q_of_tau", "time_rate_exponent", "white_noise_rate"]
