"""Simulation and control toolkit for Markovian open quantum systems.

Discrete-time quantum Markov chains with imperfect detection, Kraus-channel
machinery, quantum filters, Lyapunov measurement-based feedback, reservoir
stabilization, and continuous-time stochastic master equations with a
positivity-preserving integrator, all on truncated Fock/qubit spaces.
"""

from . import channels, cli, fock, photonbox, sme, trajectories  # noqa: F401
from .errors import (  # noqa: F401
    ConfigError,
    DegenerateOutcomeError,
    DimensionError,
    IncompatibleOutcomeError,
    InvalidModelError,
    InvalidPropagatorError,
    InvalidStateError,
    StepSizeError,
    TruncationOverflowError,
)

__version__ = "0.1.0"
