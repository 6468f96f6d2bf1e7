"""Power, subcarrier and mode allocation for OFDM two-way decode-and-forward relaying."""

from .channel import ChannelConfig, generate_channels
from .solver import SolverOptions, solve
from .types import (Allocation, ChannelRealization, DualPoint, NodeGeometry, ProblemInstance,
                    Role, SolveOutcome)

__version__ = "0.1.0"

__all__ = ["Allocation", "ChannelConfig", "ChannelRealization", "DualPoint", "NodeGeometry",
           "ProblemInstance", "Role", "SolveOutcome", "SolverOptions", "generate_channels",
           "solve"]
