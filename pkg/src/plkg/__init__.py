"""Joint secret-key-generation and data-rate beamforming sandbox.

Simulates a two-agent TDD MIMO link under an on/off eavesdropper, scores
beam choices with closed-form key and data rates, and trains a multi-agent
soft actor-critic policy (optionally fed by an LSTM adversary predictor).
"""

__version__ = "0.1.0"

from .channel import ChannelParams, ChannelState, EveMode
from .env import BeamEnv, BeamPair, EnvConfig, Observation
from .numerics import RngStream
from .rates import RateInputs, RateReport

__all__ = [
    "BeamEnv",
    "BeamPair",
    "ChannelParams",
    "ChannelState",
    "EnvConfig",
    "EveMode",
    "Observation",
    "RateInputs",
    "RateReport",
    "RngStream",
    "__version__",
]
