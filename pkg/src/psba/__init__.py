"""Exact and Monte-Carlo simulation of probabilistic swapped-Bell-state analysis (PSBA)."""

from .optics import AnalyzerConfig, AnalyzerEvent, PortPattern, Setup
from .protocol import (
    DecisionRule,
    EntanglementGroup,
    PhysicsMode,
    SCGPool,
    StatisticalCorrectionGroup,
    calibrate_rc,
    decode_bit,
    encode_bit,
    provision_scg_pool,
    receive_message,
    send_message,
    sorted_diagrams,
)
from .quantum import BellKind, JointState, MeasurementRecord, Outcome, bell_state
from .rng import Streams

__version__ = "0.1.0"

__all__ = [
    "AnalyzerConfig", "AnalyzerEvent", "BellKind", "DecisionRule", "EntanglementGroup", "JointState",
    "MeasurementRecord", "Outcome", "PhysicsMode", "PortPattern", "SCGPool", "Setup",
    "StatisticalCorrectionGroup", "Streams", "bell_state", "calibrate_rc", "decode_bit", "encode_bit",
    "provision_scg_pool", "receive_message", "send_message", "sorted_diagrams",
]
