"""Deception exponents for biometric authentication with correlated side information."""

from .exponent import ExponentOptions, ExponentResult, deception_exponent, exponent_dual, exponent_sweep
from .oracle import DeceptionFunction, OracleResult, monte_carlo_success_rate, optimal_deception_prob
from .prob import DistortionSpec, JointPmf, TestChannel
from .rd import RDPoint, rd_curve, rd_side_info

__all__ = [
    "DeceptionFunction", "DistortionSpec", "ExponentOptions", "ExponentResult", "JointPmf", "OracleResult",
    "RDPoint", "TestChannel", "deception_exponent", "exponent_dual", "exponent_sweep",
    "monte_carlo_success_rate", "optimal_deception_prob", "rd_curve", "rd_side_info",
]
