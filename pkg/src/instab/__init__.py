"""Certify impossibility of mean-square stabilization under input-power limits."""

__version__ = "0.1.0"

from .eigen import eigen_threshold, example1_analytic, moment_abscissa, phi_grid_limit, vartheta_max
from .lmi import (
    InstabilityCertificate,
    LmiEngine,
    Verdict,
    certify,
    certify_at,
    check_partial_constraint,
    max_threshold,
    verify_certificate,
)
from .model import PowerConstraint, SystemModel, load_model, save_model, validate
from .moments import GronwallCurve, divergence_envelope, gronwall_lower_bound, propagate_moments
from .noise import construct_noise
from .scalar import scalar_analyze
from .sim import Controller, SimConfig, audit_constraint, compare_to_oracle, simulate

__all__ = [
    "Controller", "GronwallCurve", "InstabilityCertificate", "LmiEngine", "PowerConstraint",
    "SimConfig", "SystemModel", "Verdict", "audit_constraint", "certify", "certify_at",
    "check_partial_constraint", "compare_to_oracle", "construct_noise", "divergence_envelope",
    "eigen_threshold", "example1_analytic", "gronwall_lower_bound", "load_model", "max_threshold",
    "moment_abscissa", "phi_grid_limit", "propagate_moments", "save_model", "scalar_analyze",
    "simulate", "validate", "vartheta_max",
]
