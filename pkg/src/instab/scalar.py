"""Exact analysis of scalar systems dx = (Ax + Bu) dt + C1 x dW1 + D dW2."""
from __future__ import annotations

import math
from dataclasses import dataclass

TIGHT = "TightThreshold"
STABLE = "StableWithoutControl"
MARGINAL = "MarginalSmallGain"
UNCONTROLLABLE = "UncontrollableDivergent"

ZERO_TOL = 1e-12
DEFAULT_K0 = 1e-3


@dataclass(frozen=True)
class ScalarVerdict:
    regime: str
    growth: float  # 2A + C1^2
    u_threshold: float | None = None
    K: float | None = None
    bound_sup_Ex2: float | None = None
    input_bound: float | None = None  # guaranteed sup_t E[u^2] under K from x0 = 0

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def scalar_analyze(A: float, B: float, C1: float, D: float, k0: float = DEFAULT_K0) -> ScalarVerdict:
    """Classify a scalar system by the sign of 2A + C1^2.

    For 2A + C1^2 > 0 with B, D nonzero the instabilizability threshold
    (2A + C1^2) D^2 / B^2 is tight: the gain K = -(2A + C1^2)/B keeps
    E[x^2] <= D^2 / (2A + C1^2) from x0 = 0 using exactly that much power.
    """
    vals = (A, B, C1, D)
    if not all(math.isfinite(v) for v in vals):
        raise ValueError("scalar inputs must be finite")
    g = 2.0 * A + C1 * C1
    if abs(g) <= ZERO_TOL:
        if B != 0:
            K = -math.copysign(k0, B)
            return ScalarVerdict(MARGINAL, g, K=K, input_bound=-0.5 * D * D * K / B)
        if D != 0:
            return ScalarVerdict(UNCONTROLLABLE, g)
        # no drift growth, no forcing: E[x^2] stays at x0^2
        return ScalarVerdict(STABLE, g, bound_sup_Ex2=0.0)
    if g < 0:
        return ScalarVerdict(STABLE, g, bound_sup_Ex2=D * D / -g)
    if B == 0:
        # no control authority; the certificate threshold is unbounded
        return ScalarVerdict(UNCONTROLLABLE, g)
    if D == 0:
        # without additive noise x0 = 0 stays at zero; the threshold is zero
        return ScalarVerdict(TIGHT, g, u_threshold=0.0, K=-g / B, bound_sup_Ex2=0.0, input_bound=0.0)
    u = g * D * D / (B * B)
    return ScalarVerdict(TIGHT, g, u_threshold=u, K=-g / B, bound_sup_Ex2=D * D / g, input_bound=u)
