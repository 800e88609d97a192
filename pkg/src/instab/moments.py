"""Deterministic second-moment propagation and the exponential lower envelope.

Under u = Kx the matrix P(t) = E[x x^T] obeys the linear ODE

    P' = (A + BK) P + P (A + BK)^T + sum_i C_i P C_i^T + D D^T,

which is integrated here with an adaptive eighth-order Runge-Kutta scheme.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BlowupError, NumericalError, ThresholdError
from .model import SystemModel

OVERFLOW_CAP = 1e30


@dataclass(frozen=True)
class GronwallCurve:
    """h(t) = c0 e^{phi t} + (c1/phi)(e^{phi t} - 1)."""

    c0: float
    c1: float
    phi: float

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")

    def __call__(self, t):
        return gronwall_lower_bound(self, t)


def gronwall_lower_bound(curve: GronwallCurve, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    e = np.expm1(curve.phi * t)
    out = curve.c0 * (e + 1.0) + (curve.c1 / curve.phi) * e
    return float(out) if out.ndim == 0 else out


@dataclass
class MomentTrajectory:
    times: np.ndarray
    P: np.ndarray  # shape (len(times), n, n)
    EV: np.ndarray | None = None
    K: np.ndarray | None = None

    @property
    def mean_x2(self) -> np.ndarray:
        return np.trace(self.P, axis1=1, axis2=2)

    @property
    def mean_u2(self) -> np.ndarray:
        """E||u||^2 = tr(K P K^T); zero for the zero-input policy."""
        if self.K is None:
            return np.zeros(len(self.times))
        return np.einsum("ij,tjk,ik->t", self.K, self.P, self.K)

    def to_csv(self, path) -> None:
        n = self.P.shape[1]
        iu = np.triu_indices(n)
        header = ["t"] + [f"P_{i + 1}{j + 1}" for i, j in zip(*iu)] + ["EV"]
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k, t in enumerate(self.times):
                ev = "" if self.EV is None else repr(float(self.EV[k]))
                w.writerow([repr(float(t))] + [repr(float(x)) for x in self.P[k][iu]] + [ev])


def closed_loop(model: SystemModel, K=None) -> np.ndarray:
    if K is None:
        return np.array(model.A)
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape != (model.m, model.n):
        raise ValueError(f"gain must be {model.m}x{model.n}, got {K.shape}")
    return model.A + model.B @ K


def propagate_moments(model: SystemModel, K=None, x0=None, t_end: float = 1.0,
                      dt_out: float = 0.01, R=None, rtol: float = 1e-10, atol: float = 1e-13,
                      cap: float = OVERFLOW_CAP) -> MomentTrajectory:
    """Integrate the second-moment ODE from P(0) = x0 x0^T.

    ``K=None`` is the zero-input policy. Samples are taken at multiples of
    ``dt_out``. Raises BlowupError (with the partial trajectory) once any
    entry of P exceeds ``cap``.
    """
    if not dt_out > 0 or not t_end > 0:
        raise ValueError("t_end and dt_out must be positive")
    n = model.n
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    Acl = closed_loop(model, K)
    Cs = model.C
    Q = model.D @ model.D.T

    def rhs(_t, y):
        P = y.reshape(n, n)
        P = 0.5 * (P + P.T)
        dP = Acl @ P + P @ Acl.T + Q
        for c in Cs:
            dP = dP + c @ P @ c.T
        return (0.5 * (dP + dP.T)).ravel()

    def overflow(_t, y):
        return cap - np.max(np.abs(y))

    overflow.terminal = True

    steps = int(math.floor(t_end / dt_out + 1e-9))
    times = dt_out * np.arange(steps + 1)
    P0 = np.outer(x0, x0)
    sol = solve_ivp(rhs, (0.0, times[-1]), P0.ravel(), method="DOP853", t_eval=times,
                    rtol=rtol, atol=atol, events=overflow)
    if sol.status == -1:
        raise NumericalError(f"moment integration failed: {sol.message}")
    Ps = sol.y.T.reshape(-1, n, n)
    Ps = 0.5 * (Ps + np.transpose(Ps, (0, 2, 1)))
    EV = None if R is None else np.einsum("ij,tji->t", np.asarray(R, dtype=float), Ps)
    traj = MomentTrajectory(times=sol.t, P=Ps, EV=EV,
                            K=None if K is None else np.atleast_2d(np.asarray(K, dtype=float)))
    if sol.status == 1:
        raise BlowupError(f"second moment exceeded {cap:g} before t = {t_end}", trajectory=traj)
    return traj


def divergence_envelope(model: SystemModel, cert, u_hat: float, x0=None) -> GronwallCurve:
    """Exponential lower bound on E[x^T R x] valid for every admissible policy.

    Uses the explicit witness q = 2 kappa / (u_hat + kappa) with kappa the
    certified threshold; the resulting curve is valid but not the tightest
    member of its family.
    """
    R = np.asarray(cert.R, dtype=float)
    x0 = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).reshape(model.n)
    c0 = float(x0 @ R @ x0)
    trd = float(np.trace(model.D.T @ R @ model.D))
    if u_hat < 0:
        raise ValueError("u_hat must be nonnegative")
    if cert.beta_U == 0 or math.isinf(cert.u_star):
        return GronwallCurve(c0, trd, cert.phi_L)
    kappa = cert.u_star
    if not u_hat < kappa:
        raise ThresholdError(f"u_hat = {u_hat} is not below the certified threshold {kappa}")
    q = 2.0 * kappa / (u_hat + kappa)
    gamma = q / cert.phi_L
    c1 = trd - gamma * cert.beta_U * u_hat
    phi = cert.phi_L * (1.0 - 1.0 / q)
    return GronwallCurve(c0, c1, phi)
