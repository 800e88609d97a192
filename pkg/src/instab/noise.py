"""Construct an additive-noise matrix that makes a given certificate pair bite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankError, ToleranceError
from .linalg import as_hermitian, hermitian_eig, lambda_max


@dataclass(frozen=True)
class NoiseConstruction:
    D: np.ndarray
    alpha: float
    i_tilde: int  # zero-based, eigenvalues sorted descending
    j_tilde: int  # zero-based
    mu_tilde: float
    xi_entry: float  # |xi_{i~, j~}|
    beta_U: float
    trace_value: float  # tr(D^T R D)
    required: float  # alpha + u_hat * beta_U / phi_L


def default_alpha(R, B, u_hat: float, phi_L: float) -> float:
    beta = lambda_max(np.asarray(B).T @ np.asarray(R) @ np.asarray(B))
    return 1e-2 * (1.0 + u_hat * beta / phi_L)


def construct_noise(R, B, u_hat: float, phi_L: float, alpha: float | None = None,
                    ell2: int = 1) -> NoiseConstruction:
    """Single-entry D with tr(D^T R D) >= alpha + u_hat * beta_U / phi_L.

    Picks the leading eigenpair (mu, xi) of R and the first non-negligible
    component j of xi, then sets D[j, 0] = sqrt(required) / (sqrt(mu) |xi_j|).
    """
    if not phi_L > 0:
        raise ValueError("phi_L must be positive")
    if u_hat < 0:
        raise ValueError("u_hat must be nonnegative")
    if ell2 < 1:
        raise ValueError("ell2 must be at least 1")
    R = as_hermitian(R)
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    mu, Xi = hermitian_eig(R)
    scale = float(np.max(np.abs(mu))) if mu.size else 0.0
    if not scale > 0 or mu[0] <= 1e-14 * scale:
        raise RankError("R is numerically zero")
    if alpha is None:
        alpha = default_alpha(R, B, u_hat, phi_L)
    if not alpha > 0:
        raise ValueError("alpha must be positive")

    i = 0  # descending order: the first eigenvalue is positive whenever R != 0
    xi = Xi[:, i]
    mags = np.abs(xi)
    j = int(np.argmax(mags > 1e-12 * np.linalg.norm(xi)))
    beta = max(lambda_max(B.T @ R @ B), 0.0)
    required = alpha + u_hat * beta / phi_L
    n = R.shape[0]
    D = np.zeros((n, ell2))
    D[j, 0] = np.sqrt(required) / (np.sqrt(mu[i]) * mags[j])

    tr = float(np.real(np.trace(D.T @ R @ D)))
    if tr < required * (1.0 - 1e-10):
        raise ToleranceError(f"tr(D^T R D) = {tr} falls short of {required}")
    if beta > 0 and not tr > u_hat * beta / phi_L:
        raise ToleranceError("constructed noise does not exceed the threshold")
    return NoiseConstruction(D=D, alpha=float(alpha), i_tilde=i, j_tilde=j, mu_tilde=float(mu[i]),
                             xi_entry=float(mags[j]), beta_U=float(beta), trace_value=tr,
                             required=float(required))
