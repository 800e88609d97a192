"""Hermitian eigen-utilities and PSD tests with explicit tolerances."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError


@dataclass(frozen=True)
class PsdTolerance:
    """Absolute plus relative (to the largest |eigenvalue|) slack for PSD tests."""

    eps_abs: float = 1e-9
    eps_rel: float = 1e-9

    def __post_init__(self):
        if not (self.eps_abs >= 0 and self.eps_rel >= 0):
            raise ValueError("PSD tolerances must be nonnegative")


DEFAULT_TOL = PsdTolerance()


def as_hermitian(H) -> np.ndarray:
    """Return (H + H*)/2 as a real array when H is real, complex otherwise."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if np.iscomplexobj(H):
        return 0.5 * (H + H.conj().T)
    return 0.5 * (H + H.T).astype(float)


def eigvalsh(H) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix in descending order."""
    try:
        w = np.linalg.eigvalsh(as_hermitian(H))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    return w[::-1]


def hermitian_eig(H) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and orthonormal eigenvector columns of H."""
    try:
        w, V = np.linalg.eigh(as_hermitian(H))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    return w[::-1], V[:, ::-1]


def lambda_max(H) -> float:
    H = np.asarray(H)
    if H.size == 0:
        return 0.0
    # same routine as hermitian_eig so the two agree bit for bit
    return float(hermitian_eig(H)[0][0])


def psd_margin(H, tol: PsdTolerance = DEFAULT_TOL) -> float:
    """Smallest eigenvalue plus the allowed slack; nonnegative iff H passes."""
    w = eigvalsh(H)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    return float(w[-1]) + tol.eps_abs + tol.eps_rel * scale


def is_psd(H, tol: PsdTolerance = DEFAULT_TOL) -> bool:
    if np.asarray(H).size == 0:
        return True
    return psd_margin(H, tol) >= 0.0


def trace_form(D, R) -> float:
    """tr(D^T R D) for real D; real part of tr(D* R D) otherwise."""
    D = np.asarray(D)
    return float(np.real(np.trace(D.conj().T @ np.asarray(R) @ D)))


def nearest_psd(R) -> np.ndarray:
    """Clip negative eigenvalues of a symmetric matrix to zero."""
    w, V = hermitian_eig(R)
    w = np.clip(w, 0.0, None)
    out = (V * w) @ V.conj().T
    return as_hermitian(out)
