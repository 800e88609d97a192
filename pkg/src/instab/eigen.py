"""Solver-free bounds from the eigenstructure of A (additive-noise case)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DomainError, NoUnstableNoisyMode, NumericalError, PreconditionError
from .linalg import lambda_max
from .model import SystemModel


def vartheta_max(A) -> float:
    """Spectral abscissa max Re(spec(A))."""
    A = np.asarray(A, dtype=float)
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    return float(np.max(w.real))


def moment_operator(A, C=()) -> np.ndarray:
    """Matrix of R -> A^T R + R A + sum C_i^T R C_i acting on column-major vec(R)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    L = np.kron(eye, A.T) + np.kron(A.T, eye)
    for c in C:
        c = np.asarray(c, dtype=float)
        L += np.kron(c.T, c.T)
    return L


def moment_abscissa(model: SystemModel) -> float:
    """Largest phi for which A^T R + R A + sum C^T R C >= phi R admits R >= 0, R != 0.

    The operator above is resolvent-positive on the PSD cone, so any such
    (R, phi) forces its spectral abscissa to be at least phi. Without
    multiplicative noise this reduces to 2 * vartheta_max(A).
    """
    if model.additive_only:
        return 2.0 * vartheta_max(model.A)
    L = moment_operator(model.A, model.C)
    try:
        w = np.linalg.eigvals(L)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    return float(np.max(w.real))


@dataclass(frozen=True)
class GridLimit:
    value: float
    heuristic: bool


def phi_grid_limit(model: SystemModel) -> GridLimit:
    """Upper end of the phi_L search.

    Rigorous (2 * vartheta_max) without multiplicative noise; otherwise the
    heuristic 2 * vartheta_max + sum lambda_max(C_i^T C_i).
    """
    base = 2.0 * vartheta_max(model.A)
    if model.additive_only:
        return GridLimit(base, heuristic=False)
    extra = sum(lambda_max(c.T @ c) for c in model.C)
    return GridLimit(base + extra, heuristic=True)


@dataclass(frozen=True)
class EigenBoundEntry:
    lambda_i: complex
    v_ij: np.ndarray
    noise_energy: float
    beta_U_ij: float
    phi_ij: float  # math.inf when beta_U_ij == 0
    in_I: bool
    eigenspace_optimized: bool = False

    def to_json(self) -> dict:
        return {
            "lambda": [self.lambda_i.real, self.lambda_i.imag],
            "v": [[z.real, z.imag] for z in self.v_ij],
            "noise_energy": self.noise_energy,
            "beta_U": self.beta_U_ij,
            "phi": "unbounded" if math.isinf(self.phi_ij) else self.phi_ij,
            "in_I": self.in_I,
            "eigenspace_optimized": self.eigenspace_optimized,
        }


def normalize_vector(v) -> np.ndarray:
    """Unit norm with the first nonzero component rotated to be real positive."""
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    k = int(np.argmax(np.abs(v) > 1e-12))
    return v * (abs(v[k]) / v[k])


def _cluster(w, tol):
    groups = []
    for lam in w:
        for g in groups:
            if abs(lam - g[0]) <= tol:
                g.append(lam)
                break
        else:
            groups.append([lam])
    return [complex(np.mean(g)) for g in groups]


def left_eigenspaces(A) -> list[tuple[complex, np.ndarray]]:
    """Distinct eigenvalues of A paired with an orthonormal basis of ker(A^T - lambda I)."""
    A = np.asarray(A, dtype=float)
    norm = np.linalg.norm(A, 2) if A.size else 0.0
    tol = 1e-8 * (1.0 + norm)
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc
    out = []
    n = A.shape[0]
    for lam in _cluster(w, tol):
        M = A.T.astype(complex) - lam * np.eye(n)
        _, s, vh = np.linalg.svd(M)
        # geometric multiplicity; at least one vector since lam is an eigenvalue
        k = max(1, int(np.sum(s <= tol)))
        basis = vh[n - k:].conj().T
        out.append((lam, basis))
    return out


def _entry(lam, v, D, B, tiny_d, tiny_b, optimized=False) -> EigenBoundEntry:
    v = normalize_vector(v)
    dv = D.T @ v
    bv = B.T @ v
    noise = float(np.real(np.vdot(dv, dv)))
    beta = float(np.real(np.vdot(bv, bv)))  # lambda_max of the rank-one B^T v v* B
    in_I = lam.real > 0 and noise > tiny_d
    if beta <= tiny_b:
        phi = math.inf
    else:
        phi = 2.0 * lam.real * noise / beta
    return EigenBoundEntry(lam, v, noise, beta, phi, in_I, optimized)


def _eigenspace_best(lam, Q, D, B, tiny_d, tiny_b):
    """Maximize |D^T v|^2 / |B^T v|^2 over v in span(Q) (generalized Rayleigh quotient)."""
    N = Q.conj().T @ D @ D.T @ Q
    M = Q.conj().T @ B @ B.T @ Q
    N = 0.5 * (N + N.conj().T)
    M = 0.5 * (M + M.conj().T)
    mw, mv = np.linalg.eigh(M)
    null = mv[:, mw <= tiny_b]
    if null.shape[1]:
        nn = null.conj().T @ N @ null
        nw, nv = np.linalg.eigh(0.5 * (nn + nn.conj().T))
        if nw[-1] > tiny_d:
            return Q @ (null @ nv[:, -1])
    rng = mv[:, mw > tiny_b]
    if not rng.shape[1]:
        return None
    Nr = rng.conj().T @ N @ rng
    Mr = rng.conj().T @ M @ rng
    gw, gv = sla.eigh(0.5 * (Nr + Nr.conj().T), 0.5 * (Mr + Mr.conj().T))
    return Q @ (rng @ gv[:, -1])


def eigen_entries(model: SystemModel) -> list[EigenBoundEntry]:
    D, B = model.D, model.B
    tiny_d = 1e-14 * (1.0 + float(np.sum(D * D)))
    tiny_b = 1e-14 * (1.0 + float(np.sum(B * B)))
    entries = []
    for lam, Q in left_eigenspaces(model.A):
        for j in range(Q.shape[1]):
            entries.append(_entry(lam, Q[:, j], D, B, tiny_d, tiny_b))
        if Q.shape[1] > 1 and lam.real > 0:
            v = _eigenspace_best(lam, Q, D, B, tiny_d, tiny_b)
            if v is not None:
                entries.append(_entry(lam, v, D, B, tiny_d, tiny_b, optimized=True))
    return entries


def eigen_threshold(model: SystemModel) -> tuple[float, list[EigenBoundEntry]]:
    """Largest phi_ij over the unstable, noise-excited left eigenvectors.

    Any u_hat below the returned value forces the second moment to diverge.
    Returns ``math.inf`` when some entry in I has zero control authority.
    """
    if not model.additive_only:
        raise PreconditionError("eigenstructure bound requires no multiplicative noise")
    entries = eigen_entries(model)
    admissible = [e.phi_ij for e in entries if e.in_I]
    if not admissible:
        raise NoUnstableNoisyMode("no eigenvalue with Re > 0 has a noise-excited left eigenvector")
    return max(admissible), entries


def example1_analytic(a: float, d: float) -> float:
    """Closed-form eigenstructure threshold for the Van der Pol family without
    multiplicative noise."""
    if a < 0:
        raise DomainError("closed form covers a >= 0 only")
    if a < 2:
        return d * d * (2.0 - a) * a
    return 4.0 * d * d * (0.5 * a - 1.0)
