"""Semidefinite search for instability certificates (R, phi_L).

A certificate is a trace-one PSD matrix R and a rate phi_L > 0 with

    A^T R + R A + sum_i C_i^T R C_i  >=  phi_L R,     tr(D^T R D) > 0,

which rules out bounded second moments for every adapted policy whose
time-averaged input power stays below phi_L tr(D^T R D) / lambda_max(B^T R B).

Every certificate leaving this module has been re-checked with plain
eigenvalue computations; solver status codes are never trusted.
"""
from __future__ import annotations

import json
import math
import os
import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

from .eigen import moment_abscissa
from .errors import MissingFError, ParseError, SolverError
from .linalg import DEFAULT_TOL, PsdTolerance, as_hermitian, lambda_max, psd_margin, trace_form
from .model import PowerConstraint, SystemModel

INSTABILIZABLE = "Instabilizable"
NOT_CERTIFIED = "NotCertified"

DEFAULT_GRID = 64
GRID_SPAN = 1e-3  # lowest grid point relative to the upper limit
TRACE_TOL = 1e-8
TRD_MIN = 1e-10
USTAR_RTOL = 1e-9
# relative phi reductions tried when a solver point misses the PSD tolerance
BACKOFF = (0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


def margin(model: SystemModel) -> float:
    """Slack used to encode the strict inequalities."""
    return 1e-8 * (1.0 + float(np.sum(model.D * model.D)))


def _beta_zero_tol(model: SystemModel) -> float:
    return 1e-12 * (1.0 + float(np.sum(model.B * model.B)))


def lyapunov_lhs(model: SystemModel, R) -> np.ndarray:
    """A^T R + R A + sum C_i^T R C_i, symmetrized."""
    A = model.A
    M = A.T @ R + R @ A
    for c in model.C:
        M = M + c.T @ R @ c
    return as_hermitian(M)


@dataclass
class InstabilityCertificate:
    R: np.ndarray
    phi_L: float
    beta_U: float
    u_star: float  # math.inf when beta_U == 0
    residuals: dict = field(default_factory=dict)
    model_digest: str | None = None

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.u_star)

    def to_dict(self) -> dict:
        return {
            "R": np.asarray(self.R).tolist(),
            "phi_L": self.phi_L,
            "beta_U": self.beta_U,
            "u_star": "unbounded" if self.unbounded else self.u_star,
            "residuals": self.residuals,
            "model_digest": self.model_digest,
        }

    @classmethod
    def from_dict(cls, doc) -> "InstabilityCertificate":
        try:
            u = doc["u_star"]
            u_star = math.inf if u == "unbounded" else float(u)
            return cls(
                R=np.array(doc["R"], dtype=float),
                phi_L=float(doc["phi_L"]),
                beta_U=float(doc["beta_U"]),
                u_star=u_star,
                residuals=dict(doc.get("residuals", {})),
                model_digest=doc.get("model_digest"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed certificate: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "InstabilityCertificate":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed certificate file: {exc}") from exc
        return cls.from_dict(doc)


@dataclass
class CertificateCheck:
    """Outcome of re-verifying a certificate against a model."""

    passed: bool
    failures: list
    residuals: dict


def verify_certificate(model: SystemModel, cert: InstabilityCertificate,
                       tol: PsdTolerance = DEFAULT_TOL) -> CertificateCheck:
    """Recompute every certificate invariant from scratch."""
    failures = []
    R = np.asarray(cert.R, dtype=float)
    if R.shape != (model.n, model.n):
        return CertificateCheck(False, [f"R has shape {R.shape}, expected {(model.n, model.n)}"], {})
    asym = float(np.max(np.abs(R - R.T))) if R.size else 0.0
    Rs = as_hermitian(R)
    res = {
        "asymmetry": asym,
        "psd_R": psd_margin(Rs, tol),
        "trace_err": abs(float(np.trace(Rs)) - 1.0),
        "eq6": psd_margin(lyapunov_lhs(model, Rs) - cert.phi_L * Rs, tol),
        "trDRD": trace_form(model.D, Rs),
    }
    beta = lambda_max(model.B.T @ Rs @ model.B)
    res["beta_U"] = beta
    if asym > 1e-12 * (1.0 + float(np.max(np.abs(R)))):
        failures.append("R is not symmetric")
    if not cert.phi_L > 0:
        failures.append("phi_L must be positive")
    if res["psd_R"] < 0:
        failures.append("R is not PSD")
    if res["trace_err"] > TRACE_TOL:
        failures.append("tr(R) != 1")
    if res["eq6"] < 0:
        failures.append("A^T R + R A + sum C^T R C - phi_L R is not PSD")
    if not res["trDRD"] >= TRD_MIN:
        failures.append("tr(D^T R D) is not positive")
    if abs(beta - cert.beta_U) > 1e-9 * (1.0 + abs(beta)):
        failures.append("stored beta_U does not match lambda_max(B^T R B)")
    if beta <= _beta_zero_tol(model):
        if not math.isinf(cert.u_star):
            failures.append("beta_U = 0 requires an unbounded threshold")
        res["u_star"] = math.inf
    else:
        u = cert.phi_L * res["trDRD"] / beta
        res["u_star"] = u
        if math.isinf(cert.u_star) or abs(u - cert.u_star) > USTAR_RTOL * (1.0 + abs(u)):
            failures.append("stored u_star does not match phi_L tr(D^T R D) / beta_U")
    return CertificateCheck(not failures, failures, res)


def _residual_summary(check: CertificateCheck) -> dict:
    r = check.residuals
    return {k: (None if isinstance(v, float) and math.isinf(v) else float(v))
            for k, v in r.items() if k != "u_star"}


def make_certificate(model: SystemModel, R, phi_L: float, *, remove_input: bool = False,
                     tol: PsdTolerance = DEFAULT_TOL) -> InstabilityCertificate | None:
    """Turn a raw solver matrix into a verified certificate, or None.

    R is projected onto the PSD cone and scaled to unit trace. With
    ``remove_input`` it is also compressed onto ker(B^T) so that R B = 0
    exactly. If the Lyapunov-type inequality misses the tolerance by a hair,
    phi_L is reduced in small relative steps before giving up.
    """
    if R is None or not np.all(np.isfinite(R)):
        return None
    R = as_hermitian(np.asarray(R, dtype=float))
    w, V = np.linalg.eigh(R)
    R = as_hermitian((V * np.clip(w, 0.0, None)) @ V.T)
    if remove_input:
        P = np.eye(model.n) - model.B @ np.linalg.pinv(model.B)
        R = as_hermitian(P @ R @ P)
    tr = float(np.trace(R))
    if not tr > 0:
        return None
    R = R / tr
    beta = lambda_max(model.B.T @ R @ model.B)
    trd = trace_form(model.D, R)
    if beta <= _beta_zero_tol(model):
        if not remove_input:
            return make_certificate(model, R, phi_L, remove_input=True, tol=tol)
        beta = 0.0
    for step in BACKOFF:
        phi = phi_L * (1.0 - step)
        if beta <= _beta_zero_tol(model):
            u = math.inf
        else:
            u = phi * trd / beta
        cert = InstabilityCertificate(R=R, phi_L=phi, beta_U=beta, u_star=u,
                                      model_digest=model.digest())
        chk = verify_certificate(model, cert, tol)
        if chk.passed:
            cert.residuals = _residual_summary(chk)
            return cert
        if "A^T R + R A + sum C^T R C - phi_L R is not PSD" not in chk.failures or len(chk.failures) > 1:
            return None
    return None


class CvxpyBackend:
    """Interior-point SDP backend via cvxpy; any SDP-capable solver name works.

    When the primary solver errors out (Clarabel occasionally does on
    degenerate points, e.g. at the optimal phi_L), the installed solvers in
    ``fallbacks`` are tried in order. Solutions are re-verified independently,
    so a less accurate fallback can only cost tightness, never soundness.
    """

    FALLBACKS = ("CVXOPT", "SCS")
    FALLBACK_OPTIONS = {"SCS": {"eps": 1e-9, "max_iters": 100000}}

    def __init__(self, solver: str = "CLARABEL", fallbacks=FALLBACKS, **options):
        self.solver = solver
        if not options and solver == "CLARABEL":
            options = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10,
                           tol_ktratio=1e-8, max_iter=200)
        self.options = options
        installed = set(cp.installed_solvers())
        self.fallbacks = tuple(f for f in fallbacks if f in installed and f != solver)

    def _attempts(self):
        yield self.solver, self.options
        for name in self.fallbacks:
            yield name, self.FALLBACK_OPTIONS.get(name, {})

    def solve(self, problem: cp.Problem) -> str:
        last = None
        for name, opts in self._attempts():
            try:
                with warnings.catch_warnings():
                    # inaccurate statuses are handled by independent re-verification
                    warnings.simplefilter("ignore", UserWarning)
                    # no warm start: each solve must not depend on the previous one,
                    # otherwise results would vary with the thread schedule
                    problem.solve(solver=name, warm_start=False, **opts)
            except cp.error.SolverError as exc:
                last = exc
                continue
            if problem.status is not None and problem.status != cp.SOLVER_ERROR:
                return problem.status
        raise SolverError(str(last) if last else "all SDP solvers failed")


class _Programs:
    """Parameterized SDPs for one model; phi_L (and u_hat) enter as parameters."""

    def __init__(self, model: SystemModel, backend: CvxpyBackend):
        self.model = model
        self.backend = backend
        n, m = model.n, model.m
        self.phi = cp.Parameter(nonneg=True)
        self.u_hat = cp.Parameter(nonneg=True)
        A, B, D = model.A, model.B, model.D

        def eq6(R):
            M = A.T @ R + R @ A
            for c in model.C:
                M = M + c.T @ R @ c
            M = M - self.phi * R
            return 0.5 * (M + M.T) >> 0

        trd = lambda R: cp.trace(D.T @ R @ D)  # noqa: E731
        eye_m = np.eye(m)

        # beta-bar fixed to 1, trace free: optimum * phi is the threshold at this phi
        self.R_max = cp.Variable((n, n), symmetric=True)
        BRB = B.T @ self.R_max @ B
        self.p_max = cp.Problem(cp.Maximize(trd(self.R_max)),
                                [self.R_max >> 0, eq6(self.R_max), 0.5 * (BRB + BRB.T) << eye_m])

        # R B = 0 branch
        self.R_aux = cp.Variable((n, n), symmetric=True)
        self.p_aux = cp.Problem(cp.Maximize(trd(self.R_aux)),
                                [self.R_aux >> 0, cp.trace(self.R_aux) == 1, eq6(self.R_aux),
                                 B.T @ self.R_aux @ B == 0])

        # feasibility at a given u_hat, posed as slack maximization
        self.R_feas = cp.Variable((n, n), symmetric=True)
        self.beta = cp.Variable(nonneg=True)
        BRBf = B.T @ self.R_feas @ B
        self.p_feas = cp.Problem(
            cp.Maximize(self.phi * trd(self.R_feas) - self.beta * self.u_hat),
            [self.R_feas >> 0, cp.trace(self.R_feas) == 1, eq6(self.R_feas),
             0.5 * (BRBf + BRBf.T) << self.beta * eye_m])

    def _run(self, prob, phi):
        try:
            status = self.backend.solve(prob)
        except SolverError as exc:
            raise SolverError(str(exc), phi_L=phi) from exc
        if status is None or status in (cp.SOLVER_ERROR,):
            raise SolverError(f"solver failed at phi_L={phi}", phi_L=phi)
        return status

    def max_trace(self, phi):
        """Return (status, objective, R) for the beta-bar = 1 program."""
        self.phi.value = phi
        status = self._run(self.p_max, phi)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return status, math.inf, None
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return status, float(self.p_max.value), self.R_max.value
        return status, None, None

    def zero_input(self, phi):
        self.phi.value = phi
        status = self._run(self.p_aux, phi)
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return status, float(self.p_aux.value), self.R_aux.value
        return status, None, None

    def feasible(self, phi, u_hat):
        self.phi.value = phi
        self.u_hat.value = u_hat
        status = self._run(self.p_feas, phi)
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return status, float(self.p_feas.value), self.R_feas.value
        return status, None, None


class LmiEngine:
    """Certificate search for one model.

    Programs are compiled once per thread and re-solved with new parameter
    values for each phi_L candidate.
    """

    def __init__(self, model: SystemModel, backend: CvxpyBackend | None = None,
                 threads: int | None = None, tol: PsdTolerance = DEFAULT_TOL):
        self.model = model
        self.backend = backend or CvxpyBackend()
        self.tol = tol
        if threads is None:
            threads = int(os.environ.get("INSTAB_THREADS", "1") or 1)
        self.threads = max(1, threads)
        self._local = threading.local()

    @property
    def programs(self) -> _Programs:
        progs = getattr(self._local, "programs", None)
        if progs is None:
            progs = self._local.programs = _Programs(self.model, self.backend)
        return progs

    def _map(self, fn, items):
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    # -- grid ----------------------------------------------------------------

    def phi_upper(self) -> tuple[float, bool]:
        """Upper limit of the phi_L search and whether it is heuristic.

        No certificate exists above the spectral abscissa of the moment
        operator, so that limit is rigorous with or without multiplicative noise.
        """
        return moment_abscissa(self.model), False

    def phi_grid(self, n_points: int = DEFAULT_GRID, phi_max: float | None = None) -> np.ndarray:
        top = self.phi_upper()[0] if phi_max is None else float(phi_max)
        if not top > 0:
            return np.empty(0)
        return np.geomspace(top * GRID_SPAN, top, n_points)

    # -- operations ----------------------------------------------------------

    def certify_at(self, u_hat, phi_L: float) -> InstabilityCertificate | None:
        if not phi_L > 0:
            raise ValueError("phi_L must be positive")
        u = PowerConstraint.parse(u_hat)
        model = self.model
        eps = margin(model)
        if u.unbounded:
            status, val, R = self.programs.zero_input(phi_L)
            if val is None or val < eps:
                return None
            cert = make_certificate(model, R, phi_L, remove_input=True, tol=self.tol)
            return cert if cert is not None and cert.unbounded else None
        status, val, R = self.programs.feasible(phi_L, u.u_hat)
        if val is None or val < eps:
            return None
        cert = make_certificate(model, R, phi_L, tol=self.tol)
        if cert is None or not cert.u_star > u.u_hat:
            return None
        if cert.residuals.get("trDRD", 0.0) < eps:
            return None
        return cert

    def certify(self, u_hat, n_points: int = DEFAULT_GRID, phi_max: float | None = None) -> "Verdict":
        grid = self.phi_grid(n_points, phi_max)
        searched = []
        if self.threads > 1:
            certs = self._map(lambda p: self.certify_at(u_hat, p), grid)
            for p, c in zip(grid, certs):
                searched.append(float(p))
                if c is not None:
                    return Verdict(INSTABILIZABLE, c, searched)
            return Verdict(NOT_CERTIFIED, None, searched)
        for p in grid:
            searched.append(float(p))
            c = self.certify_at(u_hat, float(p))
            if c is not None:
                return Verdict(INSTABILIZABLE, c, searched)
        return Verdict(NOT_CERTIFIED, None, searched)

    def _point(self, phi: float):
        """Solve the threshold program at phi; returns (value, certificate-or-None)."""
        model = self.model
        status, val, R = self.programs.max_trace(phi)
        big = 1e8 * (1.0 + float(np.sum(model.D * model.D)))
        if val is None:
            return 0.0, None
        if math.isinf(val) or val > big:
            _, aval, aR = self.programs.zero_input(phi)
            if aval is not None and aval >= margin(model):
                cert = make_certificate(model, aR, phi, remove_input=True, tol=self.tol)
                if cert is not None and cert.unbounded:
                    return math.inf, cert
            if math.isinf(val):
                return 0.0, None
        cert = make_certificate(model, R, phi, tol=self.tol)
        if cert is not None and cert.residuals.get("trDRD", 0.0) < margin(model):
            cert = None
        return phi * val, cert

    def max_threshold(self, n_points: int = DEFAULT_GRID, phi_max: float | None = None,
                      refine: bool = True, refine_tol: float = 1e-6) -> "ThresholdResult":
        grid = self.phi_grid(n_points, phi_max)
        upper, heuristic = self.phi_upper()
        if phi_max is not None:
            upper, heuristic = float(phi_max), True
        results = self._map(self._point, [float(p) for p in grid])
        searched = [float(p) for p in grid]
        points = list(zip(searched, results))

        for p, (val, cert) in points:
            if math.isinf(val) and cert is not None:
                return ThresholdResult(math.inf, cert, searched, upper, heuristic)

        if refine and len(points) >= 2:
            vals = [v for _, (v, _) in points]
            k = int(np.argmax(vals))
            if vals[k] > 0:
                lo = searched[max(k - 1, 0)]
                hi = searched[min(k + 1, len(searched) - 1)]
                points.extend(self._golden(lo, hi, refine_tol, searched))

        best = None
        for p, (val, cert) in points:
            if cert is None:
                continue
            if best is None or cert.u_star > best.u_star or (
                    cert.u_star == best.u_star and cert.phi_L < best.phi_L):
                best = cert
        if best is None:
            return ThresholdResult(0.0, None, searched, upper, heuristic)
        return ThresholdResult(best.u_star, best, searched, upper, heuristic)

    def _golden(self, lo, hi, rtol, searched):
        """Golden-section maximization of phi * value(phi) on [lo, hi]."""
        out = []
        g = (math.sqrt(5.0) - 1.0) / 2.0

        def f(p):
            r = self._point(p)
            out.append((p, r))
            searched.append(p)
            return r[0]

        a, b = lo, hi
        c, d = b - g * (b - a), a + g * (b - a)
        fc, fd = f(c), f(d)
        while (b - a) > rtol * b:
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - g * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + g * (b - a)
                fd = f(d)
        f(b)  # the upper end matters when the optimum sits on the grid limit
        return out


@dataclass
class Verdict:
    status: str
    certificate: InstabilityCertificate | None
    searched_phi: list

    @property
    def instabilizable(self) -> bool:
        return self.status == INSTABILIZABLE


@dataclass
class ThresholdResult:
    u_star: float  # math.inf for the unbounded branch; 0.0 when nothing was certified
    certificate: InstabilityCertificate | None
    searched_phi: list
    phi_max: float
    phi_max_heuristic: bool

    def __iter__(self):
        # allows ``u_star, cert = max_threshold(model)``
        return iter((self.u_star, self.certificate))


def certify_at(model: SystemModel, u_hat, phi_L: float, **kw) -> InstabilityCertificate | None:
    return LmiEngine(model, **kw).certify_at(u_hat, phi_L)


def certify(model: SystemModel, u_hat, n_points: int = DEFAULT_GRID,
            phi_max: float | None = None, **kw) -> Verdict:
    return LmiEngine(model, **kw).certify(u_hat, n_points, phi_max)


def max_threshold(model: SystemModel, n_points: int = DEFAULT_GRID,
                  phi_max: float | None = None, refine: bool = True, **kw) -> ThresholdResult:
    return LmiEngine(model, **kw).max_threshold(n_points, phi_max, refine)


def check_partial_constraint(model: SystemModel, cert: InstabilityCertificate) -> bool:
    """True iff R F = 0, which extends the verdict to an unconstrained input through F."""
    if model.F is None:
        raise MissingFError("model has no unconstrained-input matrix F")
    R = np.asarray(cert.R, dtype=float)
    F = model.F
    r_max = float(np.max(np.abs(R))) if R.size else 0.0
    f_max = float(np.max(np.abs(F))) if F.size else 0.0
    rf = float(np.max(np.abs(R @ F))) if F.size else 0.0
    return rf <= 1e-9 * (1.0 + r_max * f_max)
