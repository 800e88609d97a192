import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from instab.eigen import (
    eigen_entries, eigen_threshold, example1_analytic, left_eigenspaces, moment_abscissa,
    phi_grid_limit, vartheta_max,
)
from instab.errors import DomainError, NoUnstableNoisyMode, PreconditionError
from instab.model import SystemModel, van_der_pol

A_GRID = (0.1, 0.5, 1.0, 1.5, 2.5, 3.0)
D_GRID = (0.5, 1.0, 2.0)


def test_vartheta_examples():
    assert vartheta_max(np.zeros((2, 2))) == 0.0
    assert vartheta_max(np.array([[0, 1], [-1, 1.5]])) == pytest.approx(0.75, abs=1e-14)
    assert vartheta_max(np.diag([-1.0, 2.0])) == 2.0


def test_phi_grid_limit_examples():
    lim = phi_grid_limit(van_der_pol(1.5))
    assert lim.value == pytest.approx(1.5) and not lim.heuristic
    lim = phi_grid_limit(van_der_pol(1.5, 2, 2))
    assert lim.value == pytest.approx(9.5) and lim.heuristic
    assert phi_grid_limit(van_der_pol(-0.5)).value <= 0


def test_moment_abscissa_reduces_without_noise():
    m = van_der_pol(1.5)
    assert moment_abscissa(m) == pytest.approx(2 * vartheta_max(m.A), abs=1e-12)


def test_eigen_threshold_examples():
    u, entries = eigen_threshold(van_der_pol(1.5))
    assert u == pytest.approx(0.75, abs=1e-9)
    assert all(e.in_I for e in entries)
    u, _ = eigen_threshold(van_der_pol(3.0))
    assert u == pytest.approx(2.0, abs=1e-9)
    with pytest.raises(NoUnstableNoisyMode):
        eigen_threshold(van_der_pol(-0.5))
    with pytest.raises(PreconditionError):
        eigen_threshold(van_der_pol(1.5, 2, 2))


def test_analytic_examples():
    assert example1_analytic(1, 1) == 1.0
    assert example1_analytic(1.5, 2) == pytest.approx(3.0)
    assert example1_analytic(2, 1) == 0.0
    with pytest.raises(DomainError):
        example1_analytic(-0.1, 1)


@pytest.mark.parametrize("a", A_GRID)
@pytest.mark.parametrize("d", D_GRID)
def test_matches_analytic_grid(a, d):
    u, _ = eigen_threshold(van_der_pol(a, d=d))
    assert u == pytest.approx(example1_analytic(a, d), abs=1e-6)


def test_entry_invariants():
    A = np.array([[0.3, 1.0, 0.0], [-2.0, 0.4, 0.5], [0.0, 0.1, 0.7]])
    m = SystemModel(A, np.array([[1.0], [0.0], [1.0]]), (), np.array([[1.0], [0.5], [0.0]]))
    nA = np.linalg.norm(A, 2)
    for e in eigen_entries(m):
        v = e.v_ij
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert np.linalg.norm(A.T @ v - e.lambda_i * v) <= 1e-9 * (1 + nA)
        V = np.outer(v, v.conj())
        lhs = A.T @ V + V @ A
        np.testing.assert_allclose(lhs, 2 * e.lambda_i.real * V, atol=1e-8)
        assert e.in_I == (e.lambda_i.real > 0 and e.noise_energy > 0)


@given(st.floats(0.2, 4.0), st.floats(0.1, 3.0), st.floats(0.1, 5.0))
def test_d_scaling(a, d, c):
    u1, _ = eigen_threshold(van_der_pol(a, d=d))
    u2, _ = eigen_threshold(van_der_pol(a, d=c * d))
    assert u2 == pytest.approx(c * c * u1, rel=1e-9)


def test_repeated_eigenvalue_uses_eigenspace():
    # A = I: every vector is a left eigenvector; the best direction avoids B
    m = SystemModel(np.eye(2), np.array([[1.0], [0.0]]), (), np.array([[1.0], [1.0]]))
    assert len(left_eigenspaces(m.A)) == 1
    u, entries = eigen_threshold(m)
    assert u == np.inf
    assert any(e.eigenspace_optimized for e in entries)


def test_defective_eigenvalue():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    m = SystemModel(A, np.array([[0.0], [1.0]]), (), np.array([[1.0], [1.0]]))
    u, entries = eigen_threshold(m)
    # only the single true left eigenvector e2 exists: phi = 2 * 1 * 1 / 1
    assert u == pytest.approx(2.0)
