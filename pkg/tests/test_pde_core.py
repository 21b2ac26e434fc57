import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from landislab.geometry import build_domain, discretize
from landislab.pde_core import (
    CoefficientSet, PiecewiseConstantField, SolverError, SparseOperator, assemble, choose_scheme,
    dense_oracle_solve, gradient, sample, scaled_residual, solve,
)
from conftest import interval_closed_form


def test_laplacian_stencil():
    g = discretize(build_domain({"kind": "interval", "a": 0.0, "b": 2.0}), 0.5)
    A = assemble(g, CoefficientSet.from_grid(g)).matrix.toarray()
    assert np.array_equal(A[2], [0, -4, 8, -4, 0])
    assert A[0, 0] == 1 and A[-1, -1] == 1


def test_potential_on_diagonal(unit_interval):
    g = discretize(unit_interval, 0.1)
    A = assemble(g, CoefficientSet.from_grid(g, V=1.0)).matrix
    assert np.allclose(A.diagonal()[g.interior], 2 / 0.01 + 1)


@pytest.mark.parametrize("h", [0.1, 0.05])
def test_constants_in_kernel(unit_disk, h):
    g = discretize(unit_disk, h)
    A = assemble(g, CoefficientSet.from_grid(g, W=[0.7, -0.2])).matrix
    assert np.abs((A @ np.ones(g.n))[g.interior]).max() < 1e-9


def test_identity_operator(unit_interval):
    g = discretize(unit_interval, 0.1)
    op = SparseOperator(sp.identity(g.n, format="csr"), "dirichlet", g, "centered")
    rhs = np.random.default_rng(0).normal(size=g.n)
    assert np.allclose(solve(op, rhs, method="bicgstab").x, rhs)


def test_interval_closed_form(interval_grid):
    g = interval_grid
    op = assemble(g, CoefficientSet.from_grid(g, F=1.0))
    rhs = np.where(g.interior, 1.0, 0.0)
    x = g.points[:, 0]
    assert np.abs(solve(op, rhs).x - interval_closed_form(x)).max() < 1e-6


def test_neumann_gauge(unit_interval):
    g = discretize(unit_interval, 0.01)
    F = np.cos(np.pi * g.points[:, 0])
    op = assemble(g, CoefficientSet(np.zeros((g.n, 1)), np.zeros(g.n), F), bc="neumann")
    assert op.singular
    rhs = np.where(g.interior, F, 0.0)
    res = solve(op, rhs)
    assert res.gauge is not None and abs(res.x[res.gauge]) < 1e-12
    diff = res.x - F / np.pi ** 2
    assert np.ptp(diff) < 1e-3


def test_dense_oracle_hand_example():
    A = sp.csr_matrix([[2.0, -1.0], [-1.0, 2.0]])
    assert np.allclose(dense_oracle_solve(A, [1.0, 1.0]), [1.0, 1.0])


def test_dense_oracle_size_limit():
    with pytest.raises(ValueError):
        dense_oracle_solve(sp.identity(2001, format="csr"), np.ones(2001))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["direct", "bicgstab"]))
def test_solver_agrees_with_dense_oracle(seed, method):
    dom = build_domain({"kind": "disk", "radius": 1.0})
    g = discretize(dom, 0.05)
    assert g.n <= 2000
    c = CoefficientSet.from_grid(
        g,
        W=PiecewiseConstantField(seed, -2, 2, cell=0.2, components=2),
        V=PiecewiseConstantField(seed + 1, 0, 3, cell=0.2),
        F=PiecewiseConstantField(seed + 2, -1, 1, cell=0.2),
    )
    op = assemble(g, c)
    rhs = np.where(g.interior, c.F, 0.0)
    ref = dense_oracle_solve(op, rhs)
    x = solve(op, rhs, tol=1e-13, method=method).x
    assert np.abs(x - ref).max() <= 1e-8 * np.abs(ref).max()


@pytest.mark.parametrize("K, h, expected", [(1.0, 0.1, "centered"), (30.0, 0.1, "upwind"), (20.0, 0.1, "centered")])
def test_scheme_switch(K, h, expected):
    assert choose_scheme(K, h) == expected


@pytest.mark.parametrize("K", [1.0, 50.0, 400.0])
def test_m_matrix_structure(unit_disk, K):
    g = discretize(unit_disk, 0.05)
    A = assemble(g, CoefficientSet.from_grid(g, W=[K / np.sqrt(2), K / np.sqrt(2)], V=1.0)).matrix.tocoo()
    off = A.row != A.col
    assert np.all(A.data[off] <= 1e-12)
    assert np.all(A.diagonal() > 0)


@pytest.mark.parametrize("K", [0.0, 5.0, 100.0])
def test_discrete_maximum_principle(unit_disk, K):
    g = discretize(unit_disk, 0.05)
    rng = np.random.default_rng(1)
    c = CoefficientSet.from_grid(g, W=rng.uniform(-1, 1, size=(g.n, 2)) * K / np.sqrt(2), F=0.0)
    op = assemble(g, c)
    bvals = rng.uniform(-1, 2, size=g.n)
    rhs = np.where(g.is_boundary, bvals, 0.0)
    u = solve(op, rhs).x
    bmax, bmin = bvals[g.is_boundary].max(), bvals[g.is_boundary].min()
    assert u.max() <= bmax + 1e-10 and u.min() >= bmin - 1e-10


def test_comparison_principle(unit_disk):
    g = discretize(unit_disk, 0.05)
    c = CoefficientSet.from_grid(g, W=[1.0, -2.0], V=2.0)
    op = assemble(g, c)
    rng = np.random.default_rng(2)
    f1 = rng.uniform(0, 1, g.n)
    f2 = f1 + rng.uniform(0, 1, g.n)
    u1 = solve(op, np.where(g.interior, f1, 0.0)).x
    u2 = solve(op, np.where(g.interior, f2, 0.0)).x
    assert np.all(u2 >= u1 - 1e-12)


def test_gradient_of_linear_field(unit_interval):
    g = discretize(unit_interval, 0.01)
    d = gradient(g, g.points[:, 0])
    assert np.allclose(d, 1.0)
    assert np.all(gradient(g, np.zeros(g.n)) == 0)


def test_solver_error_on_tiny_iteration_budget(unit_disk):
    g = discretize(unit_disk, 0.05)
    op = assemble(g, CoefficientSet.from_grid(g, F=1.0))
    with pytest.raises(SolverError):
        solve(op, np.where(g.interior, 1.0, 0.0), method="bicgstab", maxiter=2)


def test_scaled_residual_zero_for_exact():
    A = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    x = np.array([1.0, 2.0])
    assert scaled_residual(A, x, A @ x) == 0.0


def test_sample_shapes(unit_disk):
    g = discretize(unit_disk, 0.1)
    assert sample(g, None).shape == (g.n,)
    assert sample(g, [1.0, 2.0], 2).shape == (g.n, 2)
    assert np.allclose(sample(g, lambda p: p[:, 0]), g.points[:, 0])


def test_random_field_is_point_independent():
    f = PiecewiseConstantField(3, -1, 1, cell=0.25)
    pts = np.array([[0.1, 0.1], [0.6, -0.3]])
    assert np.array_equal(f(pts)[:1], f(pts[:1]))
    assert np.all(np.abs(f(np.random.default_rng(0).uniform(-1, 1, (100, 2)))) <= 1)


def test_non_finite_coefficients_rejected():
    with pytest.raises(ValueError):
        CoefficientSet(np.zeros((2, 1)), np.array([0.0, np.nan]), np.zeros(2))
