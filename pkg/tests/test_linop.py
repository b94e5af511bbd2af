import numpy as np
import pytest

from macrohydro import (
    BoundaryData,
    Mesh1D,
    NegativeTime,
    assemble,
    gaussian,
    semigroup_apply,
    sep,
    solve_steady,
    spectral_check,
    twocomp,
)
from macrohydro.steady import rhs
from tests.test_steady import linear_mobility_model


def dirichlet_laplacian(n):
    """Cell-centered Dirichlet Laplacian with half-cell wall distances."""
    h = 1.0 / n
    lap = np.zeros((n, n))
    for i in range(n):
        lap[i, i] = -2.0
        if i > 0:
            lap[i, i - 1] = 1.0
        if i < n - 1:
            lap[i, i + 1] = 1.0
    lap[0, 0] = -3.0
    lap[-1, -1] = -3.0
    return lap / h**2


def test_generator_is_minus_div_kmap():
    model = linear_mobility_model()
    prof = solve_steady(model, Mesh1D(24), BoundaryData([1.0], [2.0]))
    sys = assemble(model, prof)
    assert np.max(np.abs(sys.L + sys.Div @ sys.Kmap)) < 1e-14 * np.max(np.abs(sys.L))


def test_equilibrium_generator_is_scaled_laplacian():
    n = 16
    prof = solve_steady(sep(), Mesh1D(n), BoundaryData([0.5], [0.5]))
    sys = assemble(sep(), prof)
    # constant profile: the mobility-derivative transport term vanishes
    assert np.array_equal(sys.L, sys.L.T)
    assert np.max(np.abs(sys.L - dirichlet_laplacian(n))) < 1e-9


def test_sep_noneq_generator_is_laplacian():
    # constant mobility: the generator is the Laplacian for any profile
    n = 32
    prof = solve_steady(sep(), Mesh1D(n), BoundaryData([0.3], [0.7]))
    sys = assemble(sep(), prof)
    assert np.max(np.abs(sys.L - dirichlet_laplacian(n))) < 1e-8


@pytest.mark.parametrize("factory,bc", [
    (sep, ([0.3], [0.7])),
    (linear_mobility_model, ([1.0], [2.0])),
    (twocomp, ([0.5, -0.2], [-0.4, 0.3])),
])
def test_directional_derivative_consistency(factory, bc):
    model = factory()
    mesh = Mesh1D(20)
    prof = solve_steady(model, mesh, BoundaryData(*bc))
    sys = assemble(model, prof)
    rng = np.random.default_rng(7)
    eps = 1e-6
    base = rhs(model, mesh, prof.q, prof.q_left, prof.q_right).reshape(-1)
    for _ in range(20):
        v = rng.standard_normal(mesh.n * model.m)
        pert = rhs(model, mesh, prof.q + eps * v.reshape(mesh.n, model.m),
                   prof.q_left, prof.q_right).reshape(-1)
        fd = (pert - base) / eps
        # residual of the linearization is O(eps * ||curvature|| * ||v||^2)
        tol = 1e-5 * np.max(np.abs(sys.L @ v)) + 1e-9 * np.max(np.abs(sys.L))
        assert np.max(np.abs(sys.L @ v - fd)) < tol


def test_jacobian_exactness_quadratic_flux():
    # For ktilde(q) = q the flux is quadratic, so the finite-difference slope
    # at eps and eps/2 must converge to L*v at first order in eps.
    model = linear_mobility_model()
    mesh = Mesh1D(16)
    prof = solve_steady(model, mesh, BoundaryData([1.0], [2.0]))
    sys = assemble(model, prof)
    rng = np.random.default_rng(11)
    v = rng.standard_normal(16)
    base = rhs(model, mesh, prof.q, prof.q_left, prof.q_right).reshape(-1)

    def fd_err(eps):
        pert = rhs(model, mesh, prof.q + eps * v[:, None], prof.q_left, prof.q_right).reshape(-1)
        return np.max(np.abs((pert - base) / eps - sys.L @ v))

    assert fd_err(1e-4) / fd_err(2e-4) == pytest.approx(0.5, abs=0.1)


def test_spectral_abscissa_formula():
    n = 16
    h = 1.0 / n
    prof = solve_steady(gaussian(), Mesh1D(n), BoundaryData([0.0], [0.0]))
    sys = assemble(gaussian(), prof)
    expected = -(4.0 / h**2) * np.sin(np.pi * h / 2) ** 2
    assert spectral_check(sys) == pytest.approx(expected, abs=1e-10)


def test_spectral_abscissa_continuum_limit():
    prof = solve_steady(sep(), Mesh1D(32), BoundaryData([0.5], [0.5]))
    sys = assemble(sep(), prof)
    ktilde_j = 0.25  # K for SEP at q = 1/2 enters through J; mobility is 1
    assert sys.spectral_abscissa == pytest.approx(-np.pi**2, rel=0.01)
    assert ktilde_j > 0


@pytest.mark.parametrize("factory,bc", [
    (sep, ([0.3], [0.7])),
    (sep, ([0.5], [0.5])),
    (linear_mobility_model, ([1.0], [2.0])),
    (twocomp, ([0.5, -0.2], [-0.4, 0.3])),
])
def test_dissipativity_across_profiles(factory, bc):
    model = factory()
    prof = solve_steady(model, Mesh1D(24), BoundaryData(*bc))
    assert assemble(model, prof).spectral_abscissa < 0


def test_semigroup_identity_and_law():
    model = sep()
    prof = solve_steady(model, Mesh1D(32), BoundaryData([0.3], [0.7]))
    sys = assemble(model, prof)
    rng = np.random.default_rng(3)
    v = rng.standard_normal(32)
    assert np.array_equal(semigroup_apply(sys, 0.0, v), v)
    lhs = semigroup_apply(sys, 0.02, v)
    rhs_ = semigroup_apply(sys, 0.01, semigroup_apply(sys, 0.01, v))
    assert np.max(np.abs(lhs - rhs_)) < 1e-9 * np.max(np.abs(v))


def test_semigroup_decay():
    model = sep()
    prof = solve_steady(model, Mesh1D(32), BoundaryData([0.3], [0.7]))
    sys = assemble(model, prof)
    v = np.ones(32)
    t = 10.0 / abs(sys.spectral_abscissa)
    assert np.linalg.norm(semigroup_apply(sys, t, v)) < 1e-4 * np.linalg.norm(v)


def test_semigroup_ode_path_matches_dense():
    model = sep()
    prof = solve_steady(model, Mesh1D(32), BoundaryData([0.3], [0.7]))
    sys = assemble(model, prof)
    v = np.sin(np.pi * prof.mesh.centers)
    dense = semigroup_apply(sys, 0.01, v)
    import macrohydro.linop as linop_mod
    old = linop_mod.DENSE_EXPM_LIMIT
    linop_mod.DENSE_EXPM_LIMIT = 0
    try:
        ode = semigroup_apply(sys, 0.01, v)
    finally:
        linop_mod.DENSE_EXPM_LIMIT = old
    assert np.max(np.abs(dense - ode)) < 1e-8 * np.max(np.abs(v))


def test_negative_time_rejected():
    prof = solve_steady(sep(), Mesh1D(16), BoundaryData([0.4], [0.6]))
    sys = assemble(sep(), prof)
    with pytest.raises(NegativeTime):
        semigroup_apply(sys, -0.1, np.ones(16))


def test_unconverged_profile_rejected():
    from dataclasses import replace
    prof = solve_steady(sep(), Mesh1D(16), BoundaryData([0.4], [0.6]))
    bad = replace(prof, residual_norm=1e-3)
    with pytest.raises(ValueError, match="not converged"):
        assemble(sep(), bad)
