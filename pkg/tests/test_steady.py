import numpy as np
import pytest

from macrohydro import (
    BoundaryData,
    DomainEscape,
    Mesh1D,
    StabilityViolation,
    evolve,
    gaussian,
    sep,
    solve_steady,
    solve_steady_theta_form,
    steady_current,
    theta_of_q,
)
from macrohydro.thermo import Box, ThermoModel


def linear_mobility_model():
    """Scalar model with mobility ktilde(q) = q on q > 0."""
    return ThermoModel(
        name="linear-mobility",
        m=1,
        s=lambda q: -0.5 * q[0] ** 2,
        s_grad=lambda q: -np.asarray(q, dtype=float),
        s_hess=lambda q: -np.eye(1),
        mobility=lambda q: np.array([[q[0]]]),
        mobility_grad=lambda q: np.ones((1, 1, 1)),
        domain=Box([1e-12], [np.inf]),
    )


def test_sep_linear_profile_exact():
    mesh = Mesh1D(64)
    prof = solve_steady(sep(), mesh, BoundaryData([0.3], [0.7]))
    exact = 0.3 + 0.4 * mesh.centers
    assert np.max(np.abs(prof.q[:, 0] - exact)) < 1e-10
    assert prof.residual_norm < 1e-11


def test_equilibrium_constant_profile():
    mesh = Mesh1D(32)
    prof = solve_steady(sep(), mesh, BoundaryData([0.5], [0.5]))
    assert np.max(np.abs(prof.q - 0.5)) < 1e-13
    assert np.max(np.abs(prof.j_faces)) < 1e-13


def test_theta_field_consistent_with_q():
    prof = solve_steady(sep(), Mesh1D(32), BoundaryData([0.3], [0.7]))
    model = sep()
    for i in range(32):
        assert np.max(np.abs(prof.theta[i] - theta_of_q(model, prof.q[i]))) < 1e-12


def test_theta_boundary_kind():
    model = sep()
    th_l = float(theta_of_q(model, np.array([0.3]))[0])
    th_r = float(theta_of_q(model, np.array([0.7]))[0])
    prof = solve_steady(model, Mesh1D(32), BoundaryData([th_l], [th_r], kind="theta"))
    exact = 0.3 + 0.4 * Mesh1D(32).centers
    assert np.max(np.abs(prof.q[:, 0] - exact)) < 1e-10


def quadratic_mobility_model():
    """Scalar model with mobility ktilde(q) = q^2 on q > 0."""
    return ThermoModel(
        name="quadratic-mobility",
        m=1,
        s=lambda q: -0.5 * q[0] ** 2,
        s_grad=lambda q: -np.asarray(q, dtype=float),
        s_hess=lambda q: -np.eye(1),
        mobility=lambda q: np.array([[q[0] ** 2]]),
        mobility_grad=lambda q: np.array([[[2.0 * q[0]]]]),
        domain=Box([1e-12], [np.inf]),
    )


def test_nonlinear_mobility_analytic_solution():
    # For ktilde(q) = q the two-point flux with arithmetic-mean faces is the
    # exact discrete Laplacian of q^2, so q = sqrt(1 + 3x) is reproduced at
    # the cell centers to roundoff (well inside the O(h^2) bound).
    mesh = Mesh1D(64)
    prof = solve_steady(linear_mobility_model(), mesh, BoundaryData([1.0], [2.0]))
    exact = np.sqrt(1.0 + 3.0 * mesh.centers)
    assert np.max(np.abs(prof.q[:, 0] - exact)) < 1e-11


def cbrt_profile_error(n):
    # ktilde(q) = q^2 is not nodally exact: steady state solves (q^3)' = const,
    # q = (1 + 7x)^(1/3) for bc 1 -> 2, and the scheme converges at order 2.
    mesh = Mesh1D(n)
    prof = solve_steady(quadratic_mobility_model(), mesh, BoundaryData([1.0], [2.0]))
    exact = (1.0 + 7.0 * mesh.centers) ** (1.0 / 3.0)
    return np.max(np.abs(prof.q[:, 0] - exact))


def test_grid_convergence_second_order():
    e32, e64 = cbrt_profile_error(32), cbrt_profile_error(64)
    assert 2.8 < e32 / e64 < 5.7


def test_steady_current_uniform_and_value():
    mesh = Mesh1D(64)
    model = linear_mobility_model()
    prof = solve_steady(model, mesh, BoundaryData([1.0], [2.0]))
    j = steady_current(model, prof)[:, 0]
    assert np.max(np.abs(j + 1.5)) < 2e-4  # analytic steady current -3/2, O(h^2)
    assert np.std(j) < 10 * 1e-11 + 1e-12 * np.abs(j).max() + 5e-14 / mesh.h
    prof_sep = solve_steady(sep(), mesh, BoundaryData([0.3], [0.7]))
    j_sep = steady_current(sep(), prof_sep)[:, 0]
    assert np.max(np.abs(j_sep + 0.4)) < 1e-10


def test_monotone_bc_gives_monotone_profile():
    for model in (sep(), linear_mobility_model()):
        left, right = ([0.2], [0.8]) if model.name == "sep" else ([1.0], [2.0])
        prof = solve_steady(model, Mesh1D(48), BoundaryData(left, right))
        assert np.all(np.diff(prof.q[:, 0]) > 0)


def test_theta_form_matches_q_form():
    # Different discretizations of the same law: the gap shrinks as O(h^2)
    # with a small constant (~3e-4), so at n=1024 the two solutions agree
    # far below the 1e-8 consistency requirement.
    mesh = Mesh1D(1024)
    model = sep()
    bc = BoundaryData([0.3], [0.7])
    q_form = solve_steady(model, mesh, bc)
    q_theta = solve_steady_theta_form(model, mesh, bc)
    assert np.max(np.abs(q_theta - q_form.q)) < 1e-8


def test_evolve_fixed_point():
    mesh = Mesh1D(32)
    model = sep()
    bc = BoundaryData([0.3], [0.7])
    prof = solve_steady(model, mesh, bc)
    dt = 0.4 * mesh.h**2 / 2
    traj = evolve(model, mesh, bc, prof.q, dt=dt, steps=50)
    assert np.max(np.abs(traj[-1] - prof.q)) < 50 * 1e-12


def test_evolve_heat_mode_decay_rate():
    # Dirichlet 0/0 with a sine initial state: amplitude decays at the
    # fundamental diffusive rate within 1%.
    n = 128
    mesh = Mesh1D(n)
    model = gaussian()
    bc = BoundaryData([0.0], [0.0])
    q0 = np.sin(np.pi * mesh.centers)[:, None]
    dt = 0.4 * mesh.h**2 / 2
    steps = int(round(0.1 / dt))
    traj = evolve(model, mesh, bc, q0, dt=dt, steps=steps, record_stride=steps)
    t_final = steps * dt
    measured = np.max(np.abs(traj[-1]))
    assert measured / np.exp(-np.pi**2 * t_final) == pytest.approx(1.0, abs=0.01)


def test_evolve_monotone_approach_to_steady():
    mesh = Mesh1D(32)
    model = sep()
    bc = BoundaryData([0.3], [0.7])
    prof = solve_steady(model, mesh, bc)
    q0 = np.full((32, 1), 0.5)
    dt = 0.4 * mesh.h**2 / 2
    traj = evolve(model, mesh, bc, q0, dt=dt, steps=4000, record_stride=100)
    gaps = [np.max(np.abs(state - prof.q)) for state in traj]
    assert all(a >= b - 1e-14 for a, b in zip(gaps, gaps[1:]))


def test_explicit_stability_guard():
    mesh = Mesh1D(32)
    with pytest.raises(StabilityViolation):
        evolve(sep(), mesh, BoundaryData([0.3], [0.7]), np.full((32, 1), 0.5),
               dt=mesh.h**2, steps=10)


def test_implicit_accepts_large_dt():
    mesh = Mesh1D(32)
    model = sep()
    bc = BoundaryData([0.3], [0.7])
    prof = solve_steady(model, mesh, bc)
    traj = evolve(model, mesh, bc, np.full((32, 1), 0.5), dt=0.05, steps=40,
                  scheme="implicit", record_stride=40)
    assert np.max(np.abs(traj[-1] - prof.q)) < 1e-6


def test_evolve_domain_escape():
    mesh = Mesh1D(16)
    with pytest.raises(DomainEscape):
        evolve(sep(), mesh, BoundaryData([0.3], [0.7]), np.full((16, 1), 1.5),
               dt=1e-5, steps=1)
