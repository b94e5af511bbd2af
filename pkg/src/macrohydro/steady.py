"""Reservoir-driven steady profiles of the nonlinear diffusion law.

The conserved field obeys dq/dt = -div j with face current
j = -ktilde(q) grad q, discretized by a cell-centered finite volume scheme
(see :mod:`macrohydro.grid` for the face conventions). ``solve_steady``
drives the discrete residual to zero by damped Newton iteration, with the
linearized generator from :mod:`macrohydro.linop` as the exact Jacobian and
implicit pseudo-time marching as a fallback; ``evolve`` provides explicit or
implicit time stepping for relaxation studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DomainEscape, MacrohydroError, NoConvergence, StabilityViolation
from .grid import BoundaryData, Mesh1D, divergence, face_diffs, face_distances, face_means
from .linop import operator_matrices
from .thermo import ThermoModel, J_of_q, q_of_theta, theta_of_q

__all__ = [
    "SteadyProfile",
    "solve_steady",
    "solve_steady_theta_form",
    "evolve",
    "steady_current",
    "stability_limit",
]

STEADY_TOL = 1e-11
NEWTON_MAXITER = 100
BANDED_THRESHOLD = 512


@dataclass(frozen=True)
class SteadyProfile:
    """Converged steady fields on a mesh, plus the boundary data that pin them.

    ``residual_norm`` is the max-norm of the discrete rate dq/dt at the
    solution; convergence is judged against ``residual_scale`` (the natural
    magnitude max(1, |j|/h) of that rate), since the achievable floor grows
    with the divergence operator's 1/h^2 amplification of rounding noise.
    """

    mesh: Mesh1D
    q: np.ndarray          # (n, m) cell densities
    theta: np.ndarray      # (n, m) conjugate field s'(q)
    j_faces: np.ndarray    # (n+1, m) face currents
    q_left: np.ndarray
    q_right: np.ndarray
    residual_norm: float
    residual_scale: float
    iterations: int


def face_currents(model: ThermoModel, mesh: Mesh1D, q, q_left, q_right) -> np.ndarray:
    """j_f = -ktilde(q_f) (delta q)_f / d_f with arithmetic-mean face values."""
    dists = face_distances(mesh)
    qf = face_means(q, q_left, q_right)
    grads = face_diffs(q, q_left, q_right) / dists[:, None]
    out = np.empty_like(grads)
    for f in range(mesh.n + 1):
        out[f] = -np.asarray(model.mobility(qf[f]), dtype=float) @ grads[f]
    return out


def rhs(model: ThermoModel, mesh: Mesh1D, q, q_left, q_right) -> np.ndarray:
    """Discrete right-hand side dq/dt = -div j, shape (n, m)."""
    return -divergence(face_currents(model, mesh, q, q_left, q_right), mesh.h)


def _states_in_domain(model: ThermoModel, q: np.ndarray, q_left, q_right) -> bool:
    # Face means are convex combinations, so cell plus wall membership suffices.
    for row in q:
        if not model.domain.contains(row):
            return False
    return model.domain.contains(q_left) and model.domain.contains(q_right)


def _linear_guess(mesh: Mesh1D, q_left: np.ndarray, q_right: np.ndarray) -> np.ndarray:
    x = mesh.centers[:, None]
    return q_left[None, :] * (1 - x) + q_right[None, :] * x


def _newton_direction(model, mesh, q, q_left, q_right, residual):
    n, m = q.shape
    if m == 1 and n > BANDED_THRESHOLD:
        bands = _tridiag_bands(model, mesh, q, q_left, q_right)
        delta = scipy.linalg.solve_banded((1, 1), bands, -residual.reshape(-1))
    else:
        jac, _, _ = operator_matrices(model, mesh, q, q_left, q_right)
        delta = np.linalg.solve(jac, -residual.reshape(-1))
    return delta.reshape(n, m)


def _tridiag_bands(model, mesh, q, q_left, q_right):
    """Banded form of the m=1 Jacobian, assembled from the face stencil."""
    n = mesh.n
    h, dists = mesh.h, face_distances(mesh)
    qf = face_means(q, q_left, q_right)[:, 0]
    gradf = (face_diffs(q, q_left, q_right) / dists[:, None])[:, 0]
    ktil = np.array([float(model.mobility(np.array([v]))[0, 0]) for v in qf])
    kpr = np.array([float(model.mobility_grad(np.array([v]))[0, 0, 0]) for v in qf])
    # d flux_f / d q_(left cell), d flux_f / d q_(right cell)
    dfl = ktil / dists - 0.5 * kpr * gradf
    dfr = -ktil / dists - 0.5 * kpr * gradf
    # residual_i = -(flux_{i+1} - flux_i)/h
    bands = np.zeros((3, n))
    bands[1, :] = -(dfl[1:] - dfr[:-1]) / h
    bands[0, 1:] = -dfr[1:-1] / h   # couples cell i to i+1 via face i+1
    bands[2, :-1] = dfl[1:-1] / h   # couples cell i to i-1 via face i
    return bands


def solve_steady(
    model: ThermoModel,
    mesh: Mesh1D,
    bc: BoundaryData,
    tol: float = STEADY_TOL,
    maxiter: int = NEWTON_MAXITER,
) -> SteadyProfile:
    """Solve div(ktilde(q) grad q) = 0 under the reservoir boundary values.

    Damped Newton from the linear-interpolation initial guess; if Newton
    stalls, implicit pseudo-time marching is tried before giving up. The
    returned profile stays strictly inside the model domain.
    """
    q_left, q_right = bc.as_q(model)
    if q_left.size != model.m:
        raise ValueError(f"boundary data has {q_left.size} components, model has {model.m}")
    q = _linear_guess(mesh, q_left, q_right)

    q, res_norm, scale, iters, converged = _newton_loop(model, mesh, q, q_left, q_right, tol, maxiter)
    if not converged:
        q = _pseudo_time_march(model, mesh, q, q_left, q_right)
        q, res_norm, scale, more, converged = _newton_loop(model, mesh, q, q_left, q_right, tol, maxiter)
        iters += more
        if not converged:
            raise NoConvergence(f"steady solve stalled at residual {res_norm:.3e}")

    theta = np.array([theta_of_q(model, row) for row in q])
    currents = face_currents(model, mesh, q, q_left, q_right)
    return SteadyProfile(
        mesh=mesh, q=q, theta=theta, j_faces=currents,
        q_left=q_left, q_right=q_right, residual_norm=res_norm,
        residual_scale=scale, iterations=iters,
    )


def _residual_and_scale(model, mesh, q, q_left, q_right):
    currents = face_currents(model, mesh, q, q_left, q_right)
    residual = -divergence(currents, mesh.h)
    scale = max(1.0, float(np.max(np.abs(currents))) / mesh.h)
    return residual, float(np.max(np.abs(residual))), scale


def _newton_loop(model, mesh, q, q_left, q_right, tol, maxiter):
    residual, res_norm, scale = _residual_and_scale(model, mesh, q, q_left, q_right)
    for it in range(maxiter):
        if res_norm < tol * scale:
            return q, res_norm, scale, it, True
        delta = _newton_direction(model, mesh, q, q_left, q_right, residual)
        alpha = 1.0
        for _ in range(50):
            q_new = q + alpha * delta
            if _states_in_domain(model, q_new, q_left, q_right):
                res_new, new_norm, new_scale = _residual_and_scale(model, mesh, q_new, q_left, q_right)
                if new_norm < res_norm or new_norm < tol * max(scale, new_scale):
                    break
            alpha *= 0.5
        else:
            return q, res_norm, scale, it, False
        q, residual, res_norm, scale = q_new, res_new, new_norm, max(scale, new_scale)
    return q, res_norm, scale, maxiter, res_norm < tol * scale


def _pseudo_time_march(model, mesh, q, q_left, q_right, steps: int = 200):
    """Implicit Euler relaxation used only as a Newton fallback."""
    dt = 10.0 * mesh.h ** 2
    n, m = q.shape
    for _ in range(steps):
        residual = rhs(model, mesh, q, q_left, q_right).reshape(-1)
        if m == 1 and n > BANDED_THRESHOLD:
            bands = -dt * _tridiag_bands(model, mesh, q, q_left, q_right)
            bands[1, :] += 1.0
            delta = scipy.linalg.solve_banded((1, 1), bands, dt * residual).reshape(q.shape)
        else:
            jac, _, _ = operator_matrices(model, mesh, q, q_left, q_right)
            mat = np.eye(jac.shape[0]) - dt * jac
            delta = np.linalg.solve(mat, dt * residual).reshape(q.shape)
        q_new = q + delta
        if not _states_in_domain(model, q_new, q_left, q_right):
            raise DomainEscape("pseudo-time iterate left the model domain")
        q = q_new
        dt *= 1.3
    return q


def stability_limit(model: ThermoModel, mesh: Mesh1D, q: np.ndarray, safety: float = 0.4) -> float:
    """Explicit-Euler step bound safety * h^2 / (2 max ||ktilde||)."""
    kmax = max(float(np.linalg.norm(np.asarray(model.mobility(row), dtype=float), 2)) for row in q)
    return safety * mesh.h ** 2 / (2.0 * kmax)


def evolve(
    model: ThermoModel,
    mesh: Mesh1D,
    bc: BoundaryData,
    q0: np.ndarray,
    dt: float,
    steps: int,
    scheme: str = "explicit",
    record_stride: int = 1,
    safety: float = 0.4,
) -> np.ndarray:
    """Time-march the nonlinear law, returning recorded states.

    Explicit Euler enforces the diffusive stability bound (re-checked as the
    state moves, since the mobility is state dependent); implicit Euler
    accepts any dt. Output shape is (n_records + 1, n, m) including the
    initial state.
    """
    if scheme not in ("explicit", "implicit"):
        raise ValueError(f"unknown scheme {scheme!r}")
    q_left, q_right = bc.as_q(model)
    q = np.asarray(q0, dtype=float).reshape(mesh.n, model.m).copy()
    if not _states_in_domain(model, q, q_left, q_right):
        raise DomainEscape("initial state outside model domain")

    out = [q.copy()]
    recheck = max(1, steps // 100)
    limit = stability_limit(model, mesh, q, safety)
    for k in range(steps):
        if scheme == "explicit":
            if k % recheck == 0:
                limit = stability_limit(model, mesh, q, safety)
            if dt > limit * (1 + 1e-12):
                raise StabilityViolation(f"dt={dt:.3e} exceeds explicit bound {limit:.3e}")
            q = q + dt * rhs(model, mesh, q, q_left, q_right)
        else:
            q = _implicit_step(model, mesh, q, q_left, q_right, dt)
        if not _states_in_domain(model, q, q_left, q_right):
            raise DomainEscape(f"state left the model domain at step {k + 1}")
        if (k + 1) % record_stride == 0:
            out.append(q.copy())
    return np.array(out)


def _implicit_step(model, mesh, q_old, q_left, q_right, dt, tol=1e-12, maxiter=30):
    q = q_old.copy()
    for _ in range(maxiter):
        g = (q - q_old).reshape(-1) - dt * rhs(model, mesh, q, q_left, q_right).reshape(-1)
        if np.max(np.abs(g)) < tol * max(1.0, float(np.max(np.abs(q)))):
            return q
        jac, _, _ = operator_matrices(model, mesh, q, q_left, q_right)
        mat = np.eye(jac.shape[0]) - dt * jac
        q = q + np.linalg.solve(mat, -g).reshape(q.shape)
    raise NoConvergence("implicit Euler step did not converge")


def steady_current(model: ThermoModel, profile: SteadyProfile) -> np.ndarray:
    """Face currents of a profile; constant across interior faces at steadiness."""
    return face_currents(model, profile.mesh, profile.q, profile.q_left, profile.q_right)


def solve_steady_theta_form(
    model: ThermoModel,
    mesh: Mesh1D,
    bc: BoundaryData,
    tol: float = STEADY_TOL,
    maxiter: int = NEWTON_MAXITER,
) -> np.ndarray:
    """Steady densities obtained from the conjugate-variable form of the law.

    Here the unknowns are theta(x) and the face current is +K(theta_f)
    grad theta, with K evaluated by inverting s' at the face mean. This is a
    genuinely different discretization of the same continuum problem, used
    as a consistency oracle for :func:`solve_steady`. Scalar models only.
    """
    if model.m != 1:
        raise NotImplementedError("theta-form solve implemented for m=1 only")
    q_left, q_right = bc.as_q(model)
    th_left = theta_of_q(model, q_left)
    th_right = theta_of_q(model, q_right)
    x = mesh.centers[:, None]
    theta = th_left[None, :] * (1 - x) + th_right[None, :] * x
    dists = face_distances(mesh)

    def residual_and_scale(th):
        thf = face_means(th, th_left, th_right)
        grads = face_diffs(th, th_left, th_right) / dists[:, None]
        cur = np.empty_like(grads)
        guess = q_left
        for f in range(mesh.n + 1):
            qf = q_of_theta(model, thf[f], q_guess=guess)
            guess = qf
            cur[f] = K_theta(model, qf) @ grads[f]
        scale = max(1.0, float(np.max(np.abs(cur))) / mesh.h)
        return divergence(cur, mesh.h), scale

    theta = _colored_newton(residual_and_scale, theta, tol, maxiter)
    q = np.empty_like(theta)
    guess = q_left
    for i in range(mesh.n):
        q[i] = q_of_theta(model, theta[i], q_guess=guess)
        guess = q[i]
    return q


def K_theta(model: ThermoModel, q: np.ndarray) -> np.ndarray:
    """Onsager matrix at a density point, K = ktilde(q) J(q)."""
    return np.asarray(model.mobility(q), dtype=float) @ J_of_q(model, q)


def _colored_newton(residual_and_scale, theta, tol, maxiter):
    """Damped Newton with a tridiagonal Jacobian built by 3-coloured differencing."""
    n = theta.shape[0]
    res, scale = residual_and_scale(theta)
    norm = float(np.max(np.abs(res)))
    for _ in range(maxiter):
        if norm < tol * scale:
            return theta
        bands = np.zeros((3, n))
        eps = 1e-7 * max(1.0, float(np.max(np.abs(theta))))
        for color in range(3):
            pert = theta.copy()
            pert[color::3, 0] += eps
            dres = (residual_and_scale(pert)[0] - res) / eps
            for j in range(color, n, 3):
                bands[1, j] = dres[j, 0]
                if j > 0:
                    bands[0, j] = dres[j - 1, 0]
                if j < n - 1:
                    bands[2, j] = dres[j + 1, 0]
        delta = scipy.linalg.solve_banded((1, 1), bands, -res[:, 0])
        alpha = 1.0
        for _ in range(50):
            cand = theta + alpha * delta[:, None]
            try:
                res_new, scale_new = residual_and_scale(cand)
            except MacrohydroError:
                alpha *= 0.5
                continue
            new_norm = float(np.max(np.abs(res_new)))
            if new_norm < norm or new_norm < tol * max(scale, scale_new):
                break
            alpha *= 0.5
        else:
            raise NoConvergence("theta-form Newton stalled")
        theta, res, norm, scale = cand, res_new, new_norm, max(scale, scale_new)
    if norm < tol * scale:
        return theta
    raise NoConvergence(f"theta-form Newton stalled at residual {norm:.3e}")
