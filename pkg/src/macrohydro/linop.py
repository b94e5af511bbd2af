"""Discrete linearized dynamics around a steady profile.

``Kmap`` is the exact Jacobian of the face-current map: a cell perturbation
chi (vanishing at the walls) produces the current increment

    delta j = -( ktilde(q) grad chi + [ktilde'(q) chi] grad q )

evaluated face-by-face with arithmetic-mean face values. The generator is
L = -Div Kmap, which is therefore also the exact Jacobian of the nonlinear
finite-volume right-hand side used by the steady solver. For any converged
profile L must be dissipative: its spectral abscissa (largest real part of
the eigenvalues) is negative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .errors import EigSolverFailure, NegativeTime
from .grid import Mesh1D, face_distances, face_means
from .thermo import ThermoModel

__all__ = ["LinearizedSystem", "operator_matrices", "assemble", "semigroup_apply", "spectral_check"]

DENSE_EXPM_LIMIT = 512


def divergence_matrix(n: int, m: int, h: float) -> np.ndarray:
    """Faces -> cells divergence as a dense matrix, m components per block."""
    div = np.zeros((n * m, (n + 1) * m))
    eye = np.eye(m)
    for i in range(n):
        div[i * m:(i + 1) * m, (i + 1) * m:(i + 2) * m] += eye / h
        div[i * m:(i + 1) * m, i * m:(i + 1) * m] -= eye / h
    return div


def operator_matrices(
    model: ThermoModel,
    mesh: Mesh1D,
    q: np.ndarray,
    q_left: np.ndarray,
    q_right: np.ndarray,
    closed_walls: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble (L, Kmap, Div) around the state ``q``.

    Boundary values are held fixed, so perturbations obey a homogeneous
    Dirichlet closure (ghost chi = 0). With ``closed_walls`` the wall faces
    carry no current at all (zero-flux diagnostic mode).
    """
    n, m = q.shape
    h = mesh.h
    dists = face_distances(mesh)
    qf = face_means(q, q_left, q_right)
    grad_q = (np.vstack([q, q_right[None, :]]) - np.vstack([q_left[None, :], q])) / dists[:, None]

    kmap = np.zeros(((n + 1) * m, n * m))
    for f in range(n + 1):
        ktil = np.asarray(model.mobility(qf[f]), dtype=float)
        kprime = np.asarray(model.mobility_grad(qf[f]), dtype=float)
        # transport term: chi |-> [ktilde'(q_f) chi] (grad q)_f, as a matrix on chi
        transport = np.einsum("klr,l->kr", kprime, grad_q[f])
        rows = slice(f * m, (f + 1) * m)
        if f == 0:
            if closed_walls:
                continue
            # ghost chi = 0 at the wall: grad chi = chi_0 / (h/2), face mean chi_0/2
            kmap[rows, 0:m] = -(ktil / dists[f] + 0.5 * transport)
        elif f == n:
            if closed_walls:
                continue
            kmap[rows, (n - 1) * m:n * m] = -(-ktil / dists[f] + 0.5 * transport)
        else:
            kmap[rows, (f - 1) * m:f * m] = -(-ktil / dists[f] + 0.5 * transport)
            kmap[rows, f * m:(f + 1) * m] = -(ktil / dists[f] + 0.5 * transport)

    div = divergence_matrix(n, m, h)
    L = -div @ kmap
    return L, kmap, div


@dataclass
class LinearizedSystem:
    """Generator, current map and spectral data at a linearization point.

    Treat as immutable after assembly; the only mutation is an internal
    memo of matrix exponentials, which does not affect results.
    """

    L: np.ndarray
    Kmap: np.ndarray
    Div: np.ndarray
    profile: object
    spectral_abscissa: float
    _expm_cache: dict = field(default_factory=dict, repr=False)

    @property
    def size(self) -> int:
        return self.L.shape[0]

    def propagator(self, t: float) -> np.ndarray:
        """Dense matrix exponential exp(L t), memoized per t."""
        key = float(t)
        if key not in self._expm_cache:
            if len(self._expm_cache) > 64:
                self._expm_cache.clear()
            self._expm_cache[key] = scipy.linalg.expm(self.L * key)
        return self._expm_cache[key]


def assemble(model: ThermoModel, profile, steady_tol: float = 1e-11) -> LinearizedSystem:
    """Linearize the diffusion law around a converged steady profile."""
    scale = getattr(profile, "residual_scale", 1.0)
    if profile.residual_norm > 10 * steady_tol * scale:
        raise ValueError(
            f"profile not converged: residual {profile.residual_norm:.3e} > "
            f"{10 * steady_tol * scale:.1e}"
        )
    L, kmap, div = operator_matrices(model, profile.mesh, profile.q, profile.q_left, profile.q_right)
    return LinearizedSystem(L=L, Kmap=kmap, Div=div, profile=profile, spectral_abscissa=_abscissa(L))


def _abscissa(L: np.ndarray) -> float:
    try:
        eigvals = np.linalg.eigvals(L)
    except np.linalg.LinAlgError as exc:
        raise EigSolverFailure(f"eigenvalue computation failed: {exc}") from exc
    return float(np.max(eigvals.real))


def semigroup_apply(sys: LinearizedSystem, t: float, v: np.ndarray) -> np.ndarray:
    """Evaluate exp(L t) v.

    Dense matrix exponential up to size 512; above that an adaptive ODE
    integration of v' = L v at rtol 1e-10.
    """
    if t < 0:
        raise NegativeTime(f"semigroup defined for t >= 0, got t={t}")
    v = np.asarray(v, dtype=float).reshape(-1)
    if t == 0:
        return v.copy()
    if sys.size <= DENSE_EXPM_LIMIT:
        return sys.propagator(t) @ v
    sol = solve_ivp(
        lambda _, y: sys.L @ y, (0.0, float(t)), v, method="RK45", rtol=1e-10, atol=1e-12 * np.max(np.abs(v)),
    )
    return sol.y[:, -1]


def spectral_check(sys: LinearizedSystem) -> float:
    """Spectral abscissa of L; a negative value certifies discrete dissipativity."""
    return sys.spectral_abscissa
