"""Static covariance of the fluctuation field and its long-range content.

Around a steady profile the fluctuation field is an Ornstein-Uhlenbeck-type
process, so its static covariance C solves the Lyapunov (fluctuation-
dissipation) equation

    L C + C L^T = -Gamma,

where Gamma is the covariance density of the conservative noise: white in
time, divergence of a face current whose weight is the local Onsager matrix
K_theta(x) = ktilde(q(x)) J(q(x)). Two independent evaluation routes are
provided (a dense Lyapunov solve and direct quadrature of the semigroup
integral), plus a Kronecker solve at small sizes as a third cross-check.

The covariance splits into a local-equilibrium part J(q(x))/h on the
diagonal and a smooth remainder B. At equilibrium B vanishes identically;
away from equilibrium it generically does not. The sufficient criterion for
long range evaluates the source density

    phi(x) = Lap K_theta(x) + div psi(x)

with psi built from the mobility derivative and the profile gradient;
correlations are long ranged whenever phi is nonzero or psi fails to be
symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.integrate import quad_vec

from .errors import ResidualTooLarge, TailNotConverged, UnstableGenerator
from .grid import face_distances
from .linop import LinearizedSystem, assemble
from .steady import SteadyProfile, K_theta
from .thermo import ThermoModel, J_of_q

__all__ = [
    "NoiseCovariance",
    "CovarianceReport",
    "noise_covariance",
    "lyapunov_solve",
    "kron_lyapunov_solve",
    "integral_covariance",
    "longrange_criterion",
    "split_local_longrange",
    "onsager_check",
    "fd_residual",
    "compute_report",
]

PHI_TOL = 1e-6
KRON_LIMIT = 64


@dataclass(frozen=True)
class NoiseCovariance:
    """Covariance density (per unit time) of the conservative noise.

    ``gamma`` is the dense cell-space matrix; ``face_onsager`` holds the
    m-by-m Onsager matrix at every face and ``face_factors`` its Cholesky
    factor scaled for noise generation, chol(2 K_f / d_f). Banded locality
    (one cell) is structural: the noise is a face divergence.
    """

    gamma: np.ndarray
    face_onsager: np.ndarray    # (n+1, m, m)
    face_factors: np.ndarray    # (n+1, m, m)
    face_dists: np.ndarray      # (n+1,)
    h: float


def noise_covariance(model: ThermoModel, profile: SteadyProfile) -> NoiseCovariance:
    """Assemble Gamma = (2/h^2) sum_f (1/d_f) e_f e_f^T (x) K_theta(face f).

    e_f is the across-face difference stencil (single entry at wall faces,
    where the reservoir side is not a degree of freedom); K_theta at interior
    faces uses the arithmetic-mean density, at wall faces the reservoir value
    itself. With this weighting the equilibrium covariance J/h solves the
    Lyapunov equation exactly.
    """
    mesh = profile.mesh
    n, m = profile.q.shape
    h = mesh.h
    dists = face_distances(mesh)

    face_K = np.empty((n + 1, m, m))
    face_K[0] = K_theta(model, profile.q_left)
    face_K[-1] = K_theta(model, profile.q_right)
    for f in range(1, n):
        face_K[f] = K_theta(model, 0.5 * (profile.q[f - 1] + profile.q[f]))

    gamma = np.zeros((n * m, n * m))
    for f in range(n + 1):
        coef = 2.0 / (h * h * dists[f])
        block = coef * face_K[f]
        cells = [c for c in (f - 1, f) if 0 <= c < n]
        signs = {f - 1: -1.0, f: 1.0}
        for a in cells:
            for b in cells:
                gamma[a * m:(a + 1) * m, b * m:(b + 1) * m] += signs[a] * signs[b] * block

    factors = np.empty_like(face_K)
    for f in range(n + 1):
        factors[f] = np.linalg.cholesky(2.0 * face_K[f] / dists[f])
    return NoiseCovariance(gamma=gamma, face_onsager=face_K, face_factors=factors,
                           face_dists=dists, h=h)


def fd_residual(sys: LinearizedSystem, noise: NoiseCovariance, C: np.ndarray) -> float:
    """Max-norm fluctuation-dissipation residual, relative to ||Gamma||."""
    R = sys.L @ C + C @ sys.L.T + noise.gamma
    return float(np.max(np.abs(R)) / np.max(np.abs(noise.gamma)))


def lyapunov_solve(
    sys: LinearizedSystem,
    noise: NoiseCovariance,
    max_relres: float = 1e-10,
) -> np.ndarray:
    """Solve L C + C L^T = -Gamma by the dense Schur (Bartels-Stewart) route.

    One or two residual-correction sweeps push the relative residual to the
    rounding floor, which the equilibrium-exactness tests rely on.
    """
    if sys.spectral_abscissa >= 0:
        raise UnstableGenerator(f"spectral abscissa {sys.spectral_abscissa:.3e} >= 0")
    C = scipy.linalg.solve_continuous_lyapunov(sys.L, -noise.gamma)
    C = 0.5 * (C + C.T)
    best = fd_residual(sys, noise, C)
    for _ in range(3):
        if best < 5e-14:
            break
        R = sys.L @ C + C @ sys.L.T + noise.gamma
        delta = scipy.linalg.solve_continuous_lyapunov(sys.L, -R)
        cand = C + 0.5 * (delta + delta.T)
        res = fd_residual(sys, noise, cand)
        if res >= best:
            break
        C, best = cand, res
    if best > max_relres:
        raise ResidualTooLarge(f"Lyapunov residual {best:.3e} above {max_relres:.1e}")
    return C


def kron_lyapunov_solve(sys: LinearizedSystem, noise: NoiseCovariance) -> np.ndarray:
    """Independent Kronecker-product solve of the same equation (small sizes)."""
    if sys.spectral_abscissa >= 0:
        raise UnstableGenerator(f"spectral abscissa {sys.spectral_abscissa:.3e} >= 0")
    N = sys.size
    if N > KRON_LIMIT:
        raise ValueError(f"Kronecker route limited to size {KRON_LIMIT}, got {N}")
    eye = np.eye(N)
    A = np.kron(sys.L, eye) + np.kron(eye, sys.L)
    c = np.linalg.solve(A, -noise.gamma.reshape(-1))
    C = c.reshape(N, N)
    return 0.5 * (C + C.T)


def integral_covariance(
    sys: LinearizedSystem,
    noise: NoiseCovariance,
    t_max: float | None = None,
    rtol: float = 1e-8,
) -> np.ndarray:
    """Quadrature of C = int_0^inf exp(L t) Gamma exp(L^T t) dt.

    Serves as the independent oracle for :func:`lyapunov_solve`. The
    truncation tail is estimated from the spectral abscissa; if it exceeds
    the requested tolerance the call fails rather than returning silently
    biased output.
    """
    a = sys.spectral_abscissa
    if a >= 0:
        raise UnstableGenerator(f"spectral abscissa {a:.3e} >= 0")
    decay = 2.0 * abs(a)
    if t_max is None:
        t_max = (np.log(1.0 / rtol) + np.log(100.0)) / decay

    def integrand(t):
        E = scipy.linalg.expm(sys.L * t)
        return E @ noise.gamma @ E.T

    C, _ = quad_vec(integrand, 0.0, float(t_max), epsrel=rtol, epsabs=0.0)
    C = 0.5 * (C + C.T)
    tail = float(np.max(np.abs(integrand(t_max)))) / decay
    if tail > rtol * float(np.max(np.abs(C))):
        raise TailNotConverged(
            f"truncation tail {tail:.3e} exceeds rtol*||C||; increase t_max={t_max:.3g}"
        )
    return C


@dataclass(frozen=True)
class LongRangeReport:
    phi: np.ndarray        # (n, m, m), zero outside the evaluated interior
    psi: np.ndarray        # (n, m, m)
    psi_asym: np.ndarray   # (n, m, m) antisymmetric part psi - psi^T
    interior: slice        # cells where centered stencils were applied
    scale: float           # magnitude of Lap K_theta used for the threshold
    long_range: bool


def longrange_criterion(
    model: ThermoModel,
    profile: SteadyProfile,
    phi_tol: float = PHI_TOL,
) -> LongRangeReport:
    """Evaluate the sufficient condition for long-range correlations.

    phi = Lap K_theta + div psi and the antisymmetric part of psi are formed
    with centered differences on cell-center values; wall-adjacent cells use
    lower-order stencils and are excluded from the verdict. The verdict is
    long range when max|phi| or max|psi - psi^T| exceeds phi_tol relative to
    the scale of Lap K_theta, separating genuine sources from discretization
    noise. For scalar models psi vanishes identically.
    """
    n, m = profile.q.shape
    h = profile.mesh.h
    K_cells = np.array([K_theta(model, profile.q[i]) for i in range(n)])

    grad_q = np.zeros((n, m))
    grad_q[1:-1] = (profile.q[2:] - profile.q[:-2]) / (2 * h)
    grad_q[0] = (profile.q[1] - profile.q_left) / (1.5 * h)
    grad_q[-1] = (profile.q_right - profile.q[-2]) / (1.5 * h)

    psi = np.zeros((n, m, m))
    for i in range(n):
        J = J_of_q(model, profile.q[i])
        kp = np.asarray(model.mobility_grad(profile.q[i]), dtype=float)
        psi[i] = _psi_at(kp, J, grad_q[i])

    lap_K = np.zeros((n, m, m))
    lap_K[1:-1] = (K_cells[2:] - 2 * K_cells[1:-1] + K_cells[:-2]) / h**2
    div_psi = np.zeros((n, m, m))
    div_psi[1:-1] = (psi[2:] - psi[:-2]) / (2 * h)

    phi = lap_K + div_psi
    interior = slice(2, n - 2)
    psi_asym = psi - psi.transpose(0, 2, 1)
    scale = float(np.max(np.abs(lap_K[interior]))) if n > 4 else 0.0
    threshold = phi_tol * scale
    long_range = bool(
        np.max(np.abs(phi[interior])) > threshold
        or np.max(np.abs(psi_asym[interior])) > threshold
    )
    return LongRangeReport(phi=phi, psi=psi, psi_asym=psi_asym, interior=interior,
                           scale=scale, long_range=long_range)


def _psi_at(kp: np.ndarray, J: np.ndarray, gq: np.ndarray) -> np.ndarray:
    m = J.shape[0]
    psi = np.zeros((m, m))
    for k in range(m):
        for l in range(m):
            acc = 0.0
            for kp_i in range(m):
                for lp in range(m):
                    acc += kp[k, kp_i, lp] * (J[lp, l] * gq[kp_i] - J[kp_i, l] * gq[lp])
            psi[k, l] = acc
    return psi


def split_local_longrange(
    C: np.ndarray,
    model: ThermoModel,
    profile: SteadyProfile,
) -> tuple[np.ndarray, np.ndarray]:
    """Split C into the local-equilibrium diagonal J(q(x))/h and the rest."""
    n, m = profile.q.shape
    C_local = np.zeros_like(C)
    for i in range(n):
        C_local[i * m:(i + 1) * m, i * m:(i + 1) * m] = J_of_q(model, profile.q[i]) / profile.mesh.h
    return C_local, C - C_local


def onsager_check(model: ThermoModel, profile: SteadyProfile) -> float:
    """Reciprocity defect max over cells of max|K(theta(x)) - K(theta(x))^T|."""
    defect = 0.0
    for i in range(profile.q.shape[0]):
        K = K_theta(model, profile.q[i])
        defect = max(defect, float(np.max(np.abs(K - K.T))))
    return defect


@dataclass(frozen=True)
class CovarianceReport:
    C: np.ndarray
    C_local: np.ndarray
    B: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    psi_asym: np.ndarray
    long_range: bool
    onsager_defect: float
    fd_relative_residual: float
    spectral_abscissa: float
    h: float


def compute_report(
    model: ThermoModel,
    profile: SteadyProfile,
    sys: LinearizedSystem | None = None,
    phi_tol: float = PHI_TOL,
) -> CovarianceReport:
    """Full static-covariance analysis of one steady profile."""
    if sys is None:
        sys = assemble(model, profile)
    noise = noise_covariance(model, profile)
    C = lyapunov_solve(sys, noise)
    C_local, B = split_local_longrange(C, model, profile)
    lr = longrange_criterion(model, profile, phi_tol=phi_tol)
    return CovarianceReport(
        C=C, C_local=C_local, B=B,
        phi=lr.phi, psi=lr.psi, psi_asym=lr.psi_asym, long_range=lr.long_range,
        onsager_defect=onsager_check(model, profile),
        fd_relative_residual=fd_residual(sys, noise, C),
        spectral_abscissa=sys.spectral_abscissa,
        h=profile.mesh.h,
    )
