"""Phenomenological inputs of a diffusive system.

A model bundles the equilibrium entropy density ``s(q)`` of the conserved
fields ``q`` (an m-vector), the mobility matrix ``ktilde(q)`` relating the
current to ``-grad q``, and the time-reversal parities of the components.
Everything else is derived:

    theta(q) = s'(q)              thermodynamic conjugate (reservoir variable)
    J(q)     = -s''(q)^-1         local-equilibrium susceptibility, SPD
    K(theta) = ktilde(q) J(q)     Onsager coefficient matrix in theta form

Models are supplied as callables with user-provided derivatives; a central
finite-difference cross-check runs at construction so inconsistent inputs
fail fast instead of corrupting downstream solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DomainError, DomainEscape, NoConvergence, SingularHessian

__all__ = [
    "Box",
    "ThermoModel",
    "sep",
    "gaussian",
    "twocomp",
    "make_model",
    "theta_of_q",
    "J_of_q",
    "K_of_q",
    "q_of_theta",
    "casimir_defect",
    "with_antisymmetric_mobility",
]

# Defaults for the scalar inversion theta -> q.
NEWTON_TOL = 1e-12
NEWTON_MAXITER = 50
COND_BOUND = 1e12


@dataclass(frozen=True)
class Box:
    """Open axis-aligned box used as the single-phase validity region."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    def contains(self, q: np.ndarray) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q > self.lo) and np.all(q < self.hi))

    def sample_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Points strictly inside the box (unbounded sides clipped to [-2, 2])."""
        lo = np.where(np.isfinite(self.lo), self.lo, -2.0)
        hi = np.where(np.isfinite(self.hi), self.hi, 2.0)
        u = rng.uniform(0.05, 0.95, size=(count, lo.size))
        return lo + u * (hi - lo)


@dataclass(frozen=True)
class ThermoModel:
    """Entropy/mobility bundle defining one physical system.

    Fields
    ------
    m : number of conserved components.
    s : q -> scalar entropy density.
    s_grad : q -> (m,) gradient of s.
    s_hess : q -> (m, m) Hessian of s; must be symmetric negative definite
        on the domain.
    mobility : q -> (m, m) mobility matrix ktilde(q).
    mobility_grad : q -> (m, m, m) array d ktilde[k, l] / d q[r].
    parities : (m,) array of +-1, behaviour of each component under time
        reversal.
    domain : open validity Box; operations reject points outside it rather
        than clamping, so solver escapes surface immediately.
    """

    name: str
    m: int
    s: Callable[[np.ndarray], float]
    s_grad: Callable[[np.ndarray], np.ndarray]
    s_hess: Callable[[np.ndarray], np.ndarray]
    mobility: Callable[[np.ndarray], np.ndarray]
    mobility_grad: Callable[[np.ndarray], np.ndarray]
    parities: np.ndarray = field(default=None)
    domain: Box = field(default=None)

    def __post_init__(self):
        parities = self.parities if self.parities is not None else np.ones(self.m)
        object.__setattr__(self, "parities", np.asarray(parities, dtype=float))
        domain = self.domain
        if domain is None:
            domain = Box(np.full(self.m, -np.inf), np.full(self.m, np.inf))
        object.__setattr__(self, "domain", domain)
        if not np.all(np.abs(self.parities) == 1.0):
            raise ValueError("parities must be +-1")
        _self_check(self)

    def check_domain(self, q: np.ndarray) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (self.m,):
            raise ValueError(f"expected q of shape ({self.m},), got {q.shape}")
        if not self.domain.contains(q):
            raise DomainError(f"{self.name}: q={q} outside validity region")
        return q


def _self_check(model: ThermoModel, points: int = 3, eps: float = 1e-5, rtol: float = 1e-6):
    """Cross-check supplied derivatives against central finite differences."""
    rng = np.random.default_rng(20260811)
    for q in model.domain.sample_points(points, rng):
        scale = max(1.0, float(np.max(np.abs(q))))
        step = eps * scale
        g = np.asarray(model.s_grad(q), dtype=float)
        h = np.asarray(model.s_hess(q), dtype=float)
        kp = np.asarray(model.mobility_grad(q), dtype=float)
        if g.shape != (model.m,) or h.shape != (model.m, model.m):
            raise ValueError(f"{model.name}: s_grad/s_hess have wrong shapes")
        if kp.shape != (model.m, model.m, model.m):
            raise ValueError(f"{model.name}: mobility_grad must have shape (m, m, m)")
        for r in range(model.m):
            dq = np.zeros(model.m)
            dq[r] = step
            if not (model.domain.contains(q + dq) and model.domain.contains(q - dq)):
                continue
            fd_g = (model.s(q + dq) - model.s(q - dq)) / (2 * step)
            fd_h = (np.asarray(model.s_grad(q + dq)) - np.asarray(model.s_grad(q - dq))) / (2 * step)
            fd_kp = (np.asarray(model.mobility(q + dq)) - np.asarray(model.mobility(q - dq))) / (2 * step)
            ref = max(1.0, abs(fd_g), float(np.max(np.abs(fd_h))))
            if abs(g[r] - fd_g) > rtol * ref:
                raise ValueError(f"{model.name}: s_grad inconsistent with s (component {r})")
            if np.max(np.abs(h[:, r] - fd_h)) > rtol * ref:
                raise ValueError(f"{model.name}: s_hess inconsistent with s_grad (column {r})")
            kref = max(1.0, float(np.max(np.abs(fd_kp))))
            if np.max(np.abs(kp[:, :, r] - fd_kp)) > rtol * kref:
                raise ValueError(f"{model.name}: mobility_grad inconsistent with mobility (dq_{r})")


# ---------------------------------------------------------------------------
# Built-in models
# ---------------------------------------------------------------------------

def sep() -> ThermoModel:
    """Symmetric exclusion process: s(q) = -q ln q - (1-q) ln(1-q), unit mobility."""

    def s(q):
        q = float(q[0])
        return -q * np.log(q) - (1 - q) * np.log(1 - q)

    return ThermoModel(
        name="sep",
        m=1,
        s=s,
        s_grad=lambda q: np.array([np.log((1 - q[0]) / q[0])]),
        s_hess=lambda q: np.array([[-1.0 / (q[0] * (1 - q[0]))]]),
        mobility=lambda q: np.array([[1.0]]),
        mobility_grad=lambda q: np.zeros((1, 1, 1)),
        parities=np.array([1.0]),
        domain=Box([0.0], [1.0]),
    )


def gaussian() -> ThermoModel:
    """Linear reference model: s(q) = -q^2/2, unit mobility, unbounded domain."""
    return ThermoModel(
        name="gaussian",
        m=1,
        s=lambda q: -0.5 * float(q[0]) ** 2,
        s_grad=lambda q: -np.asarray(q, dtype=float),
        s_hess=lambda q: -np.eye(1),
        mobility=lambda q: np.array([[1.0]]),
        mobility_grad=lambda q: np.zeros((1, 1, 1)),
        parities=np.array([1.0]),
        domain=Box([-np.inf], [np.inf]),
    )


TWOCOMP_H = np.array([[2.0, 0.5], [0.5, 1.0]])
TWOCOMP_A = np.array([[1.0, 0.3], [0.3, 0.8]])


def twocomp(parities=(1.0, 1.0)) -> ThermoModel:
    """Two-component quadratic model with cross-coupled Hessian.

    s(q) = -q.H q / 2 with H SPD non-diagonal, and the mobility is chosen as
    A H (A symmetric positive definite) so that the Onsager matrix
    K = ktilde J = A H H^-1 = A is exactly symmetric by construction.
    """
    H = TWOCOMP_H
    A = TWOCOMP_A
    ktilde = A @ H

    return ThermoModel(
        name="twocomp",
        m=2,
        s=lambda q: -0.5 * float(q @ H @ q),
        s_grad=lambda q: -(H @ q),
        s_hess=lambda q: -H,
        mobility=lambda q: ktilde.copy(),
        mobility_grad=lambda q: np.zeros((2, 2, 2)),
        parities=np.asarray(parities, dtype=float),
        domain=Box([-np.inf, -np.inf], [np.inf, np.inf]),
    )


_BUILTINS = {"sep": sep, "gaussian": gaussian, "twocomp": twocomp}


def make_model(name: str, params: dict | None = None) -> ThermoModel:
    """Model factory used by the configuration layer.

    Only the built-in names are reachable from configs; custom models go
    through the library API directly.
    """
    params = dict(params or {})
    key = name.lower()
    if key not in _BUILTINS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(_BUILTINS)}")
    if key == "twocomp":
        parities = params.pop("parities", (1.0, 1.0))
        if params:
            raise ValueError(f"unknown model parameters {sorted(params)}")
        return twocomp(parities=parities)
    if params:
        raise ValueError(f"model {name!r} takes no parameters, got {sorted(params)}")
    return _BUILTINS[key]()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def theta_of_q(model: ThermoModel, q: np.ndarray) -> np.ndarray:
    """Thermodynamic conjugate theta = s'(q)."""
    q = model.check_domain(q)
    return np.asarray(model.s_grad(q), dtype=float)


def J_of_q(model: ThermoModel, q: np.ndarray, cond_bound: float = COND_BOUND) -> np.ndarray:
    """Susceptibility J(q) = -s''(q)^-1 (symmetric positive definite)."""
    q = model.check_domain(q)
    hess = np.asarray(model.s_hess(q), dtype=float)
    if np.linalg.cond(hess) > cond_bound:
        raise SingularHessian(f"{model.name}: s''(q) condition number exceeds {cond_bound:g} at q={q}")
    return -np.linalg.inv(hess)


def K_of_q(model: ThermoModel, q: np.ndarray) -> np.ndarray:
    """Onsager matrix K = ktilde(q) J(q) driving the current via grad theta."""
    q = model.check_domain(q)
    return np.asarray(model.mobility(q), dtype=float) @ J_of_q(model, q)


def q_of_theta(
    model: ThermoModel,
    theta: np.ndarray,
    q_guess: np.ndarray,
    tol: float = NEWTON_TOL,
    maxiter: int = NEWTON_MAXITER,
) -> np.ndarray:
    """Invert theta = s'(q) by damped Newton iteration.

    The step is halved until the iterate stays strictly inside the domain and
    the residual decreases; sizes here are tiny, so robustness wins over speed.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    q = model.check_domain(q_guess).copy()
    res = np.asarray(model.s_grad(q)) - theta
    for _ in range(maxiter):
        nrm = np.max(np.abs(res))
        if nrm < tol:
            return q
        step = np.linalg.solve(np.asarray(model.s_hess(q), dtype=float), -res)
        alpha = 1.0
        for _ in range(60):
            q_new = q + alpha * step
            if model.domain.contains(q_new):
                res_new = np.asarray(model.s_grad(q_new)) - theta
                if np.max(np.abs(res_new)) < nrm or np.max(np.abs(res_new)) < tol:
                    break
            alpha *= 0.5
        else:
            raise DomainEscape(f"{model.name}: inversion of s' could not stay in domain near q={q}")
        q, res = q_new, res_new
    if np.max(np.abs(res)) < tol:
        return q
    raise NoConvergence(f"{model.name}: q_of_theta stalled at |resid|={np.max(np.abs(res)):.3e}")


def casimir_defect(model: ThermoModel, q: np.ndarray) -> float:
    """Parity-extended reciprocity defect max_kl |K_kl(theta) - R_k R_l K_lk(R theta)|.

    R applies the component parities to theta; the reflected point is mapped
    back to a density via q_of_theta before evaluating K there.
    """
    q = model.check_domain(q)
    R = model.parities
    theta = theta_of_q(model, q)
    K_here = K_of_q(model, q)
    q_reflected = q_of_theta(model, R * theta, q_guess=q)
    K_there = K_of_q(model, q_reflected)
    defect = K_here - np.outer(R, R) * K_there.T
    return float(np.max(np.abs(defect)))


def with_antisymmetric_mobility(model: ThermoModel, magnitude: float) -> ThermoModel:
    """Diagnostic copy of ``model`` with reciprocity broken on purpose.

    Adds M J(q)^-1 to the mobility with M antisymmetric, scaled so that the
    resulting Onsager defect max|K - K^T| equals ``magnitude`` exactly.
    Used to confirm the reciprocity check actually detects violations.
    """
    if model.m < 2:
        raise ValueError("antisymmetric injection needs m >= 2")
    M = np.zeros((model.m, model.m))
    M[0, 1] = 0.5 * magnitude
    M[1, 0] = -0.5 * magnitude
    base_mob = model.mobility
    base_grad = model.mobility_grad

    def mobility(q):
        hess = np.asarray(model.s_hess(q), dtype=float)
        # J^-1 = -s''(q), so the injected Onsager term is exactly M.
        return np.asarray(base_mob(q), dtype=float) + M @ (-hess)

    def mobility_grad(q):
        # Quadratic-entropy models only (constant Hessian): derivative unchanged.
        return np.asarray(base_grad(q), dtype=float)

    return replace(model, name=model.name + "+antisym", mobility=mobility, mobility_grad=mobility_grad)
