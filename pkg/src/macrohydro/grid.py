"""Uniform 1-D cell-centered mesh and its discrete calculus.

The domain is the unit interval. Cell i has center x_i = (i + 1/2) h with
h = 1/n; faces sit at x = i h, i = 0..n. Reservoir (Dirichlet) values are
imposed at the walls themselves, so wall-face differences act over the
half-cell distance h/2 while interior faces act over h. Face values of
fields are arithmetic means of the two neighbouring values (the wall value
and the first cell center at the walls), which keeps every flux second-order
accurate and makes linear profiles exact for constant mobility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = ["Mesh1D", "BoundaryData", "face_distances", "face_means", "face_diffs", "divergence"]


@dataclass(frozen=True)
class Mesh1D:
    """n uniform cells on (0, 1)."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("mesh needs at least 2 cells")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.h

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h


@dataclass(frozen=True)
class BoundaryData:
    """Reservoir values pinned at the two walls.

    ``kind`` says whether ``left``/``right`` are densities ("q") or
    thermodynamic conjugates ("theta").
    """

    left: np.ndarray
    right: np.ndarray
    kind: str = "q"

    def __post_init__(self):
        object.__setattr__(self, "left", np.atleast_1d(np.asarray(self.left, dtype=float)))
        object.__setattr__(self, "right", np.atleast_1d(np.asarray(self.right, dtype=float)))
        if self.kind not in ("q", "theta"):
            raise ValueError(f"bc kind must be 'q' or 'theta', got {self.kind!r}")
        if self.left.shape != self.right.shape:
            raise ValueError("left/right boundary values must have equal length")

    def as_q(self, model) -> tuple[np.ndarray, np.ndarray]:
        """Boundary densities, inverting s' when the reservoirs fix theta."""
        from .thermo import q_of_theta

        if self.kind == "q":
            for side, val in (("left", self.left), ("right", self.right)):
                if not model.domain.contains(val):
                    raise DomainError(f"{side} boundary value {val} outside model domain")
            return self.left.copy(), self.right.copy()
        mid = _domain_midpoint(model)
        return (
            q_of_theta(model, self.left, q_guess=mid),
            q_of_theta(model, self.right, q_guess=mid),
        )


def _domain_midpoint(model) -> np.ndarray:
    lo = np.where(np.isfinite(model.domain.lo), model.domain.lo, -1.0)
    hi = np.where(np.isfinite(model.domain.hi), model.domain.hi, 1.0)
    return 0.5 * (lo + hi)


def face_distances(mesh: Mesh1D) -> np.ndarray:
    """Center-to-center distance across each face; h/2 at the walls."""
    d = np.full(mesh.n + 1, mesh.h)
    d[0] = d[-1] = 0.5 * mesh.h
    return d


def face_means(q: np.ndarray, q_left: np.ndarray, q_right: np.ndarray) -> np.ndarray:
    """Arithmetic-mean face reconstruction of a cell field, (n+1, m)."""
    out = np.empty((q.shape[0] + 1, q.shape[1]))
    out[0] = 0.5 * (q_left + q[0])
    out[1:-1] = 0.5 * (q[:-1] + q[1:])
    out[-1] = 0.5 * (q[-1] + q_right)
    return out


def face_diffs(q: np.ndarray, q_left: np.ndarray, q_right: np.ndarray) -> np.ndarray:
    """Across-face differences (right minus left), (n+1, m)."""
    out = np.empty((q.shape[0] + 1, q.shape[1]))
    out[0] = q[0] - q_left
    out[1:-1] = q[1:] - q[:-1]
    out[-1] = q_right - q[-1]
    return out


def divergence(face_field: np.ndarray, h: float) -> np.ndarray:
    """Discrete divergence faces -> cells: (g_{i+1} - g_i)/h."""
    return (face_field[1:] - face_field[:-1]) / h
