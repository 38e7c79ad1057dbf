"""Uniform 1-D grids with Dirichlet walls and the finite-difference pieces
shared by the heat and Klein-Gordon solvers.

Grid vectors hold the interior nodes only; the wall values are zero. With
zero wall values the trapezoidal rule reduces to ``dx * sum``, so every
"L2" quantity below is that grid quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ContractError

BOUNDARIES = ("dirichlet", "truncated-line-dirichlet")


@dataclass(frozen=True)
class GridSpec:
    x_lo: float
    x_hi: float
    n_points: int  # interior nodes
    dt: float = 1e-3
    boundary: str = "dirichlet"

    def __post_init__(self):
        if not self.x_hi > self.x_lo:
            raise ContractError("empty domain")
        if self.n_points < 3:
            raise ContractError("need at least 3 interior points")
        if not self.dt > 0:
            raise ContractError("dt must be positive")
        if self.boundary not in BOUNDARIES:
            raise ContractError(f"boundary must be one of {BOUNDARIES}")

    @classmethod
    def from_spacing(cls, x_lo: float, x_hi: float, dx: float, dt: float = 1e-3, boundary: str = "dirichlet"):
        n = int(round((x_hi - x_lo) / dx)) - 1
        return cls(x_lo, x_hi, n, dt, boundary)

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_points + 1)

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + self.dx * np.arange(1, self.n_points + 1)

    @property
    def courant(self) -> float:
        """``dt / dx**2``, recorded as an accuracy indicator for implicit schemes."""
        return self.dt / self.dx**2

    def inner(self, u, v) -> float:
        return float(self.dx * np.dot(u, v))

    def norm(self, u) -> float:
        return float(np.sqrt(self.dx * np.dot(u, u)))

    def gradient_norm(self, u) -> float:
        """Grid ``H^1_0`` seminorm from forward differences including both walls."""
        du = np.diff(np.concatenate([[0.0], u, [0.0]])) / self.dx
        return float(np.sqrt(self.dx * np.dot(du, du)))

    def h1_norm(self, u) -> float:
        return float(np.hypot(self.norm(u), self.gradient_norm(u)))

    def derivative(self, u) -> np.ndarray:
        """Centered first derivative with zero wall values."""
        padded = np.concatenate([[0.0], u, [0.0]])
        return (padded[2:] - padded[:-2]) / (2.0 * self.dx)


def laplacian_bands(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of ``-d^2/dx^2`` (second-order, Dirichlet)."""
    h2 = grid.dx**2
    return np.full(grid.n_points, 2.0 / h2), np.full(grid.n_points - 1, -1.0 / h2)


def schrodinger_bands(grid: GridSpec, V) -> tuple[np.ndarray, np.ndarray]:
    d, e = laplacian_bands(grid)
    V = np.asarray(V, dtype=float)
    if V.shape != (grid.n_points,):
        raise ContractError(f"potential has shape {V.shape}, grid has {grid.n_points} points")
    if not np.all(np.isfinite(V)):
        raise ContractError("potential has non-finite values")
    return d + V, e


def tridiagonal_matrix(diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def tridiagonal_apply(diag: np.ndarray, off: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``T @ u`` for a symmetric tridiagonal ``T``; ``u`` may have extra columns."""
    out = diag.reshape((-1,) + (1,) * (u.ndim - 1)) * u
    o = off.reshape((-1,) + (1,) * (u.ndim - 1))
    out[:-1] += o * u[1:]
    out[1:] += o * u[:-1]
    return out


def tridiagonal_solve(diag: np.ndarray, off: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return sla.solve_banded((1, 1), ab, rhs)


def lowest_modes(grid: GridSpec, diag: np.ndarray, off: np.ndarray, count: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` smallest eigenpairs of a symmetric tridiagonal operator.

    Eigenvectors are normalized in the grid norm and oriented so that their
    largest-magnitude entry is positive.
    """
    count = min(count, len(diag))
    vals, vecs = sla.eigh_tridiagonal(diag, off, select="i", select_range=(0, count - 1))
    vecs = vecs / np.sqrt(grid.dx)
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    return vals, vecs


def negative_eigenpairs(grid: GridSpec, diag, off, threshold: float = 0.0, max_count: int = 32):
    """All eigenpairs below ``threshold`` (up to ``max_count``)."""
    vals, vecs = lowest_modes(grid, diag, off, max_count)
    keep = vals < threshold
    return vals[keep], vecs[:, keep]
