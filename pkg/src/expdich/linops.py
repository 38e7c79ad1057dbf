"""Operator sequences, transition products and subspace geometry.

Vectors are 1-D arrays, batches of vectors are 2-D arrays with one vector
per row, and subspaces store an orthonormal basis as matrix columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ContractError, GapViolationError

FORWARD = "forward"
BACKWARD = "backward"
ORTHO_TOL = 1e-10


def _check_direction(direction: str) -> str:
    if direction not in (FORWARD, BACKWARD):
        raise ContractError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return direction


@dataclass(frozen=True)
class OperatorSequence:
    """An index-labelled family of square matrices.

    For ``direction == "forward"`` the matrix at index ``n`` maps index ``n`` to
    ``n + 1``. For ``direction == "backward"`` it maps index ``n`` to ``n - 1``
    and is only queried for ``n >= 1``. Matrices need not be invertible.
    """

    dim: int
    direction: str
    provider: Callable[[int], np.ndarray]
    length: int | None = None  # number of valid indices, None for unbounded
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ContractError("dim must be positive")
        _check_direction(self.direction)

    def __call__(self, n: int) -> np.ndarray:
        return self.matrix(n)

    def matrix(self, n: int) -> np.ndarray:
        if n < 0 or (self.length is not None and n >= self.length):
            raise ContractError(f"index {n} outside the sequence range")
        mat = np.asarray(self.provider(n), dtype=float)
        if mat.shape != (self.dim, self.dim):
            raise ContractError(f"provider returned shape {mat.shape} at n={n}, expected {(self.dim, self.dim)}")
        if not np.all(np.isfinite(mat)):
            raise ContractError(f"non-finite entries at n={n}")
        return mat

    @classmethod
    def constant(cls, mat, direction: str = FORWARD, name: str = "constant") -> "OperatorSequence":
        mat = np.array(mat, dtype=float)
        return cls(mat.shape[0], direction, lambda n: mat, name=name)

    @classmethod
    def periodic(cls, mats: Sequence, direction: str = FORWARD, name: str = "periodic") -> "OperatorSequence":
        stack = [np.array(m, dtype=float) for m in mats]
        if not stack:
            raise ContractError("periodic sequence needs at least one matrix")
        return cls(stack[0].shape[0], direction, lambda n: stack[n % len(stack)], name=name)

    @classmethod
    def from_matrices(cls, mats: Sequence, direction: str = FORWARD, name: str = "matrices") -> "OperatorSequence":
        stack = [np.array(m, dtype=float) for m in mats]
        if not stack:
            raise ContractError("empty matrix list")
        return cls(stack[0].shape[0], direction, stack.__getitem__, length=len(stack), name=name)


@dataclass(frozen=True)
class TransitionProduct:
    start: int
    stop: int
    matrix: np.ndarray
    condition_estimate: float


def _product(seq: OperatorSequence, m: int, n: int) -> tuple[np.ndarray, float]:
    """Ordered product rescaled to unit norm, together with log of the scale."""
    prod = np.eye(seq.dim)
    log_scale = 0.0
    steps = range(n, m) if seq.direction == FORWARD else range(m, n, -1)
    for k in steps:
        prod = seq.matrix(k) @ prod
        nrm = np.linalg.norm(prod, 2)
        if nrm == 0.0:
            return prod, -np.inf
        if nrm > 1e100 or nrm < 1e-100:
            prod /= nrm
            log_scale += np.log(nrm)
    return prod, log_scale


def compose(seq: OperatorSequence, m: int, n: int) -> TransitionProduct:
    """Transition product between indices ``n <= m``.

    Forward sequences give ``B_{m-1} ... B_n``; backward sequences give
    ``A_{n+1} ... A_m`` (the map from index ``m`` back to index ``n``).
    """
    if not 0 <= n <= m:
        raise ContractError(f"compose needs 0 <= n <= m, got n={n}, m={m}")
    prod, log_scale = _product(seq, m, n)
    if log_scale != 0.0:
        prod = prod * np.exp(log_scale)
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(prod)) if prod.size else 1.0
    return TransitionProduct(n, m, prod, cond)


def normalized_compose(seq: OperatorSequence, m: int, n: int) -> tuple[np.ndarray, float]:
    """Like :func:`compose` but returns ``(P / s, log s)`` to avoid overflow."""
    if not 0 <= n <= m:
        raise ContractError(f"compose needs 0 <= n <= m, got n={n}, m={m}")
    return _product(seq, m, n)


def _sign_fix(basis: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of every column positive, for reproducible output
    if basis.size == 0:
        return basis
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


@dataclass(frozen=True)
class Subspace:
    """A linear subspace stored through an orthonormal basis (columns)."""

    basis: np.ndarray
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        if basis.ndim != 2:
            raise ContractError("basis must be a 2-D array")
        if basis.shape[1] > basis.shape[0]:
            raise ContractError("more basis vectors than the ambient dimension")
        gram = basis.T @ basis
        if basis.shape[1] and np.max(np.abs(gram - np.eye(basis.shape[1]))) > ORTHO_TOL:
            raise ContractError("basis columns are not orthonormal")
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def codim(self) -> int:
        return self.ambient_dim - self.dim

    @classmethod
    def from_vectors(cls, vectors, rtol: float = 1e-12, dim: int | None = None) -> "Subspace":
        """Orthonormalize the columns of ``vectors``.

        The rank is decided by singular values above ``rtol`` times the largest,
        unless ``dim`` forces the number of retained directions.
        """
        mat = np.asarray(vectors, dtype=float)
        if mat.ndim == 1:
            mat = mat[:, None]
        if mat.shape[1] == 0:
            return cls(np.zeros((mat.shape[0], 0)))
        u, s, _ = np.linalg.svd(mat, full_matrices=False)
        if dim is None:
            dim = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
        return cls(_sign_fix(u[:, :dim]))

    @classmethod
    def coordinate(cls, ambient_dim: int, indices: Sequence[int]) -> "Subspace":
        return cls(np.eye(ambient_dim)[:, list(indices)])

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, v: np.ndarray) -> np.ndarray:
        """Orthogonal projection of a vector or of a row batch."""
        v = np.asarray(v, dtype=float)
        return (v @ self.basis) @ self.basis.T

    def complement(self) -> "Subspace":
        if self.dim == 0:
            return Subspace(np.eye(self.ambient_dim))
        q, _ = np.linalg.qr(self.basis, mode="complete")
        return Subspace(_sign_fix(q[:, self.dim:]))

    def distance_to(self, v: np.ndarray) -> float:
        """Relative distance of ``v`` to the subspace."""
        v = np.asarray(v, dtype=float)
        nrm = np.linalg.norm(v)
        if nrm == 0.0:
            return 0.0
        return float(np.linalg.norm(v - self.project(v)) / nrm)


def principal_angles(Y: Subspace, Z: Subspace) -> np.ndarray:
    """Principal angles in non-decreasing order, ``min(Y.dim, Z.dim)`` of them."""
    if Y.ambient_dim != Z.ambient_dim:
        raise ContractError("subspaces live in different ambient spaces")
    if Y.dim == 0 or Z.dim == 0:
        return np.zeros(0)
    return np.sort(sla.subspace_angles(Y.basis, Z.basis))


def sphere_distance(Y: Subspace, Z: Subspace) -> float:
    """Squared Hausdorff distance of the unit spheres of two subspaces.

    For a unit ``y`` in ``Y`` the closest unit vector of ``Z`` is the normalized
    projection, at squared distance ``2 - 2 |P_Z y|``. Minimizing ``|P_Z y|``
    over ``y`` gives the cosine of the largest principal angle, so both
    sup-inf terms equal ``2 (1 - cos theta_max) = 4 sin^2(theta_max / 2)``.
    """
    if Y.dim != Z.dim or Y.ambient_dim != Z.ambient_dim:
        raise ContractError("sphere_distance needs subspaces of equal dimension in the same space")
    if Y.dim == 0:
        raise ContractError("sphere_distance is undefined for the zero subspace")
    theta = principal_angles(Y, Z)[-1]
    return float(4.0 * np.sin(0.5 * theta) ** 2)


def split_spectrum(B, a: float, b: float, rtol: float = 1e-9) -> tuple[Subspace, Subspace]:
    """Split the space along eigenvectors of ``B^T B``.

    Eigenvalues up to ``a**2`` span ``Y_s`` and those from ``b**2`` on span
    ``Y_u``. An eigenvalue strictly inside the gap raises
    :class:`GapViolationError`.
    """
    B = np.asarray(B, dtype=float)
    if not 0 <= a < b:
        raise ContractError("split_spectrum needs 0 <= a < b")
    evals, evecs = np.linalg.eigh(B.T @ B)
    scale = max(b * b, float(evals[-1]), 1e-300)
    stable = evals <= a * a + rtol * scale
    unstable = ~stable & (evals >= b * b - rtol * scale)
    bad = ~(stable | unstable)
    if np.any(bad):
        raise GapViolationError(
            f"eigenvalue(s) {evals[bad].tolist()} of B^T B inside the gap ({a * a}, {b * b})"
        )
    return Subspace(_sign_fix(evecs[:, stable])), Subspace(_sign_fix(evecs[:, unstable]))


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def intro_sequence() -> OperatorSequence:
    """Period-two test system; each step has eigenvalues of modulus 1/2, the
    two-step product is diag(-1/64, -4)."""
    even = np.array([[0.0, -2.0], [0.125, 0.0]])
    odd = np.array([[0.0, -0.125], [2.0, 0.0]])
    return OperatorSequence.periodic([even, odd], name="intro")
