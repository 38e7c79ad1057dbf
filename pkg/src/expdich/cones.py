"""Cone functionals, cone membership and the inequality checks built on them.

A pair of functionals ``I_minus(n, v)`` and ``I_plus(n, v)`` defines, for every
``c > 0``, a stable cone ``{I_plus <= c I_minus}`` and an unstable cone
``{I_plus >= c I_minus}``. Functionals accept a single vector or a batch with
one vector per row and return a scalar or a 1-D array accordingly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .errors import ConditioningError, ContractError, DegeneracyError, HypothesisError
from .linops import BACKWARD, FORWARD, OperatorSequence, Subspace

STABLE = "stable"
UNSTABLE = "unstable"
BOUNDARY = "boundary"
MEMBERSHIP_RTOL = 1e-12

Functional = Callable[[int, np.ndarray], np.ndarray]


def _as_batch(v) -> tuple[np.ndarray, bool]:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ContractError("expected a vector or a 2-D batch of row vectors")
    return arr, False


def _ret(values: np.ndarray, single: bool):
    return float(values[0]) if single else values


@dataclass(frozen=True)
class ConeFunctionalPair:
    """The functionals ``I^-``/``I^+`` plus the covector family of the finite-rank side.

    ``side`` names the functional sandwiched by covector maxima: ``"plus"`` for
    forward systems, ``"minus"`` for backward ones. ``covectors(n)`` returns a
    ``K x dim`` array.
    """

    minus: Functional
    plus: Functional
    K: int
    c1: float | None = None
    c2: float | None = None
    covectors: Callable[[int], np.ndarray] | None = None
    side: str = "plus"
    name: str = ""

    def I_minus(self, n, v):
        V, single = _as_batch(v)
        return _ret(np.asarray(self.minus(n, V), dtype=float).reshape(-1), single)

    def I_plus(self, n, v):
        V, single = _as_batch(v)
        return _ret(np.asarray(self.plus(n, V), dtype=float).reshape(-1), single)


@dataclass(frozen=True)
class ConeParams:
    c3: float
    c4: float
    rate_a: float
    rate_b: float
    direction: str = FORWARD
    continuous: bool = False  # rates are exponents lambda < mu instead of factors a < b

    def __post_init__(self):
        if self.c3 <= 0 or self.c4 <= 0:
            raise ContractError("cone constants c3, c4 must be positive")
        if not self.rate_a < self.rate_b:
            raise ContractError("rates must satisfy rate_a < rate_b")
        if self.direction not in (FORWARD, BACKWARD):
            raise ContractError("direction must be forward or backward")


@dataclass(frozen=True)
class GateReport:
    ok: bool
    direction: str
    bound: float
    c4: float
    slack: float

    def line(self) -> str:
        if self.direction == FORWARD:
            rel = f"c4={self.c4:.6g} < {self.bound:.6g}"
        else:
            rel = f"c4={self.c4:.6g} > {self.bound:.6g}"
        status = "PASS" if self.ok else "FAIL"
        return f"{status} constants gate ({self.direction}): {rel}, slack {self.slack:.3e}"


def gate_bound(c1: float, c2: float, c3: float, direction: str) -> float:
    """Threshold on ``c4``: an upper bound (forward) or a lower bound (backward)."""
    if min(c1, c2, c3) <= 0:
        raise ContractError("gate constants must be positive")
    if direction == FORWARD:
        return (c1 * c2) ** 2 * c3 / (3.0 * (1.0 + c3))
    if direction == BACKWARD:
        return 3.0 * (c3 + 1.0) / (c1 * c2) ** 2
    raise ContractError("direction must be forward or backward")


def constants_gate(pair, params: ConeParams) -> GateReport:
    """Check the compatibility inequality between ``c1 .. c4``.

    ``pair`` may be a :class:`ConeFunctionalPair` or a ``(c1, c2)`` tuple.
    """
    c1, c2 = (pair.c1, pair.c2) if isinstance(pair, ConeFunctionalPair) else pair
    if c1 is None or c2 is None:
        raise ContractError("the functional pair carries no c1/c2 constants")
    bound = gate_bound(c1, c2, params.c3, params.direction)
    if params.direction == FORWARD:
        slack = bound - params.c4
    else:
        slack = params.c4 - bound
    return GateReport(slack > 0, params.direction, bound, params.c4, slack)


def _classify(ip: np.ndarray, im: np.ndarray, c: float) -> np.ndarray:
    diff = ip - c * im
    tol = MEMBERSHIP_RTOL * np.maximum(np.abs(ip), np.abs(c * im))
    out = np.full(ip.shape, BOUNDARY, dtype=object)
    out[diff < -tol] = STABLE
    out[diff > tol] = UNSTABLE
    return out


def membership(pair: ConeFunctionalPair, c: float, n, v):
    """Classify ``v`` as ``"stable"``, ``"unstable"`` or ``"boundary"`` for threshold ``c``."""
    if c <= 0:
        raise ContractError("cone threshold must be positive")
    V, single = _as_batch(v)
    if not np.all(np.isfinite(V)):
        raise ContractError("non-finite vector")
    labels = _classify(pair.I_plus(n, V), pair.I_minus(n, V), c)
    return labels[0] if single else labels


def in_stable_cone(pair, c, n, V, rtol=1e-10, atol=0.0) -> np.ndarray:
    """Closed-cone membership with a rounding allowance; works on row batches."""
    ip, im = pair.I_plus(n, V), pair.I_minus(n, V)
    return ip <= c * im + rtol * np.maximum(ip, c * im) + atol


def in_unstable_cone(pair, c, n, V, rtol=1e-10, atol=0.0) -> np.ndarray:
    ip, im = pair.I_plus(n, V), pair.I_minus(n, V)
    return ip >= c * im - rtol * np.maximum(ip, c * im) - atol


@dataclass(frozen=True)
class C1Estimate:
    lower: float  # min of (I^- + I^+)/|v| over the samples
    upper: float  # max of the same ratio
    c1: float  # largest c1 consistent with both one-sided bounds
    ok: bool  # False when the samples contradict positivity


def estimate_c1(pair: ConeFunctionalPair, samples, indices: Iterable = (0,)) -> C1Estimate:
    V, _ = _as_batch(samples)
    if V.shape[0] == 0:
        raise ContractError("no samples")
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0):
        raise ContractError("zero vector among the samples")
    ratios = np.concatenate([(pair.I_minus(n, V) + pair.I_plus(n, V)) / norms for n in indices])
    lower, upper = float(ratios.min()), float(ratios.max())
    c1 = 0.0 if lower <= 0 else min(lower, 1.0 / upper)
    return C1Estimate(lower, upper, c1, c1 > 0)


@dataclass(frozen=True)
class Violation:
    n: int
    sample_id: int
    inequality: str
    lhs: float
    rhs: float
    margin: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def write_violations(path, violations: Sequence[Violation]) -> None:
    with open(path, "w") as fh:
        for rec in violations:
            fh.write(rec.to_json() + "\n")


def _samples_at(samples, n) -> np.ndarray:
    V = samples(n) if callable(samples) else samples
    V, _ = _as_batch(V)
    return V


def _collect(n, ids, name, lhs, rhs, margin, out):
    for i in ids:
        out.append(Violation(int(n), int(i), name, float(lhs[i]), float(rhs[i]), float(margin[i])))


def check_step_inequalities(
    seq: OperatorSequence,
    pair: ConeFunctionalPair,
    params: ConeParams,
    n_range: Iterable[int],
    samples,
    rtol: float = 1e-10,
) -> list[Violation]:
    """Test the conditioned one-step decay and growth inequalities.

    Forward: ``I^-_{n+1}(B v) <= a I^-_n(v)`` whenever ``B v`` lies in the stable
    cone of threshold ``c3`` at ``n + 1``, and ``I^+_{n+1}(B v) >= b I^+_n(v)``
    whenever ``v`` lies in the unstable cone of threshold ``c4`` at ``n``.
    Backward: ``I^-_n(v) <= a I^-_{n-1}(A v)`` for ``v`` in the stable cone of
    ``c4`` at ``n``, and ``I^+_n(v) >= b I^+_{n-1}(A v)`` when ``A v`` lies in
    the unstable cone of ``c3`` at ``n - 1``. Margins are positive when the
    inequality holds. An empty list means every sample passed.
    """
    a, b, c3, c4 = params.rate_a, params.rate_b, params.c3, params.c4
    out: list[Violation] = []
    for n in n_range:
        V = _samples_at(samples, n)
        W = V @ seq.matrix(n).T
        scale = 1e-13 * np.maximum(np.linalg.norm(V, axis=1), np.linalg.norm(W, axis=1))
        if params.direction == FORWARD:
            src, dst = n, n + 1
            src_v, dst_v = V, W
        else:
            if n < 1:
                raise ContractError("backward checks need n >= 1")
            src, dst = n, n - 1
            src_v, dst_v = V, W
        im_s, ip_s = pair.I_minus(src, src_v), pair.I_plus(src, src_v)
        im_d, ip_d = pair.I_minus(dst, dst_v), pair.I_plus(dst, dst_v)
        if params.direction == FORWARD:
            cond_minus = ip_d <= c3 * im_d + rtol * np.maximum(ip_d, c3 * im_d)
            lhs_m, rhs_m = im_d, a * im_s
            cond_plus = ip_s >= c4 * im_s - rtol * np.maximum(ip_s, c4 * im_s)
            lhs_p, rhs_p = ip_d, b * ip_s
        else:
            cond_minus = ip_s <= c4 * im_s + rtol * np.maximum(ip_s, c4 * im_s)
            lhs_m, rhs_m = im_s, a * im_d
            cond_plus = ip_d >= c3 * im_d - rtol * np.maximum(ip_d, c3 * im_d)
            lhs_p, rhs_p = ip_s, b * ip_d
        margin_m = rhs_m - lhs_m
        tol_m = rtol * np.maximum(lhs_m, rhs_m) + scale
        bad = np.nonzero(cond_minus & (margin_m < -tol_m))[0]
        _collect(n, bad, "decay", lhs_m, rhs_m, margin_m, out)
        margin_p = lhs_p - rhs_p
        tol_p = rtol * np.maximum(lhs_p, rhs_p) + scale
        bad = np.nonzero(cond_plus & (margin_p < -tol_p))[0]
        _collect(n, bad, "growth", lhs_p, rhs_p, margin_p, out)
    out.sort(key=lambda r: (r.n, r.sample_id, r.inequality))
    return out


def check_cone_invariance(
    seq: OperatorSequence,
    pair: ConeFunctionalPair,
    c_values: Sequence[float],
    n_range: Iterable[int],
    samples,
    rtol: float = 1e-10,
) -> list[Violation]:
    """Sampled test that unstable cones map into unstable cones and stable
    cones pull back into stable cones, for each threshold in ``c_values``.

    The ``lhs``/``rhs`` fields of a violation hold ``I^+`` and ``c I^-`` of the
    vector whose membership failed.
    """
    out: list[Violation] = []
    for n in n_range:
        V = _samples_at(samples, n)
        W = V @ seq.matrix(n).T
        dst = n + 1 if seq.direction == FORWARD else n - 1
        atol_v = 1e-13 * np.linalg.norm(V, axis=1)
        atol_w = 1e-13 * np.linalg.norm(W, axis=1)
        for c in c_values:
            ip_v, im_v = pair.I_plus(n, V), pair.I_minus(n, V)
            ip_w, im_w = pair.I_plus(dst, W), pair.I_minus(dst, W)
            v_unst = ip_v >= c * im_v - rtol * np.maximum(ip_v, c * im_v) - atol_v
            v_stab = ip_v <= c * im_v + rtol * np.maximum(ip_v, c * im_v) + atol_v
            w_unst = ip_w >= c * im_w - rtol * np.maximum(ip_w, c * im_w) - atol_w
            w_stab = ip_w <= c * im_w + rtol * np.maximum(ip_w, c * im_w) + atol_w
            if seq.direction == FORWARD:
                checks = [
                    (f"unstable-cone-image c={c:.6g}", v_unst & ~w_unst, ip_w, c * im_w),
                    (f"stable-cone-preimage c={c:.6g}", w_stab & ~v_stab, ip_v, c * im_v),
                ]
            else:
                checks = [
                    (f"unstable-cone-preimage c={c:.6g}", w_unst & ~v_unst, ip_v, c * im_v),
                    (f"stable-cone-image c={c:.6g}", v_stab & ~w_stab, ip_w, c * im_w),
                ]
            for name, bad, lhs, rhs in checks:
                margin = -np.abs(lhs - rhs) / np.maximum(np.maximum(lhs, rhs), 1e-300)
                _collect(n, np.nonzero(bad)[0], name, lhs, rhs, margin, out)
    out.sort(key=lambda r: (r.n, r.sample_id, r.inequality))
    return out


def random_unit_vectors(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    V = rng.standard_normal((count, dim))
    return V / np.linalg.norm(V, axis=1, keepdims=True)


def boundary_vectors(
    pair: ConeFunctionalPair, c: float, n, rng: np.random.Generator, count: int, dim: int, pool: int = 200
) -> np.ndarray:
    """Unit vectors with ``I^+ = c I^-`` found by bisection along random 2-planes.

    Each plane is spanned by a random stable-cone vector and a random
    unstable-cone vector; fewer than ``count`` rows come back when one of the
    cones is not hit by the random pool.
    """
    P = random_unit_vectors(rng, pool, dim)
    f = pair.I_plus(n, P) - c * pair.I_minus(n, P)
    neg, pos = P[f < 0], P[f > 0]
    if len(neg) == 0 or len(pos) == 0:
        return np.zeros((0, dim))
    rows = []
    for i in range(count):
        u, w = neg[rng.integers(len(neg))], pos[rng.integers(len(pos))]
        lo, hi = 0.0, 0.5 * np.pi
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            x = np.cos(mid) * u + np.sin(mid) * w
            if pair.I_plus(n, x) - c * pair.I_minus(n, x) < 0:
                lo = mid
            else:
                hi = mid
        x = np.cos(hi) * u + np.sin(hi) * w
        rows.append(x / np.linalg.norm(x))
    return np.array(rows)


def cone_samples(
    pair: ConeFunctionalPair,
    dim: int,
    c_values: Sequence[float],
    seed: int = 0,
    n_random: int = 1000,
    n_boundary: int | None = None,
) -> Callable[[int], np.ndarray]:
    """Per-index sample batches: random unit vectors plus boundary vectors for each ``c``.

    The batch for index ``n`` depends only on ``(seed, n)``.
    """
    per_c = n_boundary if n_boundary is not None else 2 * max(pair.K, 1)

    def at(n):
        rng = np.random.default_rng([seed, int(n)])
        parts = [random_unit_vectors(rng, n_random, dim)]
        for c in c_values:
            parts.append(boundary_vectors(pair, c, n, rng, per_c, dim))
        return np.vstack(parts)

    return at


def uniform_independence_constant(alphas) -> float:
    """Largest ``c6`` with ``|sum_k b_k alpha_k| >= c6 max_k |b_k|`` for all ``b``.

    Computed exactly as a minimum over ``k`` of box-constrained least-squares
    problems with ``b_k = 1`` and ``|b_j| <= 1``.
    """
    A = np.atleast_2d(np.asarray(alphas, dtype=float))
    K = A.shape[0]
    best = np.inf
    for k in range(K):
        others = [j for j in range(K) if j != k]
        if not others:
            best = min(best, float(np.linalg.norm(A[k])))
            continue
        res = lsq_linear(A[others].T, -A[k], bounds=(-1.0, 1.0), method="bvls", tol=1e-14)
        best = min(best, float(np.linalg.norm(A[k] + A[others].T @ res.x)))
    return best


def in_cone_vectors(alphas, tol: float = 1e-10) -> np.ndarray:
    """Unit vectors ``z_k`` (columns) with ``<alpha_j, z_k> = 0`` for ``j != k``.

    ``z_k`` is the normalized component of ``alpha_k`` orthogonal to the other
    covectors, so ``<alpha_k, z_k>`` equals the distance of ``alpha_k`` to their
    span.
    """
    A = np.atleast_2d(np.asarray(alphas, dtype=float))
    K, d = A.shape
    Z = np.zeros((d, K))
    for k in range(K):
        others = np.delete(A, k, axis=0)
        p = A[k].copy()
        if others.shape[0]:
            q = Subspace.from_vectors(others.T, rtol=1e-14)
            for _ in range(2):  # second pass removes rounding residue
                p -= q.basis @ (q.basis.T @ p)
        nrm = np.linalg.norm(p)
        if nrm < tol * max(1.0, np.linalg.norm(A[k])):
            raise DegeneracyError(f"covector {k} is numerically dependent on the others")
        Z[:, k] = p / nrm
    return Z


def in_cone_threshold(c1: float, c2: float, c6: float, K: int, side: str) -> float:
    """Cone threshold guaranteed to contain the span of the ``z_k``.

    ``side="stable"`` (covectors on the minus side) gives a lower bound for a
    stable cone; ``side="unstable"`` gives an upper bound for an unstable cone.
    """
    if side == "stable":
        return 2.0 * K / (c1 * c2 * c6)
    if side == "unstable":
        return c1 * c2 * c6 / (2.0 * K)
    raise ContractError("side must be 'stable' or 'unstable'")


def subspace_in_cone(
    alphas,
    c6: float | None = None,
    side: str = "unstable",
    pair: ConeFunctionalPair | None = None,
    c: float | None = None,
    n=0,
    n_check: int = 100,
    seed: int = 0,
) -> Subspace:
    """Span of :func:`in_cone_vectors`.

    When ``pair`` and ``c`` are given, ``n_check`` random unit vectors of the
    span are tested for membership in the stable (``side="stable"``) or
    unstable cone of threshold ``c``; a failure raises :class:`HypothesisError`.
    """
    Z = in_cone_vectors(alphas)
    A = np.atleast_2d(np.asarray(alphas, dtype=float))
    c6_meas = uniform_independence_constant(A) if c6 is None else c6
    diag = np.einsum("kd,dk->k", A, Z)
    if np.any(diag < 0.5 * c6_meas * (1 - 1e-12)):
        raise DegeneracyError("pairing <alpha_k, z_k> below c6/2; c6 is not a valid independence constant")
    span = Subspace.from_vectors(Z, dim=Z.shape[1])
    meta = {"z": Z, "c6": c6_meas, "pairings": diag}
    if pair is not None and c is not None:
        rng = np.random.default_rng(seed)
        coeffs = rng.standard_normal((n_check, Z.shape[1]))
        V = coeffs @ Z.T
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        inside = in_stable_cone(pair, c, n, V) if side == "stable" else in_unstable_cone(pair, c, n, V)
        meta["cone_check_failures"] = int(np.sum(~inside))
        if not np.all(inside):
            raise HypothesisError(f"{meta['cone_check_failures']} span members fall outside the {side} cone")
    return Subspace(span.basis, meta=meta)


def functionals_from_certificate(cert, seq: OperatorSequence, cond_max: float = 1e12) -> ConeFunctionalPair:
    """Seminorms built from a dichotomy through window-truncated suprema.

    Forward systems use
    ``I^+_n(v) = max_{m <= n} b^{n-m} |B(n, m)^{-1} pi_u(n) v|`` and
    ``I^-_n(v) = max_{m >= n} a^{n-m} |B(m, n) pi_s(n) v|``; backward systems
    use the mirrored formulas with ``A``. Products are evaluated on the
    restricted cocycle in projection coordinates, so the unconditional one-step
    inequalities hold up to rounding.
    """
    from .dichotomy import build_projections, restricted_steps

    a, b = cert.rate_a, cert.rate_b
    idx = list(cert.indices)
    start, stop = idx[0], idx[-1]
    proj = {n: build_projections(cert.stable_at(n), cert.unstable_at(n)) for n in idx}
    steps_s, steps_u = restricted_steps(seq, cert, proj)
    for k, D in list(steps_s.items()) + list(steps_u.items()):
        if D.size and np.linalg.cond(D) > cond_max:
            raise ConditioningError(f"restricted transition at step {k} is numerically singular")

    # far[n] lists the matrices M such that the "sup over the far side" uses |M c_s(n)|,
    # near[n] the matrices for the side that looks back in the index
    far: dict[int, list[np.ndarray]] = {}
    near: dict[int, list[np.ndarray]] = {}
    if cert.direction == FORWARD:
        # I^-: H(m, n) = a^{n-m} D^s_{m-1} ... D^s_n for m >= n
        for n in idx:
            H = np.eye(cert.stable_at(n).dim)
            mats = [H]
            for m in range(n + 1, stop + 1):
                H = (steps_s[m - 1] / a) @ H
                mats.append(H)
            far[n] = mats
        # I^+: G(n, m) = b^{n-m} (D^u_{n-1} ... D^u_m)^{-1} for m <= n
        prev: list[np.ndarray] = []
        for n in idx:
            if n == start:
                mats = [np.eye(cert.unstable_at(n).dim)]
            else:
                step = b * np.linalg.inv(steps_u[n - 1])
                mats = [G @ step for G in prev] + [np.eye(cert.unstable_at(n).dim)]
            near[n] = mats
            prev = mats
        minus_side, plus_side = far, near
    else:
        # A(n, m) maps index m back to n. I^-: a^{n-m} |(E^s_{n+1} ... E^s_m)^{-1} c_s| for m >= n
        for n in idx:
            H = np.eye(cert.stable_at(n).dim)
            mats = [H]
            for m in range(n + 1, stop + 1):
                H = np.linalg.inv(steps_s[m]) @ H / a
                mats.append(H)
            far[n] = mats
        # I^+: b^{n-m} |E^u_{m+1} ... E^u_n c_u| for m <= n
        prev = []
        for n in idx:
            if n == start:
                mats = [np.eye(cert.unstable_at(n).dim)]
            else:
                step = b * steps_u[n]
                mats = [G @ step for G in prev] + [np.eye(cert.unstable_at(n).dim)]
            near[n] = mats
            prev = mats
        minus_side, plus_side = far, near

    def _sup(mats, C):
        if C.shape[1] == 0:
            return np.zeros(C.shape[0])
        return np.max(np.stack([np.linalg.norm(C @ M.T, axis=1) for M in mats]), axis=0)

    def minus(n, V):
        return _sup(minus_side[n], V @ proj[n].coords_s.T)

    def plus(n, V):
        return _sup(plus_side[n], V @ proj[n].coords_u.T)

    C_s = max(max(np.linalg.norm(M, 2) for M in mats) if mats[0].size else 1.0 for mats in minus_side.values())
    C_u = max(max(np.linalg.norm(M, 2) for M in mats) if mats[0].size else 1.0 for mats in plus_side.values())
    P = max(p.norm_s + p.norm_u for p in proj.values())
    c1 = 1.0 / (max(C_s, C_u, 1.0) * P)
    if cert.direction == FORWARD:
        K = cert.unstable_at(start).dim
        covs = lambda n: proj[n].coords_u
        side, c2 = "plus", 1.0 / (max(C_u, 1.0) * np.sqrt(max(K, 1)))
    else:
        K = cert.stable_at(start).dim
        covs = lambda n: proj[n].coords_s
        side, c2 = "minus", 1.0 / (max(C_s, 1.0) * np.sqrt(max(K, 1)))
    return ConeFunctionalPair(minus, plus, K, c1, c2, covs, side, name="from-certificate")


@dataclass
class ContinuousCheck:
    """Sampled differential inequalities along a stored trajectory."""

    name: str
    checked: int = 0
    violations: list = field(default_factory=list)
    worst_margin: float = np.inf

    @property
    def passed(self) -> bool:
        return not self.violations


def check_interval_inequalities(
    times: np.ndarray,
    I_minus: np.ndarray,
    I_plus: np.ndarray,
    c3: float,
    c4: float,
    lam: float,
    mu: float,
    direction: str = BACKWARD,
    rtol: float = 1e-8,
) -> tuple[ContinuousCheck, ContinuousCheck]:
    """Exponential-rate inequalities between consecutive stored times.

    ``I_minus``/``I_plus`` hold the functionals of one solution at ``times``.
    Backward evolutions (solutions computed from later to earlier times) use
    the hypotheses of the backward continuous framework: when the solution is
    in the stable cone of ``c4`` at the later time, ``I^-`` decays at least
    like ``e^{lam dt}``; when it is in the unstable cone of ``c3`` at the
    earlier time, ``I^+`` grows at least like ``e^{mu dt}``. Forward evolutions
    use the mirrored conditions (image cone ``c3`` for decay, source cone
    ``c4`` for growth). Membership is tested at both ends of every interval,
    which is a discretization of "for all intermediate times".
    """
    decay = ContinuousCheck("decay")
    growth = ContinuousCheck("growth")
    for i in range(len(times) - 1):
        t0, t1 = times[i], times[i + 1]
        dt = t1 - t0
        im0, im1, ip0, ip1 = I_minus[i], I_minus[i + 1], I_plus[i], I_plus[i + 1]
        if direction == BACKWARD:
            cond_d = ip1 <= c4 * im1 and ip0 <= c4 * im0
            cond_g = ip0 >= c3 * im0 and ip1 >= c3 * im1
        else:
            cond_d = ip1 <= c3 * im1 and ip0 <= c3 * im0
            cond_g = ip0 >= c4 * im0 and ip1 >= c4 * im1
        if cond_d:
            decay.checked += 1
            rhs = np.exp(lam * dt) * im0
            margin = rhs - im1
            decay.worst_margin = min(decay.worst_margin, margin / max(rhs, 1e-300))
            if margin < -rtol * max(rhs, im1):
                decay.violations.append((float(t0), float(t1), float(im1), float(rhs)))
        if cond_g:
            growth.checked += 1
            rhs = np.exp(mu * dt) * ip0
            margin = ip1 - rhs
            growth.worst_margin = min(growth.worst_margin, margin / max(rhs, 1e-300))
            if margin < -rtol * max(rhs, ip1):
                growth.violations.append((float(t0), float(t1), float(ip1), float(rhs)))
    return decay, growth
