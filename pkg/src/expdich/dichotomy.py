"""Stable/unstable families, projections and numerical certification of
exponential dichotomies for operator sequences.

Growth and decay along a family are always measured on the restricted
cocycle: the one-step map written in the coordinates of the family at the
source and target index. Propagating raw vectors would let rounding errors
seed the dominant direction and ruin every long-window estimate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import CollapseError, ContractError, DegeneracyError, NoGapError, TransversalityError
from .linops import BACKWARD, FORWARD, OperatorSequence, Subspace, normalized_compose, sphere_distance

GAP_RTOL = 1e-8
COLLAPSE_TOL = 1e-10
TRANSVERSALITY_COND = 1e12
HORIZON_TOL = 1e-8
HORIZON_CAP = 200


# --- subspace extraction -------------------------------------------------------


def _forward_stable_from_product(P: np.ndarray, K: int) -> tuple[Subspace, np.ndarray]:
    _, s, vt = np.linalg.svd(P)
    _check_gap(s, K)
    return Subspace.from_vectors(vt[K:].T, dim=P.shape[0] - K), s


def _backward_stable_from_product(P: np.ndarray, K: int) -> tuple[Subspace, np.ndarray]:
    u, s, _ = np.linalg.svd(P)
    _check_gap(s, K)
    return Subspace.from_vectors(u[:, :K], dim=K), s


def _check_gap(s: np.ndarray, K: int) -> None:
    if K <= 0 or K >= len(s):
        return
    if s[K - 1] <= 0 or (s[K - 1] - s[K]) / s[K - 1] < GAP_RTOL:
        raise NoGapError(f"singular values {s[K - 1]:.3e} and {s[K]:.3e} at position {K} are not separated")


def _extract(seq, K, n, horizon, forward_kind):
    if K < 0 or K > seq.dim:
        raise ContractError(f"K={K} outside [0, {seq.dim}]")
    pick = _forward_stable_from_product if forward_kind else _backward_stable_from_product
    if horizon is not None:
        if horizon < 1:
            raise ContractError("horizon must be at least 1")
        P, _ = normalized_compose(seq, n + horizon, n)
        sub, s = pick(P, K)
        return Subspace(sub.basis, meta={"horizon": horizon, "singular_values": s})
    # adaptive horizon: stop once consecutive horizons agree, then triple it so the
    # angle error (square root of the sphere distance) drops far below the tolerance
    prev = None
    history = []
    for h in range(1, HORIZON_CAP + 1):
        P, _ = normalized_compose(seq, n + h, n)
        sub, s = pick(P, K)
        if prev is not None and 0 < sub.dim < seq.dim:
            dist = sphere_distance(prev, sub)
            history.append(dist)
            if dist < HORIZON_TOL:
                final = min(3 * h, HORIZON_CAP)
                P, _ = normalized_compose(seq, n + final, n)
                sub, s = pick(P, K)
                return Subspace(sub.basis, meta={"horizon": final, "singular_values": s, "convergence": history})
        elif prev is not None:
            return Subspace(sub.basis, meta={"horizon": h, "singular_values": s, "convergence": history})
        prev = sub
    return Subspace(prev.basis, meta={"horizon": HORIZON_CAP, "singular_values": s, "convergence": history})


def stable_subspace_forward(seq: OperatorSequence, K: int, n: int, horizon: int | None = None) -> Subspace:
    """Codimension-``K`` stable subspace at index ``n`` of a forward sequence.

    Spanned by the right singular vectors of ``B(n + horizon, n)`` with the
    ``dim - K`` smallest singular values. ``horizon=None`` picks it adaptively.
    """
    if seq.direction != FORWARD:
        raise ContractError("stable_subspace_forward needs a forward sequence")
    return _extract(seq, K, n, horizon, True)


def stable_subspace_backward(seq: OperatorSequence, K: int, n: int, horizon: int | None = None) -> Subspace:
    """``K``-dimensional stable subspace at index ``n`` of a backward sequence:
    the dominant left singular vectors of ``A(n, n + horizon)``."""
    if seq.direction != BACKWARD:
        raise ContractError("stable_subspace_backward needs a backward sequence")
    return _extract(seq, K, n, horizon, False)


def horizon_convergence(seq: OperatorSequence, K: int, n: int, horizons) -> list[float]:
    """Sphere distances between extractions at consecutive horizons."""
    fn = stable_subspace_forward if seq.direction == FORWARD else stable_subspace_backward
    subs = [fn(seq, K, n, h) for h in horizons]
    return [sphere_distance(x, y) for x, y in zip(subs, subs[1:])]


def propagate_unstable(seq: OperatorSequence, seed: Subspace, start: int, stop: int) -> list[Subspace]:
    """Push ``seed`` (at index ``start``) forward to every index up to ``stop``."""
    if seq.direction != FORWARD:
        raise ContractError("forward propagation needs a forward sequence")
    out = [seed]
    Q = seed.basis
    for k in range(start, stop):
        B = seq.matrix(k)
        F = B @ Q
        if Q.shape[1]:
            smin = np.linalg.svd(F, compute_uv=False)[-1]
            if smin < COLLAPSE_TOL * max(np.linalg.norm(B, 2), 1e-300):
                raise CollapseError(f"propagated frame lost rank at step {k} (sigma_min={smin:.3e})")
        out.append(Subspace.from_vectors(F, dim=Q.shape[1]))
        Q = out[-1].basis
    return out


def unstable_subspace_forward(seq: OperatorSequence, seed: Subspace, n: int, start: int = 0) -> Subspace:
    """Image of ``seed`` under ``B(n, start)``, renormalized at every step."""
    return propagate_unstable(seq, seed, start, n)[-1]


def pull_back_unstable(seq: OperatorSequence, covectors, start: int, stop: int) -> list[Subspace]:
    """Joint kernel of ``covectors`` at ``start`` followed by preimages under ``A_n``."""
    if seq.direction != BACKWARD:
        raise ContractError("preimage construction needs a backward sequence")
    C = np.atleast_2d(np.asarray(covectors, dtype=float))
    K = C.shape[0]
    X = Subspace.from_vectors(sla.null_space(C, rcond=1e-12), dim=seq.dim - K)
    if X.codim != K:
        raise DegeneracyError("covectors are linearly dependent")
    out = [X]
    for k in range(start + 1, stop + 1):
        W = out[-1].complement().basis
        constraint = W.T @ seq.matrix(k)
        kernel = sla.null_space(constraint, rcond=1e-12)
        if seq.dim - kernel.shape[1] != K:
            raise DegeneracyError(
                f"preimage at index {k} has codimension {seq.dim - kernel.shape[1]}, expected {K}"
            )
        out.append(Subspace.from_vectors(kernel, dim=kernel.shape[1]))
    return out


def unstable_subspace_backward(seq: OperatorSequence, covectors, n: int, start: int = 0) -> Subspace:
    return pull_back_unstable(seq, covectors, start, n)[-1]


# --- projections -----------------------------------------------------------------


@dataclass(frozen=True)
class Projections:
    pi_s: np.ndarray
    pi_u: np.ndarray
    norm_s: float
    norm_u: float
    coords_s: np.ndarray  # rows: coordinates along the stable basis
    coords_u: np.ndarray


def build_projections(stable: Subspace, unstable: Subspace) -> Projections:
    """Oblique projections for the splitting ``stable (+) unstable``."""
    if stable.ambient_dim != unstable.ambient_dim or stable.dim + unstable.dim != stable.ambient_dim:
        raise ContractError("subspace dimensions do not add up to the ambient dimension")
    M = np.hstack([stable.basis, unstable.basis])
    if np.linalg.cond(M) > TRANSVERSALITY_COND:
        raise TransversalityError("stable and unstable subspaces do not form a direct sum")
    Minv = np.linalg.inv(M)
    ks = stable.dim
    coords_s, coords_u = Minv[:ks], Minv[ks:]
    pi_s = stable.basis @ coords_s
    pi_u = unstable.basis @ coords_u
    norm = lambda P: float(np.linalg.norm(P, 2)) if P.size else 0.0
    return Projections(pi_s, pi_u, norm(pi_s), norm(pi_u), coords_s, coords_u)


# --- certificates ------------------------------------------------------------------


@dataclass
class DichotomyCertificate:
    direction: str
    start: int
    stop: int
    stable: list
    unstable: list
    rate_a: float
    rate_b: float
    proj_bound: float | None = None
    decay_constant_C: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.stable) != self.stop - self.start + 1 or len(self.unstable) != len(self.stable):
            raise ContractError("one stable and one unstable subspace per index are required")
        for S, U in zip(self.stable, self.unstable):
            if S.dim + U.dim != S.ambient_dim:
                raise ContractError("stable and unstable dimensions must add up to the ambient dimension")

    @property
    def indices(self) -> range:
        return range(self.start, self.stop + 1)

    @property
    def dim(self) -> int:
        return self.stable[0].ambient_dim

    def stable_at(self, n: int) -> Subspace:
        return self.stable[n - self.start]

    def unstable_at(self, n: int) -> Subspace:
        return self.unstable[n - self.start]

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "window": [self.start, self.stop],
            "dim": self.dim,
            "rate_a": self.rate_a,
            "rate_b": self.rate_b,
            "proj_bound": self.proj_bound,
            "decay_constant_C": self.decay_constant_C,
            "stable": [S.basis.T.tolist() for S in self.stable],
            "unstable": [U.basis.T.tolist() for U in self.unstable],
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "DichotomyCertificate":
        # stored basis vectors are re-orthonormalized, so a tampered file changes the span
        def load(rows):
            arr = np.array(rows, dtype=float).reshape(len(rows), -1) if rows else None
            if arr is None:
                return Subspace(np.zeros((int(data["dim"]), 0)))
            return Subspace.from_vectors(arr.T, dim=arr.shape[0])

        start, stop = data["window"]
        return cls(
            data["direction"],
            int(start),
            int(stop),
            [load(r) for r in data["stable"]],
            [load(r) for r in data["unstable"]],
            float(data["rate_a"]),
            float(data["rate_b"]),
            data.get("proj_bound"),
            data.get("decay_constant_C"),
            data.get("meta", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "DichotomyCertificate":
        return cls.from_dict(json.loads(text))


def restricted_steps(seq: OperatorSequence, cert: DichotomyCertificate, proj: dict | None = None):
    """One-step maps written in family coordinates.

    Forward: ``D_k`` maps coordinates at ``k`` to coordinates at ``k + 1``.
    Backward: ``E_k`` maps coordinates at ``k`` to coordinates at ``k - 1``.
    Returns two dicts keyed by ``k`` (stable, unstable).
    """
    if proj is None:
        proj = {n: build_projections(cert.stable_at(n), cert.unstable_at(n)) for n in cert.indices}
    steps_s, steps_u = {}, {}
    if cert.direction == FORWARD:
        for k in range(cert.start, cert.stop):
            B = seq.matrix(k)
            steps_s[k] = proj[k + 1].coords_s @ B @ cert.stable_at(k).basis
            steps_u[k] = proj[k + 1].coords_u @ B @ cert.unstable_at(k).basis
    else:
        for k in range(cert.start + 1, cert.stop + 1):
            A = seq.matrix(k)
            steps_s[k] = proj[k - 1].coords_s @ A @ cert.stable_at(k).basis
            steps_u[k] = proj[k - 1].coords_u @ A @ cert.unstable_at(k).basis
    return steps_s, steps_u


@dataclass
class ItemResult:
    item: int
    name: str
    passed: bool
    measured: float
    threshold: float
    margin: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} dichotomy item ({self.item}) {self.name}: measured {self.measured:.6e}, "
            f"threshold {self.threshold:.6e}, margin {self.margin:.3e}{'; ' + self.detail if self.detail else ''}"
        )


@dataclass
class CertificationReport:
    items: list
    C: float
    proj_bound: float
    gap_profile: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def item(self, name: str) -> ItemResult:
        for it in self.items:
            if it.name == name:
                return it
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [it.line() for it in self.items]


def _pairs(start: int, stop: int):
    # all pairs for short windows, dyadic gaps otherwise
    if stop - start <= 100:
        return {n: list(range(n, stop + 1)) for n in range(start, stop + 1)}
    out = {}
    for n in range(start, stop + 1):
        ms = {n, stop}
        g = 1
        while n + g <= stop:
            ms.add(n + g)
            g *= 2
        out[n] = sorted(ms)
    return out


def _trend_slope(profile: dict) -> float:
    """Least-squares slope of log profile over the second half of the gaps."""
    gaps = sorted(g for g in profile if g > 0)
    if len(gaps) < 2:
        return 0.0
    tail = gaps[len(gaps) // 2:]
    if len(tail) < 2:
        tail = gaps[-2:]
    y = np.log([max(profile[g], 1e-300) for g in tail])
    return float(np.polyfit(np.array(tail, dtype=float), y, 1)[0])


def certify(
    seq: OperatorSequence,
    cert: DichotomyCertificate,
    commute_tol: float = 1e-8,
    trend_tol: float = 1e-6,
    C_max: float | None = None,
) -> CertificationReport:
    """Numerically check the five defining properties of the dichotomy.

    1. projections commute with transition products (relative residual),
    2. projection norms stay bounded (transversality),
    3. the transition restricted to the unstable family (forward) or the
       stable family (backward) is invertible,
    4. decay at rate ``a`` on the stable family,
    5. growth at rate ``b`` on the unstable family.

    Items 4 and 5 measure the constant ``C`` over the window and also FAIL when
    the normalized growth still trends upward at the end of the window, which
    is how a wrong rate shows up on a finite window. ``C_max`` defaults to the
    certificate's stored constant, if any.
    """
    if cert.dim != seq.dim:
        raise ContractError(f"certificate dimension {cert.dim} does not match system dimension {seq.dim}")
    a, b = cert.rate_a, cert.rate_b
    proj = {n: build_projections(cert.stable_at(n), cert.unstable_at(n)) for n in cert.indices}
    pairs = _pairs(cert.start, cert.stop)
    fwd = cert.direction == FORWARD

    # (1) commutation
    worst_comm, worst_pair = 0.0, None
    for n, ms in pairs.items():
        P = np.eye(seq.dim)
        m_prev = n
        for m in ms:
            for k in range(m_prev, m):
                mat = seq.matrix(k) if fwd else seq.matrix(k + 1)
                P = mat @ P if fwd else P @ mat
                nrm = np.linalg.norm(P, 2)
                if nrm > 0:
                    P = P / nrm
            m_prev = m
            if m == n:
                continue
            if fwd:  # P ~ B(m, n): maps index n to m
                res = P @ proj[n].pi_s - proj[m].pi_s @ P
                scale = max(proj[n].norm_s, proj[m].norm_s, 1.0)
            else:  # P ~ A(n, m): maps index m to n
                res = P @ proj[m].pi_s - proj[n].pi_s @ P
                scale = max(proj[n].norm_s, proj[m].norm_s, 1.0)
            r = float(np.linalg.norm(res, 2)) / scale
            if worst_pair is None or r > worst_comm:
                worst_comm, worst_pair = r, (n, m)
    items = [
        ItemResult(1, "commutation", worst_comm <= commute_tol, worst_comm, commute_tol,
                   commute_tol - worst_comm, f"worst pair {worst_pair}")
    ]

    # (2) projection bound
    pb = max(p.norm_s + p.norm_u for p in proj.values())
    limit = cert.proj_bound * (1 + 1e-6) if cert.proj_bound is not None else TRANSVERSALITY_COND
    items.append(ItemResult(2, "projection-bound", pb <= limit, pb, limit, limit - pb))

    # (3) invertibility on the family that must be carried bijectively
    steps_s, steps_u = restricted_steps(seq, cert, proj)
    inv_steps = steps_u if fwd else steps_s
    worst_inv = np.inf
    for k, D in inv_steps.items():
        if D.size:
            s = np.linalg.svd(D, compute_uv=False)
            worst_inv = min(worst_inv, s[-1] / max(s[0], 1e-300))
    if worst_inv == np.inf:
        worst_inv = 1.0
    inv_tol = 1.0 / TRANSVERSALITY_COND
    items.append(ItemResult(3, "unstable-invertibility" if fwd else "stable-invertibility",
                            worst_inv > inv_tol, worst_inv, inv_tol, worst_inv - inv_tol,
                            "reciprocal condition number of one-step restricted maps"))

    # (4) decay on stable vectors, (5) growth on unstable vectors
    prof_s: dict[int, float] = {}
    prof_u: dict[int, float] = {}
    C_s = C_u = 1.0
    for n in cert.indices:
        Qs = np.eye(cert.stable_at(n).dim)
        Qu = np.eye(cert.unstable_at(n).dim)
        for m in range(n + 1, cert.stop + 1):
            g = m - n
            if fwd:
                Qs = (steps_s[m - 1] / a) @ Qs  # a^{-(m-n)} B(m, n) on X_s(n)
                Qu = (steps_u[m - 1] / b) @ Qu  # b^{-(m-n)} B(m, n) on X_u(n)
                vs = np.linalg.norm(Qs, 2) if Qs.size else 0.0
                vu = 1.0 / np.linalg.svd(Qu, compute_uv=False)[-1] if Qu.size else 0.0
            else:
                Qs = Qs @ (a * steps_s[m])  # a^{m-n} A(n, m) on X_s(m)
                Qu = Qu @ (b * steps_u[m])  # b^{m-n} A(n, m) on X_u(m)
                vs = 1.0 / np.linalg.svd(Qs, compute_uv=False)[-1] if Qs.size else 0.0
                vu = np.linalg.norm(Qu, 2) if Qu.size else 0.0
            C_s, C_u = max(C_s, vs), max(C_u, vu)
            prof_s[g] = max(prof_s.get(g, 0.0), vs)
            prof_u[g] = max(prof_u.get(g, 0.0), vu)
    C_meas = max(C_s, C_u)
    cap = C_max if C_max is not None else (cert.decay_constant_C if cert.decay_constant_C is not None else np.inf)
    for item, name, Cv, prof in ((4, "stable-decay", C_s, prof_s), (5, "unstable-growth", C_u, prof_u)):
        slope = _trend_slope(prof)
        ok = Cv <= cap * (1 + 1e-9) and slope <= trend_tol
        thr = cap if np.isfinite(cap) else Cv
        items.append(ItemResult(item, name, bool(ok), Cv, thr, thr - Cv,
                                f"late-window log-slope {slope:.3e} (limit {trend_tol:.1e})"))
    return CertificationReport(items, C_meas, pb, {"stable": prof_s, "unstable": prof_u})


def build_certificate(
    seq: OperatorSequence,
    K: int,
    start: int,
    stop: int,
    rate_a: float,
    rate_b: float,
    seed: Subspace | None = None,
    covectors=None,
    horizon: int | None = None,
) -> DichotomyCertificate:
    """Assemble a certificate over ``[start, stop]``.

    Forward: ``K`` is the unstable dimension; stable subspaces come from
    singular vectors, the unstable family is ``seed`` pushed forward (default:
    orthogonal complement of the stable subspace at ``start``).
    Backward: ``K`` is the stable dimension; the unstable family is the joint
    kernel of ``covectors`` pulled back (default covectors: the stable basis at
    ``start``).
    """
    if stop < start:
        raise ContractError("empty window")
    if seq.direction == FORWARD:
        stable = [stable_subspace_forward(seq, K, n, horizon) for n in range(start, stop + 1)]
        if seed is None:
            seed = stable[0].complement()
        if seed.dim != K:
            raise ContractError(f"seed has dimension {seed.dim}, expected {K}")
        unstable = propagate_unstable(seq, seed, start, stop)
    else:
        stable = [stable_subspace_backward(seq, K, n, horizon) for n in range(start, stop + 1)]
        if covectors is None:
            covectors = stable[0].basis.T
        unstable = pull_back_unstable(seq, covectors, start, stop)
    cert = DichotomyCertificate(seq.direction, start, stop, stable, unstable, rate_a, rate_b)
    report = certify(seq, cert, C_max=np.inf)
    cert.proj_bound = report.proj_bound
    cert.decay_constant_C = report.C
    cert.meta["horizons"] = [S.meta.get("horizon") for S in stable]
    return cert


# --- rates ---------------------------------------------------------------------------


def measure_rates(seq: OperatorSequence, family, start: int = 0, stop: int | None = None, which: str = "max"):
    """Geometric rate and prefactor of the transition restricted to ``family``.

    ``family`` is a list of subspaces indexed from ``start`` (or a callable
    ``n -> Subspace``). The one-step maps are written in the orthonormal bases
    of the family and multiplied out; the log of the operator norm
    (``which="max"``) or of the smallest singular value (``"min"``) of the
    product is fitted linearly against the index. Backward sequences are
    measured in their own direction, from index ``m`` back to ``start``.
    """
    if callable(family):
        if stop is None:
            raise ContractError("stop is required with a callable family")
        fam = [family(n) for n in range(start, stop + 1)]
    else:
        fam = list(family)
        stop = start + len(fam) - 1 if stop is None else stop
        fam = fam[: stop - start + 1]
    if len(fam) < 5:
        raise ContractError("measure_rates needs at least 5 indices")
    P = np.eye(fam[0].dim)
    logs = [0.0]
    log_scale = 0.0
    for i in range(1, len(fam)):
        k = start + i
        if seq.direction == FORWARD:
            step = fam[i].basis.T @ seq.matrix(k - 1) @ fam[i - 1].basis
            P = step @ P
        else:
            step = fam[i - 1].basis.T @ seq.matrix(k) @ fam[i].basis
            P = P @ step
        s = np.linalg.svd(P, compute_uv=False)
        val = s[0] if which == "max" else s[-1]
        if not val > 0:
            raise ContractError("restricted product lost all mass; rate undefined")
        log_scale += np.log(s[0])
        P = P / s[0]
        logs.append(log_scale + np.log(val / s[0]))
    x = np.arange(len(fam), dtype=float)
    slope, intercept = np.polyfit(x, np.array(logs), 1)
    return float(np.exp(slope)), float(np.exp(intercept))
