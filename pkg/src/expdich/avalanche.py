"""Matrix systems whose steps split space by singular values ("avalanche"
systems), their projection functionals and end-to-end certification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import ConeFunctionalPair, gate_bound
from .dichotomy import DichotomyCertificate, build_certificate
from .errors import ContractError, HypothesisError
from .linops import FORWARD, OperatorSequence, Subspace, rotation, sphere_distance, split_spectrum

C4_FRACTION = 0.95  # c4 is placed this fraction of the way to the forward gate bound
C3_GRID = np.geomspace(0.05, 50.0, 241)


@dataclass
class AvalancheSystem:
    seq: OperatorSequence
    a: float
    b: float
    start: int
    stop: int
    d_s: int
    d_u: int
    Y_s: list
    Y_u: list
    Z_s: list
    Z_u: list
    phi_s: np.ndarray  # phi(Z_s(n), Y_s(n+1)) for n in [start, stop)
    phi_u: np.ndarray
    collapsed: list = field(default_factory=list)  # (n, lost dimension) when B_n drops rank on Y_s

    @property
    def delta(self) -> float:
        vals = np.concatenate([self.phi_s, self.phi_u])
        return float(vals.max()) if vals.size else 0.0

    @property
    def dim(self) -> int:
        return self.seq.dim

    def Y_s_at(self, n: int) -> Subspace:
        return self.Y_s[n - self.start]

    def Y_u_at(self, n: int) -> Subspace:
        return self.Y_u[n - self.start]


def _image(B: np.ndarray, Y: Subspace) -> tuple[Subspace, int]:
    if Y.dim == 0:
        return Y, 0
    img = B @ Y.basis
    s = np.linalg.svd(img, compute_uv=False)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1e-300)))
    return Subspace.from_vectors(img, dim=rank), Y.dim - rank


def _phi(Z: Subspace, Y: Subspace) -> float:
    if Y.dim == 0:
        return 0.0
    if Z.dim < Y.dim:
        # surviving directions only: the worst unit vector of Z against Y
        if Z.dim == 0:
            return 0.0
        cos_min = np.linalg.svd(Y.basis.T @ Z.basis, compute_uv=False).min()
        return float(2.0 * (1.0 - min(cos_min, 1.0)))
    return sphere_distance(Z, Y)


def build_avalanche(seq: OperatorSequence, a: float, b: float, start: int = 0, stop: int = 50) -> AvalancheSystem:
    """Split every step ``B_n`` (``start <= n <= stop``) by singular values and
    measure the alignment between image splittings and the next splitting."""
    if seq.direction != FORWARD:
        raise ContractError("avalanche systems are forward sequences")
    if stop <= start:
        raise ContractError("need at least two indices")
    Ys, Yu, Zs, Zu, collapsed = [], [], [], [], []
    for n in range(start, stop + 1):
        B = seq.matrix(n)
        ys, yu = split_spectrum(B, a, b)
        zs, lost = _image(B, ys)
        zu, _ = _image(B, yu)
        if lost:
            collapsed.append((n, lost))
        Ys.append(ys)
        Yu.append(yu)
        Zs.append(zs)
        Zu.append(zu)
    d_s = Ys[0].dim
    if any(y.dim != d_s for y in Ys):
        raise ContractError("the number of small singular values changes along the sequence")
    phi_s = np.array([_phi(Zs[i], Ys[i + 1]) for i in range(len(Ys) - 1)])
    phi_u = np.array([_phi(Zu[i], Yu[i + 1]) for i in range(len(Yu) - 1)])
    return AvalancheSystem(seq, a, b, start, stop, d_s, seq.dim - d_s, Ys, Yu, Zs, Zu, phi_s, phi_u, collapsed)


def avalanche_functionals(sys: AvalancheSystem) -> ConeFunctionalPair:
    """Lengths of the orthogonal projections onto ``Y_s(n)`` and ``Y_u(n)``."""

    def minus(n, V):
        return np.linalg.norm(V @ sys.Y_s_at(n).basis, axis=1)

    def plus(n, V):
        return np.linalg.norm(V @ sys.Y_u_at(n).basis, axis=1)

    c2 = 1.0 / np.sqrt(max(sys.d_u, 1))
    return ConeFunctionalPair(
        minus, plus, sys.d_u, 1.0 / np.sqrt(2.0), c2,
        covectors=lambda n: sys.Y_u_at(n).basis.T, side="plus", name="avalanche",
    )


# --- epsilon as a function of the alignment ------------------------------------


def epsilon_growth(delta: float, a: float, b: float, c4: float) -> float:
    """Rate loss on the growth side: ``b (1 - sqrt(1 - delta)) + a sqrt(delta) / c4``."""
    if delta >= 1.0:
        return np.inf
    return b * (1.0 - np.sqrt(1.0 - delta)) + a * np.sqrt(delta) / c4


def epsilon_decay_printed(delta: float, a: float, c3: float) -> float:
    """Rate loss on the decay side as ``a ((1 - delta / c3)^{-1} - 1)``.

    Kept for comparison only: it bounds the cross term by ``delta`` instead of
    ``sqrt(delta)`` and conditions on ``|w_u|`` instead of the cone functional.
    """
    if delta >= c3:
        return np.inf
    return a * (1.0 / (1.0 - delta / c3) - 1.0)


def epsilon_decay(delta: float, a: float, c3: float) -> float:
    """Rate loss on the decay side under the cone condition ``I^+ <= c3 I^-``.

    With ``r = sqrt(delta / (1 - delta))`` the cross term obeys
    ``|w_us| <= r |w_uu|``, which gives ``a ((1 + r sqrt(delta)) / (1 - c3 r) - 1)``.
    """
    if delta >= 1.0:
        return np.inf
    r = np.sqrt(delta / (1.0 - delta))
    if c3 * r >= 1.0:
        return np.inf
    return a * ((1.0 + r * np.sqrt(delta)) / (1.0 - c3 * r) - 1.0)


@dataclass(frozen=True)
class EpsilonChoice:
    epsilon: float
    eps_growth: float
    eps_decay: float
    eps_decay_printed: float
    c3: float
    c4: float
    gate: float


def choose_cone_constants(delta: float, a: float, b: float, d_u: int = 1, c3: float | None = None) -> EpsilonChoice:
    """Smallest guaranteed ``epsilon`` over ``c3`` (or at the given ``c3``),
    with ``c4`` placed just inside the forward gate."""
    c1, c2 = 1.0 / np.sqrt(2.0), 1.0 / np.sqrt(max(d_u, 1))
    grid = C3_GRID if c3 is None else np.array([c3])
    best = None
    for c in grid:
        g = gate_bound(c1, c2, c, FORWARD)
        c4 = C4_FRACTION * g
        eg, ed = epsilon_growth(delta, a, b, c4), epsilon_decay(delta, a, c)
        eps = max(eg, ed)
        if best is None or eps < best.epsilon:
            best = EpsilonChoice(eps, eg, ed, epsilon_decay_printed(delta, a, c), float(c), float(c4), g)
    return best


def avalanche_certificate(
    sys: AvalancheSystem, epsilon: float | None = None, c3: float | None = None
) -> tuple[DichotomyCertificate, EpsilonChoice]:
    """Certify a dichotomy with values ``a + epsilon`` and ``b - epsilon``.

    ``epsilon=None`` uses the smallest value the alignment allows. A requested
    ``epsilon`` below what the measured ``delta`` guarantees raises
    :class:`HypothesisError` naming the limiting inequality.
    """
    choice = choose_cone_constants(sys.delta, sys.a, sys.b, sys.d_u, c3)
    if epsilon is None:
        epsilon = choice.epsilon
    if not np.isfinite(choice.epsilon) or epsilon < choice.epsilon:
        which = "growth bound b(1-sqrt(1-delta)) + a sqrt(delta)/c4" if choice.eps_growth >= choice.eps_decay \
            else "decay bound a((1+r sqrt(delta))/(1-c3 r) - 1)"
        raise HypothesisError(
            f"alignment delta={sys.delta:.3e} only guarantees epsilon={choice.epsilon:.4g} "
            f"(limited by the {which}); requested {epsilon:.4g}"
        )
    a_eff, b_eff = sys.a + epsilon, sys.b - epsilon
    if not a_eff < b_eff:
        raise HypothesisError(f"a + epsilon = {a_eff:.4g} is not below b - epsilon = {b_eff:.4g}")
    seed = Subspace(sys.Y_u_at(sys.start).basis)
    cert = build_certificate(sys.seq, sys.d_u, sys.start, sys.stop, a_eff, b_eff, seed=seed)
    cert.meta.update({"delta": sys.delta, "epsilon": epsilon, "c3": choice.c3, "c4": choice.c4,
                      "cone_decay_constant": (1 + choice.c3) * 2.0})
    return cert, choice


def stable_alignment(sys: AvalancheSystem, cert: DichotomyCertificate) -> np.ndarray:
    """``phi(X_s(n), Y_s(n))`` along the certificate window."""
    return np.array([sphere_distance(cert.stable_at(n), sys.Y_s_at(n)) for n in cert.indices])


# --- generators -------------------------------------------------------------------


def constant_system(diag=(0.5, 3.0)) -> OperatorSequence:
    return OperatorSequence.constant(np.diag(np.asarray(diag, dtype=float)), name="constant")


def rotating_system(eta: float, diag=(0.5, 3.0)) -> OperatorSequence:
    """``B_n = R(n eta) D R(n eta)^T``: the singular splitting turns by ``eta``
    per step while each image stays on the old axes, so ``delta = 4 sin^2(eta / 2)``."""
    D = np.diag(np.asarray(diag, dtype=float))
    if D.shape != (2, 2):
        raise ContractError("rotating systems are planar")

    def provider(n):
        R = rotation(n * eta)
        return R @ D @ R.T

    return OperatorSequence(2, FORWARD, provider, name=f"rotating eta={eta:g}")


def conjugated_system(eta: float, diag=(0.5, 3.0)) -> OperatorSequence:
    """``B_n = R((n + 1) eta) D R(n eta)^T``: a diagonal system in rotating
    coordinates, perfectly aligned (``delta = 0``)."""
    D = np.diag(np.asarray(diag, dtype=float))

    def provider(n):
        return rotation((n + 1) * eta) @ D @ rotation(n * eta).T

    return OperatorSequence(2, FORWARD, provider, name=f"conjugated eta={eta:g}")


def rotating_delta(eta: float) -> float:
    return float(4.0 * np.sin(0.5 * eta) ** 2)
