"""Finite-difference heat flows with potentials.

Two settings are covered:

* the backward equation ``u_t = -u_xx + V(t, x) u`` on a bounded interval,
  solved as a forward heat flow in reversed time, together with its
  one-dimensional stable ray;
* the forward equation ``u_t = u_xx - sum_j V_j(x - x_j(t)) u`` with slowly
  moving wells on a truncated line.

Time stepping is Crank-Nicolson with the potential frozen at the midpoint of
each step. Steps between lattice times ``k * dt`` follow the global lattice,
so evolution operators compose exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .cones import ConeFunctionalPair, check_interval_inequalities
from .errors import ContractError, HypothesisError
from .grid import (
    GridSpec,
    lowest_modes,
    schrodinger_bands,
    tridiagonal_apply,
    tridiagonal_matrix,
    tridiagonal_solve,
)
from .linops import BACKWARD, OperatorSequence
from .potentials import PotentialShape, PotentialTrack, check_tracks, total_potential

LATTICE_TOL = 1e-9

PotentialFn = Callable[[float], np.ndarray]


# --- spectra ------------------------------------------------------------------------


def discretize_schrodinger(grid: GridSpec, V) -> np.ndarray:
    """Dense symmetric tridiagonal matrix of ``-d^2/dx^2 + V`` with Dirichlet walls."""
    return tridiagonal_matrix(*schrodinger_bands(grid, V))


@dataclass
class SpectralData:
    lambda1: float
    lambda2: float
    phi1: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, grid-normalized
    negative_modes: list = field(default_factory=list)  # (eigenvalue, eigenvector) with eigenvalue < 0


def spectral_data(grid: GridSpec, V, mu_required: float | None = None, n_modes: int = 2) -> SpectralData:
    """Lowest eigenpairs of ``-d^2/dx^2 + V``; the ground state is made positive.

    With ``mu_required`` the gap condition ``lambda1 <= -mu <= mu <= lambda2``
    is enforced and a violation raises :class:`HypothesisError`.
    """
    d, e = schrodinger_bands(grid, V)
    count = max(n_modes, 2)
    vals, vecs = lowest_modes(grid, d, e, count)
    while vals[-1] < 0 and count < grid.n_points:
        count = min(2 * count, grid.n_points)
        vals, vecs = lowest_modes(grid, d, e, count)
    phi1 = vecs[:, 0]
    phi1 = np.abs(phi1) if phi1.min() >= -1e-12 * phi1.max() else phi1
    vecs = vecs.copy()
    vecs[:, 0] = phi1
    neg = [(float(vals[k]), vecs[:, k]) for k in range(len(vals)) if vals[k] < 0]
    data = SpectralData(float(vals[0]), float(vals[1]), phi1, vals[:n_modes], vecs[:, :n_modes], neg)
    if mu_required is not None:
        if not (data.lambda1 <= -mu_required and data.lambda2 >= mu_required):
            raise HypothesisError(
                f"spectral gap fails: lambda1={data.lambda1:.6g}, lambda2={data.lambda2:.6g}, mu={mu_required:.6g}"
            )
    return data


def _ground_state(grid: GridSpec, V) -> tuple[float, np.ndarray]:
    d, e = schrodinger_bands(grid, V)
    vals, vecs = lowest_modes(grid, d, e, 1)
    return float(vals[0]), np.abs(vecs[:, 0])


# --- mollification ----------------------------------------------------------------


def bump(s) -> np.ndarray:
    """``exp(-1 / (1 - (2s)^2))`` on ``|s| < 1/2``, zero elsewhere (unnormalized)."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 0.5
    out[inside] = np.exp(-1.0 / (1.0 - (2.0 * s[inside]) ** 2))
    return out


def bump_derivative(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 0.5
    q = 1.0 - (2.0 * s[inside]) ** 2
    out[inside] = np.exp(-1.0 / q) * (-8.0 * s[inside] / q**2)
    return out


@dataclass
class Mollified:
    """``W(t) = sum_i w_i V(t - s_i)``: a unit-mass quadrature of the bump convolution."""

    V: PotentialFn
    nodes: np.ndarray
    weights: np.ndarray
    dweights: np.ndarray
    raw_mass: float

    def __call__(self, t: float) -> np.ndarray:
        return sum(w * self.V(t - s) for s, w in zip(self.nodes, self.weights))

    def derivative(self, t: float) -> np.ndarray:
        return sum(w * self.V(t - s) for s, w in zip(self.nodes, self.dweights))


def mollify_potential(V: PotentialFn, n_quad: int = 64, profile=bump, dprofile=bump_derivative) -> Mollified:
    """Convolve a time-dependent potential with a bump of width one.

    The midpoint-rule weights are renormalized to unit mass, so constants are
    reproduced exactly. The derivative uses the derivative of the profile with
    the same normalization.
    """
    h = 1.0 / n_quad
    nodes = -0.5 + h * (np.arange(n_quad) + 0.5)
    raw = profile(nodes) * h
    mass = float(raw.sum())
    if not mass > 0:
        raise ContractError("mollifier profile has no mass")
    return Mollified(V, nodes, raw / mass, dprofile(nodes) * h / mass, mass)


def oscillation(V: PotentialFn, grid: GridSpec, t_max: float, window: float = 1.0, step: float = 0.05) -> float:
    """Largest grid-L2 distance between ``V(t1)`` and ``V(t2)`` with ``|t1 - t2| <= window``."""
    times = np.arange(0.0, t_max + 0.5 * step, step)
    samples = np.array([V(t) for t in times])
    lag = int(round(window / step))
    best = 0.0
    for k in range(1, lag + 1):
        diff = samples[k:] - samples[:-k]
        if len(diff):
            best = max(best, float(np.sqrt(grid.dx * np.max(np.sum(diff**2, axis=1)))))
    return best


# --- time stepping ------------------------------------------------------------------


def _time_nodes(t_from: float, t_to: float, dt: float) -> np.ndarray:
    """Time nodes from ``t_from`` to ``t_to`` (either order).

    When both ends lie on the lattice ``k * dt`` the nodes are lattice points,
    which makes evolutions over adjacent intervals compose exactly.
    """
    if t_from == t_to:
        return np.array([t_from])
    k0, k1 = t_from / dt, t_to / dt
    if abs(k0 - round(k0)) < LATTICE_TOL * max(1.0, abs(k0)) and abs(k1 - round(k1)) < LATTICE_TOL * max(1.0, abs(k1)):
        k0, k1 = int(round(k0)), int(round(k1))
        step = 1 if k1 > k0 else -1
        return np.arange(k0, k1 + step, step) * dt
    n = int(np.ceil(abs(t_to - t_from) / dt - 1e-12))
    return np.linspace(t_from, t_to, n + 1)


def _cn_step(grid: GridSpec, V_mid: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """One Crank-Nicolson step of ``u' = -(-d^2/dx^2 + V_mid) u`` over a step ``h > 0``."""
    d, e = schrodinger_bands(grid, V_mid)
    rhs = u - 0.5 * h * tridiagonal_apply(d, e, u)
    return tridiagonal_solve(1.0 + 0.5 * h * d, 0.5 * h * e, rhs)


def _propagate(grid: GridSpec, V: PotentialFn, u, t_from: float, t_to: float, store=None):
    """Heat flow from ``t_from`` to ``t_to`` with the potential read at physical times.

    Moving forward in physical time this is ``u_t = u_xx - V u``; moving
    backward it solves ``u_t = -u_xx + V u`` from the later time downwards.
    ``store`` lists physical times (on the node set) at which copies are kept.
    """
    nodes = _time_nodes(t_from, t_to, grid.dt)
    u = np.array(u, dtype=float)
    kept = {}
    wanted = set() if store is None else {round(float(s) / grid.dt * 1e6) for s in store}

    def keep(t, state):
        if wanted and round(float(t) / grid.dt * 1e6) in wanted:
            kept[float(t)] = state.copy()

    keep(nodes[0], u)
    for a, b in zip(nodes[:-1], nodes[1:]):
        u = _cn_step(grid, V(0.5 * (a + b)), u, abs(b - a))
        keep(b, u)
    return u, kept


def backward_heat_evolve(grid: GridSpec, V: PotentialFn, v_tau, tau: float, t: float) -> np.ndarray:
    """``S(t, tau) v_tau`` for the backward equation ``u_t = -u_xx + V(t) u`` (``t <= tau``).

    ``v_tau`` may hold several states as columns.
    """
    if t > tau:
        raise ContractError("backward evolution needs t <= tau")
    return _propagate(grid, V, v_tau, tau, t)[0]


def sampled_backward_sequence(grid: GridSpec, V: PotentialFn, step: float, n_steps: int) -> OperatorSequence:
    """Backward operator sequence ``A_n = S((n - 1) step, n step)`` as dense matrices."""
    cache: dict[int, np.ndarray] = {}

    def provider(n):
        if n < 1:
            raise ContractError("backward sequences are queried for n >= 1")
        if n not in cache:
            cache[n] = backward_heat_evolve(grid, V, np.eye(grid.n_points), n * step, (n - 1) * step)
        return cache[n]

    return OperatorSequence(grid.n_points, BACKWARD, provider, length=n_steps + 1, name="sampled backward heat")


# --- backward heat functionals and stable ray ---------------------------------------


class BackwardHeatFunctionals:
    """``I^-_t(v) = C0 |<phi_1(W(t)), v>|`` and
    ``I^+_t(v) = sqrt(max(0, <v, (-d^2/dx^2 + W(t)) v>))``."""

    def __init__(self, grid: GridSpec, W: PotentialFn, C0: float = 10.0):
        self.grid, self.W, self.C0 = grid, W, C0
        self._phi: dict[float, np.ndarray] = {}

    def phi(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._phi:
            self._phi[key] = _ground_state(self.grid, self.W(key))[1]
        return self._phi[key]

    def minus(self, t, V):
        V = np.atleast_2d(V)
        return self.C0 * np.abs(self.grid.dx * V @ self.phi(t))

    def plus(self, t, V):
        V = np.atleast_2d(V)
        d, e = schrodinger_bands(self.grid, self.W(float(t)))
        form = self.grid.dx * np.einsum("ij,ji->i", V, tridiagonal_apply(d, e, V.T))
        return np.sqrt(np.maximum(form, 0.0))

    def pair(self) -> ConeFunctionalPair:
        c2 = min(self.C0, 1.0 / self.C0)
        return ConeFunctionalPair(self.minus, self.plus, 1, None, c2,
                                  covectors=lambda t: self.grid.dx * self.phi(t)[None, :],
                                  side="minus", name="backward-heat")


@dataclass
class StableRay:
    times: np.ndarray
    profiles: np.ndarray  # unit grid-L2 profiles, one row per time
    l2_norms: np.ndarray
    h1_norms: np.ndarray
    decay_rate: float  # minus the fitted log-slope of the H^1_0 norm
    mu: float
    epsilon: float

    @property
    def rate_ok(self) -> bool:
        return self.mu - self.epsilon <= self.decay_rate <= self.mu + self.epsilon


def _fit_slope(times, values) -> float:
    return float(np.polyfit(np.asarray(times, dtype=float), np.log(values), 1)[0])


def stable_ray_backward_heat(
    grid: GridSpec,
    V: PotentialFn,
    mu: float,
    T: float | None = None,
    epsilon: float = 0.15,
    seed_vector=None,
    n_out: int = 101,
    mollified: Mollified | None = None,
) -> StableRay:
    """Evolve a terminal profile at ``tau = T`` back to every output time.

    The default terminal profile is ``phi_1(W(T))`` for the mollified
    potential ``W``; contributions of the other modes shrink like
    ``exp(-(lambda_2 - lambda_1) T)``. ``T`` defaults to ``10 / mu``.
    """
    if T is None:
        T = 10.0 / mu
    T = round(T / grid.dt) * grid.dt
    W = mollified if mollified is not None else mollify_potential(V)
    if seed_vector is None:
        seed_vector = _ground_state(grid, W(T))[1]
    out_idx = np.unique(np.round(np.linspace(0, round(T / grid.dt), n_out)).astype(int))
    out_times = out_idx * grid.dt
    _, kept = _propagate(grid, V, seed_vector, T, 0.0, store=out_times)
    times = np.array(sorted(kept))
    states = np.array([kept[t] for t in times])
    l2 = np.array([grid.norm(u) for u in states])
    h1 = np.array([grid.gradient_norm(u) for u in states])
    profiles = states / l2[:, None]
    rate = -_fit_slope(times, h1)
    return StableRay(times, profiles, l2, h1, rate, mu, epsilon)


def ray_uniqueness(grid: GridSpec, V: PotentialFn, mu: float, T: float | None = None, seed: int = 0) -> float:
    """Distance at ``t = 0`` (up to sign) between rays started from
    ``phi_1(W(T))`` and from a random positive profile."""
    rng = np.random.default_rng(seed)
    other = rng.uniform(0.1, 1.0, grid.n_points)
    a = stable_ray_backward_heat(grid, V, mu, T, n_out=2).profiles[0]
    b = stable_ray_backward_heat(grid, V, mu, T, seed_vector=other, n_out=2).profiles[0]
    return float(min(grid.norm(a - b), grid.norm(a + b)))


def backward_heat_interval_checks(grid: GridSpec, V: PotentialFn, u_T, T: float, funcs: BackwardHeatFunctionals,
                                  c3: float, c4: float, mu: float, epsilon: float, n_out: int = 201):
    """Evolve ``u_T`` backward from ``T`` and test the sampled rate inequalities
    with exponents ``-mu + epsilon`` (decay of ``I^-``) and ``mu - epsilon``
    (growth of ``I^+``)."""
    out_times = np.round(np.linspace(0.0, T, n_out) / grid.dt) * grid.dt
    _, kept = _propagate(grid, V, u_T, T, 0.0, store=out_times)
    times = np.array(sorted(kept))
    states = np.array([kept[t] for t in times])
    im = np.array([funcs.minus(t, u)[0] for t, u in zip(times, states)])
    ip = np.array([funcs.plus(t, u)[0] for t, u in zip(times, states)])
    return check_interval_inequalities(times, im, ip, c3, c4, -mu + epsilon, mu - epsilon, BACKWARD)


# --- spectral constants ---------------------------------------------------------------


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def _smallest_penalty(build, lo: float = 0.0, hi: float = 1.0, iters: int = 60) -> float:
    """Smallest ``C`` with ``min_eig(build(C)) >= 0`` for a monotone family."""
    while _min_eig(build(hi)) < 0:
        hi *= 2.0
        if hi > 1e12:
            return np.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _min_eig(build(mid)) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def spectral_constants(grid: GridSpec, V, W, mu: float) -> dict:
    """Measured constants of the spectral bounds for the pair ``V, W``.

    Returned keys: ``lambda1_abs``, ``phi1_h1`` (sizes), ``lambda_lipschitz``
    (``|lambda1(V) - lambda1(W)| / |V - W|``), ``phi_holder``
    (``|phi1(V) - phi1(W)|_{H^1} / sqrt|V - W|``) and the smallest penalties
    for the three coercivity bounds of ``-d^2/dx^2 + V`` modulo ``phi1(V)``
    (form vs ``H^1``, square vs ``-d^2/dx^2`` and square vs ``mu`` times the form).
    """
    dx = grid.dx
    lam_v, phi_v = _ground_state(grid, V)
    lam_w, phi_w = _ground_state(grid, W)
    dist = grid.norm(np.asarray(V) - np.asarray(W))
    H = discretize_schrodinger(grid, V)
    Lap = discretize_schrodinger(grid, np.zeros(grid.n_points))
    G1 = Lap + np.eye(grid.n_points)  # H^1 Gram operator
    P = dx * np.outer(phi_v, phi_v)  # u -> <phi, u> phi in grid coordinates
    out = {
        "lambda1_abs": abs(lam_v),
        "phi1_h1": grid.h1_norm(phi_v),
        "lambda_lipschitz": abs(lam_v - lam_w) / dist if dist > 0 else 0.0,
        "phi_holder": grid.h1_norm(phi_v - phi_w) / np.sqrt(dist) if dist > 0 else 0.0,
    }
    # form: H >= G1 / C - C P  <=>  H - G1 / C + C P >= 0
    out["coercivity_form"] = _smallest_penalty(lambda C: H - G1 / max(C, 1e-300) + C * P, lo=1e-6)
    H2 = H @ H
    L2 = Lap @ Lap
    out["coercivity_h2"] = _smallest_penalty(lambda C: H2 - L2 / max(C, 1e-300) + C * P, lo=1e-6)
    out["coercivity_gap"] = _smallest_penalty(lambda C: H2 - mu * H + C * P)
    return out


# --- moving wells -----------------------------------------------------------------------


@dataclass
class WellModes:
    """Negative eigenpairs of one well, sampled on a centered reference grid."""

    shape: PotentialShape
    eigenvalues: np.ndarray  # negative, ascending
    x_ref: np.ndarray
    modes: np.ndarray  # columns
    splines: list

    @property
    def K(self) -> int:
        return len(self.eigenvalues)

    @property
    def rates(self) -> np.ndarray:
        return -self.eigenvalues

    def shifted(self, x, center: float) -> np.ndarray:
        """Mode profiles at ``x - center`` (zero outside the reference grid)."""
        x = np.asarray(x, dtype=float) - center
        inside = (x >= self.x_ref[0]) & (x <= self.x_ref[-1])
        out = np.zeros((len(x), self.K))
        for k, sp in enumerate(self.splines):
            out[inside, k] = sp(x[inside])
        return out


def well_modes(shape: PotentialShape, dx: float, half_width: float | None = None) -> WellModes:
    if half_width is None:
        half_width = max(30.0, 30.0 * shape.decay_length)
    ref = GridSpec.from_spacing(-half_width, half_width, dx)
    d, e = schrodinger_bands(ref, shape(ref.x))
    vals, vecs = lowest_modes(ref, d, e, 32)
    keep = vals < 0
    vals, vecs = vals[keep], vecs[:, keep]
    xs = np.concatenate([[ref.x_lo], ref.x, [ref.x_hi]])
    splines = [CubicSpline(xs, np.concatenate([[0.0], vecs[:, k], [0.0]])) for k in range(vecs.shape[1])]
    return WellModes(shape, vals, ref.x, vecs, splines)


class MovingWells:
    """Tracks, their modes, and the time-dependent operator ``-d^2/dx^2 + sum_j V_j(x - x_j(t))``."""

    def __init__(self, grid: GridSpec, tracks: list[PotentialTrack], modes: list[WellModes] | None = None):
        self.grid = grid
        self.tracks = list(tracks)
        self.modes = modes if modes is not None else [well_modes(tr.shape, grid.dx) for tr in self.tracks]

    @property
    def K(self) -> int:
        return sum(m.K for m in self.modes)

    @property
    def rates(self) -> np.ndarray:
        return np.concatenate([m.rates for m in self.modes])

    def potential(self, t: float) -> np.ndarray:
        return total_potential(self.tracks, self.grid.x, t)

    def eigenfunctions(self, t: float) -> np.ndarray:
        """Shifted mode profiles at time ``t``, one column per (well, mode)."""
        cols = [m.shifted(self.grid.x, float(tr.position(t))) for tr, m in zip(self.tracks, self.modes)]
        return np.hstack(cols) if cols else np.zeros((self.grid.n_points, 0))

    def gram_deviation(self, t: float = 0.0) -> float:
        Y = self.eigenfunctions(t)
        G = self.grid.dx * Y.T @ Y
        return float(np.max(np.abs(G - np.eye(G.shape[0])))) if G.size else 0.0


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, n_points) or (n_times, n_points, n_columns)


def heat_moving_evolve(system: MovingWells, u0, T: float, n_out: int = 101, wall_margin: float | None = None,
                       eta: float | None = None) -> Trajectory:
    """Crank-Nicolson trajectory of ``u_t = u_xx - sum_j V_j(x - x_j(t)) u`` on ``[0, T]``."""
    grid = system.grid
    check_tracks(system.tracks, grid.x_lo, grid.x_hi, T, max_speed=eta,
                 min_sep=None if eta is None or len(system.tracks) < 2 else 1.0 / eta,
                 wall_margin=wall_margin)
    out_times = np.unique(np.round(np.linspace(0.0, T, n_out) / grid.dt)) * grid.dt
    neg = lambda t: system.potential(t)
    _, kept = _propagate(grid, neg, u0, 0.0, round(T / grid.dt) * grid.dt, store=out_times)
    times = np.array(sorted(kept))
    return Trajectory(times, np.array([kept[t] for t in times]))


def moving_cone_functionals(system: MovingWells) -> ConeFunctionalPair:
    """``I^+_t(u) = sum |<Y_{j,k}(. - x_j(t)), u>|`` and ``I^-_t(u) = |u|_{L2}``."""
    grid = system.grid

    def minus(t, V):
        return np.sqrt(grid.dx * np.sum(np.atleast_2d(V) ** 2, axis=1))

    def plus(t, V):
        return np.sum(np.abs(grid.dx * np.atleast_2d(V) @ system.eigenfunctions(float(t))), axis=1)

    K = system.K
    return ConeFunctionalPair(minus, plus, K, 1.0 / (1.0 + K), 1.0 / max(K, 1),
                              covectors=lambda t: grid.dx * system.eigenfunctions(float(t)).T,
                              side="plus", name="moving-wells")


def _negative_count(diag: np.ndarray, off: np.ndarray) -> int:
    """Number of negative eigenvalues of a symmetric tridiagonal matrix (Sturm count)."""
    count, piv = 0, 1.0
    for i in range(len(diag)):
        piv = diag[i] - (off[i - 1] ** 2 / piv if i else 0.0)
        if piv == 0.0:
            piv = -1e-300
        if piv < 0:
            count += 1
    return count


def _penalized_negative_count(diag, off, W: np.ndarray, C: float) -> int:
    """Negative eigenvalues of ``T + C W W^T`` from the inertia of the bordered
    matrix ``[[T, W], [W^T, -I / C]]`` eliminated in both orders."""
    neg_T = _negative_count(diag, off)
    if C == 0 or W.shape[1] == 0:
        return neg_T
    X = tridiagonal_solve(diag, off, W)
    S = -np.eye(W.shape[1]) / C - W.T @ X
    return neg_T + int(np.sum(np.linalg.eigvalsh(0.5 * (S + S.T)) < 0)) - W.shape[1]


def penalized_min_eigenvalue(diag, off, W: np.ndarray, C: float, tol: float = 1e-13) -> float:
    """Smallest eigenvalue of ``T + C W W^T`` (``T`` tridiagonal, ``W`` thin), by bisection on inertia."""
    r = np.zeros_like(diag)
    r[:-1] += np.abs(off)
    r[1:] += np.abs(off)
    lo = float(np.min(diag - r))
    hi = float(np.min(diag + r)) + C * float(np.sum(W**2))
    scale = max(abs(lo), abs(hi), 1.0)
    while hi - lo > tol * scale:
        mid = 0.5 * (lo + hi)
        if _penalized_negative_count(diag - mid, off, W, C) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class CoercivityReport:
    C0: float
    epsilon: float
    min_value: float  # smallest value of the penalized form over unit vectors (exact)
    sample_min: float  # smallest value over the supplied samples
    C0_min: float  # smallest penalty giving min_value >= -epsilon

    @property
    def passed(self) -> bool:
        return self.min_value >= -self.epsilon and self.sample_min >= -self.epsilon


def coercivity_check(system: MovingWells, C0: float, epsilon: float = 0.0, samples=None, t: float = 0.0) -> CoercivityReport:
    """``<u, (-d^2/dx^2 + V) u> + C0 sum_k <Y_k, u>^2 >= -epsilon |u|^2``.

    The minimum over all ``u`` is the smallest eigenvalue of the penalized
    operator; the sample minimum and the smallest admissible ``C0`` (found by
    bisection) are reported alongside.
    """
    grid = system.grid
    d, e = schrodinger_bands(grid, system.potential(t))
    W = np.sqrt(grid.dx) * system.eigenfunctions(t)

    def admissible(c):
        return _penalized_negative_count(d + epsilon, e, W, c) == 0

    mval = penalized_min_eigenvalue(d, e, W, C0)
    if samples is None:
        samples = np.random.default_rng(0).standard_normal((100, grid.n_points))
    S = np.atleast_2d(samples)
    HS = tridiagonal_apply(d, e, S.T) + C0 * W @ (W.T @ S.T)
    vals = np.einsum("ij,ji->i", S, HS) / np.sum(S**2, axis=1)
    lo, hi = 0.0, max(C0, 1.0)
    while not admissible(hi) and hi < 1e12:
        lo, hi = hi, 2.0 * hi
    if admissible(lo):
        hi = lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    return CoercivityReport(C0, epsilon, mval, float(vals.min()), hi)


def energy_identity_defect(system: MovingWells, u0, t0: float = 0.0) -> float:
    """Relative defect of ``|u1|^2 - |u0|^2 = -2 dt <u_mid, H u_mid>`` over one step."""
    grid = system.grid
    dt = grid.dt
    Vm = system.potential(t0 + 0.5 * dt)
    u1 = _cn_step(grid, Vm, u0, dt)
    um = 0.5 * (u0 + u1)
    d, e = schrodinger_bands(grid, Vm)
    lhs = grid.norm(u1) ** 2 - grid.norm(u0) ** 2
    rhs = -2.0 * dt * grid.inner(um, tridiagonal_apply(d, e, um))
    return abs(lhs - rhs) / max(grid.norm(u0) ** 2, 1e-300)


def component_dynamics(system: MovingWells, traj: Trajectory) -> np.ndarray:
    """``max_t |a'(t) - lambda a(t)| / |u(t)|`` per (well, mode), with
    ``a(t) = <Y(. - x(t)), u(t)>`` and centered differences in time."""
    grid = system.grid
    t = traj.times
    a = np.array([grid.dx * traj.states[i] @ system.eigenfunctions(t[i]) for i in range(len(t))])
    norms = np.array([grid.norm(u) for u in traj.states])
    da = (a[2:] - a[:-2]) / (t[2:] - t[:-2])[:, None]
    defect = np.abs(da - system.rates[None, :] * a[1:-1]) / norms[1:-1, None]
    return defect.max(axis=0)


def growth_rate(system: MovingWells, T: float, u0=None, n_out: int = 101, fit_from: float = 0.5) -> float:
    """Log-slope of ``|u(t)|`` over the last part of ``[0, T]``; the default
    initial state is the first mode of the first well at its start position."""
    if u0 is None:
        u0 = system.eigenfunctions(0.0)[:, 0]
    traj = heat_moving_evolve(system, u0, T, n_out)
    norms = np.array([system.grid.norm(u) for u in traj.states])
    sel = traj.times >= fit_from * T
    return _fit_slope(traj.times[sel], norms[sel])


@dataclass
class MovingDichotomyReport:
    exponents: np.ndarray  # frame exponents, descending
    K_expected: int
    K_detected: int
    unstable_min: float
    stable_max: float
    lam: float
    epsilon: float
    stable_growth: float  # sup_t of exp(accumulated log growth - epsilon t) over the trailing frame vectors

    @property
    def passed(self) -> bool:
        return (
            self.K_detected == self.K_expected
            and self.unstable_min >= self.lam - self.epsilon
            and self.stable_max <= self.epsilon
        )


def moving_heat_dichotomy(system: MovingWells, T: float, epsilon: float = 0.1, extra: int = 5, seed: int = 0,
                          renorm_every: int = 50, eta: float | None = None) -> MovingDichotomyReport:
    """Evolve a random frame of ``K + extra`` vectors with QR renormalization.

    The frame exponents split into ``K`` growing ones (at least
    ``lambda - epsilon``, ``lambda`` the smallest well rate) and the rest (at
    most ``epsilon``); ``codim X_s = K`` is read off from that split.
    """
    grid = system.grid
    check_tracks(system.tracks, grid.x_lo, grid.x_hi, T, max_speed=eta,
                 min_sep=None if eta is None or len(system.tracks) < 2 else 1.0 / eta)
    K = system.K
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((grid.n_points, K + extra)))
    nodes = _time_nodes(0.0, round(T / grid.dt) * grid.dt, grid.dt)
    logs = np.zeros(K + extra)
    half_logs, half_time = None, 0.0
    stable_growth = 1.0
    for i, (a, b) in enumerate(zip(nodes[:-1], nodes[1:])):
        Q = _cn_step(grid, system.potential(0.5 * (a + b)), Q, b - a)
        if (i + 1) % renorm_every == 0 or i == len(nodes) - 2:
            Q, R = np.linalg.qr(Q)
            signs = np.sign(np.diag(R))
            Q, R = Q * signs, R * signs[:, None]
            logs += np.log(np.abs(np.diag(R)))
            # trailing diagonal entries measure growth modulo the leading K directions
            stable_growth = max(stable_growth, float(np.exp(np.max(logs[K:]) - epsilon * b)))
            if half_logs is None and b >= 0.5 * nodes[-1]:
                half_logs, half_time = logs.copy(), b
    # the second half of the window is free of the transient of the random start
    exps = (logs - half_logs) / (nodes[-1] - half_time)
    order = np.sort(exps)[::-1]
    lam = float(system.rates.min())
    threshold = 0.5 * lam
    return MovingDichotomyReport(order, K, int(np.sum(order > threshold)), float(order[K - 1]) if K else np.inf,
                                 float(order[K]) if len(order) > K else -np.inf, lam, epsilon, stable_growth)
