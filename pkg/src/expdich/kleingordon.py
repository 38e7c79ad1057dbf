"""Linear Klein-Gordon flows ``u_tt = u_xx - u - V(t, x) u`` with Lorentz-boosted
moving wells on a truncated line.

States are pairs ``(u, u_t)`` of grid vectors. Space uses the fourth-order
five-point Laplacian with zero values beyond the walls; time uses a Strang
splitting (half kick with the mass and potential terms, implicit Cayley drift
for the free wave, half kick), which is symplectic and second order. All
norms are the grid energy norm ``|u|^2 + <u, -D2 u> + |u_t|^2`` (times ``dx``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from .errors import ContractError, DomainError, SeparationError
from .grid import GridSpec
from .potentials import PotentialShape, PotentialTrack, check_tracks, min_separation

CLAMP_RTOL = 1e-14  # tilted objects are set to zero where the profile drops below this fraction of its peak
WALL_TOL = 1e-8
ZERO_MODE_FACTOR = 10.0  # |lambda| < ZERO_MODE_FACTOR dx^2 counts as a zero mode


# --- boosts -------------------------------------------------------------------------------


@dataclass(frozen=True)
class BoostFrame:
    beta: float = 0.0

    def __post_init__(self):
        if not abs(self.beta) < 1.0:
            raise ContractError(f"|beta| must be below 1, got {self.beta}")

    @property
    def gamma(self) -> float:
        return 1.0 / np.sqrt(1.0 - self.beta**2)

    def dilate(self, x):
        """At d = 1 the boost acts on space as the dilation ``x -> gamma x``."""
        return self.gamma * np.asarray(x, dtype=float)


def boost_function(phi, grid: GridSpec, frame: BoostFrame, inverse: bool = False) -> np.ndarray:
    """Resample a grid function at ``gamma x`` (or ``x / gamma``) by cubic
    interpolation, with zero outside the domain."""
    phi = np.asarray(phi, dtype=float)
    if frame.beta == 0.0:
        return phi.copy()
    xs = np.concatenate([[grid.x_lo], grid.x, [grid.x_hi]])
    spline = CubicSpline(xs, np.concatenate([[0.0], phi, [0.0]]))
    s = grid.x / frame.gamma if inverse else frame.dilate(grid.x)
    out = np.zeros_like(phi)
    inside = (s >= grid.x_lo) & (s <= grid.x_hi)
    out[inside] = spline(s[inside])
    return out


# --- fourth-order finite differences ----------------------------------------------------------


def laplacian4_banded(grid: GridSpec) -> np.ndarray:
    """``-d^2/dx^2`` (five-point, fourth order) in lower banded storage.

    The ghost node behind each wall is the odd reflection ``u_{-1} = -u_1``,
    which keeps the stencil fourth order up to the Dirichlet boundary.
    """
    n, h2 = grid.n_points, grid.dx**2
    ab = np.zeros((3, n))
    ab[0] = 2.5 / h2
    ab[0, [0, -1]] = (29.0 / 12.0) / h2
    ab[1, :-1] = -(4.0 / 3.0) / h2
    ab[2, :-2] = (1.0 / 12.0) / h2
    return ab


def banded_apply(ab: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Symmetric lower-banded matrix times ``u`` (extra columns allowed)."""
    shape = (-1,) + (1,) * (u.ndim - 1)
    out = ab[0].reshape(shape) * u
    for k in range(1, ab.shape[0]):
        band = ab[k, :-k].reshape(shape)
        out[:-k] += band * u[k:]
        out[k:] += band * u[:-k]
    return out


def banded_dense(ab: np.ndarray) -> np.ndarray:
    M = np.diag(ab[0])
    for k in range(1, ab.shape[0]):
        M += np.diag(ab[k, :-k], -k) + np.diag(ab[k, :-k], k)
    return M


def derivative4(u: np.ndarray, dx: float) -> np.ndarray:
    """Centered fourth-order first derivative with zero values beyond the walls."""
    pad = [(2, 2)] + [(0, 0)] * (u.ndim - 1)
    p = np.pad(u, pad)
    return (-p[4:] + 8.0 * p[3:-1] - 8.0 * p[1:-3] + p[:-4]) / (12.0 * dx)


def derivative4_dense(n: int, dx: float) -> np.ndarray:
    return derivative4(np.eye(n), dx)


# --- spectra of one well --------------------------------------------------------------------------


@dataclass
class KGModes:
    """Negative and zero eigenpairs of ``-d^2/dx^2 + 1 + V`` for one well,
    sampled on a centered reference grid and splined for re-evaluation."""

    shape: PotentialShape
    dx: float
    eigenvalues: np.ndarray  # all computed, ascending
    nu: np.ndarray  # sqrt(-lambda) of the negative ones
    zero_eigenvalues: np.ndarray
    x_ref: np.ndarray
    phi: np.ndarray  # columns
    phi0: np.ndarray
    _splines: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return len(self.nu)

    @property
    def M(self) -> int:
        return self.phi0.shape[1]

    def profiles(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Values and derivatives of all modes (negative first, then zero) at ``s``."""
        s = np.asarray(s, dtype=float)
        inside = (s >= self.x_ref[0] - self.dx) & (s <= self.x_ref[-1] + self.dx)
        vals = np.zeros((len(s), len(self._splines)))
        ders = np.zeros_like(vals)
        for k, sp in enumerate(self._splines):
            vals[inside, k] = sp(s[inside])
            ders[inside, k] = sp(s[inside], 1)
        return vals, ders


def kg_modes(shape: PotentialShape, dx: float, half_width: float | None = None, max_count: int = 12) -> KGModes:
    if half_width is None:
        half_width = max(20.0, 20.0 * shape.decay_length)
    half_width = dx * np.ceil(half_width / dx)  # keeps the reference nodes on the dx lattice through 0
    ref = GridSpec.from_spacing(-half_width, half_width, dx)
    ab = laplacian4_banded(ref)
    ab[0] += 1.0 + shape(ref.x)
    count = min(max_count, ref.n_points)
    vals, vecs = sla.eig_banded(ab, lower=True, select="i", select_range=(0, count - 1))
    vecs = vecs / np.sqrt(dx)
    idx = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[idx, np.arange(vecs.shape[1])])
    tol = ZERO_MODE_FACTOR * dx**2
    neg = vals < -tol
    zero = np.abs(vals) <= tol
    xs = np.concatenate([[ref.x_lo], ref.x, [ref.x_hi]])
    cols = np.hstack([vecs[:, neg], vecs[:, zero]])
    splines = [CubicSpline(xs, np.concatenate([[0.0], c, [0.0]])) for c in cols.T]
    return KGModes(shape, dx, vals, np.sqrt(-vals[neg]), vals[zero], ref.x, vecs[:, neg], vecs[:, zero], splines)


# --- eigen-objects ----------------------------------------------------------------------------------


def apply_J(Y: np.ndarray) -> np.ndarray:
    """``J (a, b) = (b, -a)`` on arrays whose second-to-last axis is the pair axis."""
    out = np.empty_like(Y)
    out[..., 0, :] = Y[..., 1, :]
    out[..., 1, :] = -Y[..., 0, :]
    return out


@dataclass
class KGEigenObjects:
    """Boosted, translated eigen-objects of one well on a grid.

    ``Yplus[k]``/``Yminus[k]`` start the solutions growing/decaying like
    ``exp(+-nu_k t / gamma)``, ``Y0[m]`` the stationary ones; each ``alpha`` is
    ``J`` applied to the matching ``Y`` and reads off the conjugate component.
    Arrays are ``(count, 2, n_points)``.
    """

    frame: BoostFrame
    center: float
    nu: np.ndarray
    phi: np.ndarray  # (K, n) profiles at gamma (x - center)
    phi0: np.ndarray
    Yplus: np.ndarray
    Yminus: np.ndarray
    Y0: np.ndarray

    @property
    def K(self) -> int:
        return len(self.nu)

    @property
    def M(self) -> int:
        return self.Y0.shape[0]

    @property
    def rates(self) -> np.ndarray:
        return self.nu / self.frame.gamma

    @property
    def alpha_minus(self) -> np.ndarray:
        return apply_J(self.Yplus)

    @property
    def alpha_plus(self) -> np.ndarray:
        return apply_J(self.Yminus)

    @property
    def alpha0(self) -> np.ndarray:
        return apply_J(self.Y0)


def _tilted(profile: np.ndarray, second: np.ndarray, exponent: np.ndarray) -> np.ndarray:
    keep = np.abs(profile) >= CLAMP_RTOL * np.max(np.abs(profile))
    tilt = np.where(keep, np.exp(np.where(keep, exponent, 0.0)), 0.0)
    return np.stack([tilt * profile, tilt * second])


def build_eigen_objects(grid: GridSpec, modes: KGModes | PotentialShape, frame: BoostFrame,
                        center: float = 0.0, check_walls: bool = True) -> KGEigenObjects:
    if isinstance(modes, PotentialShape):
        modes = kg_modes(modes, grid.dx)
    g, b = frame.gamma, frame.beta
    xr = grid.x - center
    vals, ders = modes.profiles(g * xr)
    K = modes.K
    Yp, Ym, Y0 = [], [], []
    for k in range(K):
        p, dp, nu = vals[:, k], ders[:, k], modes.nu[k]
        Yp.append(_tilted(p, -g * b * dp + g * nu * p, -g * nu * b * xr))
        Ym.append(_tilted(p, -g * b * dp - g * nu * p, g * nu * b * xr))
    for m in range(modes.M):
        p, dp = vals[:, K + m], ders[:, K + m]
        Y0.append(np.stack([p, -g * b * dp]))
    n = grid.n_points
    objs = KGEigenObjects(
        frame, float(center), modes.nu.copy(), vals[:, :K].T.copy(), vals[:, K:].T.copy(),
        np.array(Yp).reshape(K, 2, n), np.array(Ym).reshape(K, 2, n), np.array(Y0).reshape(modes.M, 2, n),
    )
    if check_walls:
        for name, Y in (("Y+", objs.Yplus), ("Y-", objs.Yminus), ("Y0", objs.Y0)):
            for i, obj in enumerate(Y):
                peak = np.max(np.abs(obj))
                edge = max(np.max(np.abs(obj[:, :2])), np.max(np.abs(obj[:, -2:])))
                if peak > 0 and edge > WALL_TOL * peak:
                    raise DomainError(
                        f"{name}[{i}] is {edge / peak:.2e} of its peak at a wall (needs <= {WALL_TOL:g}); "
                        f"widen the domain or move the well inward"
                    )
    return objs


# --- states, norms and pairings ----------------------------------------------------------------------


@dataclass
class KGState:
    u: np.ndarray
    udot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.udot = np.asarray(self.udot, dtype=float)
        if self.u.shape != self.udot.shape:
            raise ContractError("u and udot must have the same shape")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.udot))):
            raise ContractError("state has non-finite entries")

    @classmethod
    def from_pair(cls, Y: np.ndarray, t: float = 0.0) -> "KGState":
        return cls(Y[0].copy(), Y[1].copy(), t)


def energy_inner(grid: GridSpec, lap: np.ndarray, u1, w1, u2, w2):
    """Energy inner product; columns broadcast."""
    return grid.dx * (np.sum(u1 * u2, axis=0) + np.sum(u1 * banded_apply(lap, u2), axis=0) + np.sum(w1 * w2, axis=0))


def pairing(grid: GridSpec, A: np.ndarray, u, w) -> np.ndarray:
    """``<A, (u, w)>`` in the grid ``L2 x L2`` product for each object in ``A`` (count, 2, n)."""
    return grid.dx * (A[:, 0, :] @ u + A[:, 1, :] @ w)


def symplectic_pairing(grid: GridSpec, v: KGState, u: KGState) -> float:
    """``<J v, u>``; constant in time for two solutions of the same flow."""
    return float(grid.dx * (np.dot(v.udot, u.u) - np.dot(v.u, u.udot)))


# --- systems and time stepping -------------------------------------------------------------------------


class KGSystem:
    """Wells riding on tracks, each boosted by its instantaneous velocity."""

    def __init__(self, grid: GridSpec, tracks: list[PotentialTrack], modes: list[KGModes] | None = None):
        self.grid = grid
        self.tracks = list(tracks)
        if modes is None:
            cache: dict = {}
            modes = []
            for tr in self.tracks:
                key = (tr.shape.name, tuple(sorted(tr.shape.params.items())))
                if key not in cache:
                    cache[key] = kg_modes(tr.shape, grid.dx)
                modes.append(cache[key])
        self.modes = modes
        self.lap = laplacian4_banded(grid)

    @property
    def K(self) -> int:
        return sum(m.K for m in self.modes)

    @property
    def M(self) -> int:
        return sum(m.M for m in self.modes)

    @property
    def nu_min(self) -> float:
        return float(min(m.nu.min() for m in self.modes if m.K)) if self.K else np.inf

    def frames(self, t: float) -> list[BoostFrame]:
        return [BoostFrame(float(tr.velocity(t))) for tr in self.tracks]

    def potential(self, t: float) -> np.ndarray:
        out = np.zeros(self.grid.n_points)
        for tr, fr in zip(self.tracks, self.frames(t)):
            out += tr.shape(fr.gamma * (self.grid.x - float(tr.position(t))))
        return out

    def objects(self, t: float, check_walls: bool = True) -> list[KGEigenObjects]:
        return [
            build_eigen_objects(self.grid, m, fr, float(tr.position(t)), check_walls)
            for tr, m, fr in zip(self.tracks, self.modes, self.frames(t))
        ]

    def energy_norm(self, u, w):
        return np.sqrt(energy_inner(self.grid, self.lap, u, w, u, w))


@dataclass
class KGTrajectory:
    times: np.ndarray
    u: np.ndarray  # (n_times, n_points[, n_columns])
    udot: np.ndarray

    def state(self, i: int) -> KGState:
        return KGState(self.u[i], self.udot[i], float(self.times[i]))


class _Stepper:
    def __init__(self, system: KGSystem, dt: float):
        self.system, self.dt = system, dt
        self.lap = system.lap
        ab = system.lap * (0.25 * dt * dt)
        ab[0] += 1.0
        self.factor = sla.cholesky_banded(ab, lower=True)

    def step(self, u, w, t):
        dt = self.dt
        mass = (1.0 + self.system.potential(t + 0.5 * dt)).reshape((-1,) + (1,) * (u.ndim - 1))
        w = w - 0.5 * dt * mass * u
        Au = banded_apply(self.lap, u)
        u1 = sla.cho_solve_banded((self.factor, True), u - 0.25 * dt * dt * Au + dt * w)
        w = w - 0.5 * dt * (Au + banded_apply(self.lap, u1))
        w = w - 0.5 * dt * mass * u1
        return u1, w


def _step_count(T: float, dt: float) -> tuple[int, float]:
    n = max(1, int(round(T / dt)))
    return n, T / n


def kg_evolve(system: KGSystem, state0: KGState, T: float, dt: float | None = None, stride: int = 1,
              wall_margin: float | None = None) -> KGTrajectory:
    """Evolve ``(u, u_t)`` over ``[0, T]`` storing every ``stride`` steps."""
    grid = system.grid
    dt = grid.dt if dt is None else dt
    if dt > 0.5 * grid.dx:
        warnings.warn(f"dt={dt:g} exceeds dx/2={0.5 * grid.dx:g}; the free-wave drift stays stable "
                      "but phase errors grow", RuntimeWarning, stacklevel=2)
    check_tracks(system.tracks, grid.x_lo, grid.x_hi, T, wall_margin=wall_margin)
    n, dt = _step_count(T, dt)
    stepper = _Stepper(system, dt)
    u, w, t0 = state0.u.copy(), state0.udot.copy(), state0.t
    times, us, ws = [t0], [u.copy()], [w.copy()]
    for i in range(n):
        u, w = stepper.step(u, w, t0 + i * dt)
        if (i + 1) % stride == 0 or i == n - 1:
            times.append(t0 + (i + 1) * dt)
            us.append(u.copy())
            ws.append(w.copy())
    return KGTrajectory(np.array(times), np.array(us), np.array(ws))


def box_mode(grid: GridSpec, k: int = 1) -> tuple[np.ndarray, float]:
    """Dirichlet box mode ``sin(k pi (x - x_lo) / length)`` and its exact
    free Klein-Gordon frequency ``sqrt(1 + (k pi / length)^2)``."""
    length = grid.x_hi - grid.x_lo
    q = k * np.pi / length
    return np.sin(q * (grid.x - grid.x_lo)), float(np.sqrt(1.0 + q * q))


# --- exact solutions ---------------------------------------------------------------------------------------

WHICH = ("plus", "minus", "zero")


def single_well(grid: GridSpec, shape: PotentialShape, beta: float = 0.0, xi: float = 0.0,
                modes: KGModes | None = None) -> KGSystem:
    return KGSystem(grid, [PotentialTrack(shape, x0=xi, v0=beta)], None if modes is None else [modes])


def closed_form(system: KGSystem, which: str, t: float, index: int = 0) -> np.ndarray:
    """Exact solution of a single constant-velocity well at time ``t``, as a (2, n) pair."""
    if which not in WHICH:
        raise ContractError(f"which must be one of {WHICH}")
    if len(system.tracks) != 1 or system.tracks[0].amp:
        raise ContractError("closed forms need one well moving at constant velocity")
    obj = system.objects(t)[0]
    if which == "zero":
        if index >= obj.M:
            raise ContractError(f"the well has {obj.M} zero modes")
        return obj.Y0[index]
    if index >= obj.K:
        raise ContractError(f"the well has {obj.K} negative modes")
    rate = obj.rates[index]
    if which == "plus":
        return np.exp(rate * t) * obj.Yplus[index]
    return np.exp(-rate * t) * obj.Yminus[index]


@dataclass
class ResidualCurve:
    which: str
    times: np.ndarray
    residual: np.ndarray  # energy-norm error relative to the closed form
    norms: np.ndarray  # energy norms of the numerical solution
    dx: float
    dt: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual))

    def growth_rate(self, fit_from: float = 0.5) -> float:
        keep = self.times >= fit_from * self.times[-1]
        return float(np.polyfit(self.times[keep], np.log(self.norms[keep]), 1)[0])


def exact_solution_residual(system: KGSystem, which: str, T: float, index: int = 0, dt: float | None = None,
                            stride: int = 1) -> ResidualCurve:
    Y = closed_form(system, which, 0.0, index)
    traj = kg_evolve(system, KGState.from_pair(Y), T, dt, stride)
    res, norms = [], []
    for i, t in enumerate(traj.times):
        ref = closed_form(system, which, float(t), index)
        err = system.energy_norm(traj.u[i] - ref[0], traj.udot[i] - ref[1])
        res.append(err / system.energy_norm(ref[0], ref[1]))
        norms.append(system.energy_norm(traj.u[i], traj.udot[i]))
    step = T / _step_count(T, system.grid.dt if dt is None else dt)[0]
    return ResidualCurve(which, traj.times, np.array(res), np.array(norms), system.grid.dx, step)


@dataclass
class ConvergenceTable:
    which: str
    beta: float
    rows: list  # (dx, dt, max residual)

    @property
    def orders(self) -> np.ndarray:
        r = np.array([row[2] for row in self.rows])
        h = np.array([row[0] for row in self.rows])
        return np.log(r[:-1] / r[1:]) / np.log(h[:-1] / h[1:])

    @property
    def min_order(self) -> float:
        return float(np.min(self.orders))


def convergence_study(shape: PotentialShape, beta: float, which: str, dxs=(0.1, 0.05, 0.025), T: float = 1.0,
                      half_width: float = 20.0, dt_ratio: float = 0.5, index: int = 0) -> ConvergenceTable:
    """Residual of the closed-form solution under simultaneous halving of ``dx`` and ``dt``."""
    rows = []
    for dx in dxs:
        grid = GridSpec.from_spacing(-half_width, half_width, dx, dt=dt_ratio * dx)
        system = single_well(grid, shape, beta)
        curve = exact_solution_residual(system, which, T, index)
        rows.append((float(dx), curve.dt, curve.max_residual))
    return ConvergenceTable(which, float(beta), rows)


# --- components --------------------------------------------------------------------------------------------


@dataclass
class Components:
    times: np.ndarray
    plus: np.ndarray  # (n_times, K), one column per (well, mode)
    minus: np.ndarray
    zero: np.ndarray  # (n_times, M)
    rates: np.ndarray  # (n_times, K): nu / gamma at the instantaneous velocity
    norms: np.ndarray

    def law_defects(self) -> dict:
        """``max |d/dt a -+ rate a| / |u|`` by centered differences at interior times."""
        t = self.times
        span = (t[2:] - t[:-2])[:, None]
        mid = slice(1, -1)
        scale = self.norms[mid][:, None]

        def worst(series, rate, sign):
            if series.shape[1] == 0:
                return 0.0
            deriv = (series[2:] - series[:-2]) / span
            return float(np.max(np.abs(deriv - sign * rate * series[mid]) / scale))

        return {
            "plus": worst(self.plus, self.rates[mid], 1.0),
            "minus": worst(self.minus, self.rates[mid], -1.0),
            "zero": worst(self.zero, 0.0, 0.0),
        }

    def law_constant(self) -> float:
        """One constant bounding every component law defect."""
        return max(self.law_defects().values())


def track_components(system: KGSystem, traj: KGTrajectory) -> Components:
    plus, minus, zero, rates, norms = [], [], [], [], []
    for i, t in enumerate(traj.times):
        objs = system.objects(float(t), check_walls=False)
        u, w = traj.u[i], traj.udot[i]
        plus.append(np.concatenate([pairing(system.grid, o.alpha_plus, u, w) for o in objs]))
        minus.append(np.concatenate([pairing(system.grid, o.alpha_minus, u, w) for o in objs]))
        zero.append(np.concatenate([pairing(system.grid, o.alpha0, u, w) for o in objs]))
        rates.append(np.concatenate([o.rates for o in objs]))
        norms.append(system.energy_norm(u, w))
    return Components(traj.times, np.array(plus), np.array(minus), np.array(zero), np.array(rates), np.array(norms))


# --- localized energy form ------------------------------------------------------------------------------------


def plateau(s) -> np.ndarray:
    """Smooth cutoff equal to 1 on ``|s| <= 1/4`` and 0 on ``|s| >= 1/2``."""
    r = np.clip((0.5 - np.abs(np.asarray(s, dtype=float))) * 4.0, 0.0, 1.0)

    def f(x):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    return f(r) / (f(r) + f(1.0 - r))


def cross_weight(system: KGSystem, t: float, eta_cutoff: float | None = None) -> np.ndarray:
    """``sum_j chi_j(t, x) beta_j(t)``; one well without a cutoff uses ``chi = 1``."""
    frames = system.frames(t)
    if eta_cutoff is None:
        if len(system.tracks) != 1:
            raise ContractError("several wells need a cutoff scale")
        return np.full(system.grid.n_points, frames[0].beta)
    pos = [float(tr.position(t)) for tr in system.tracks]
    sep = min_separation(system.tracks, np.array([t]))
    if sep < 1.0 / eta_cutoff:
        raise SeparationError(f"wells {sep:.4g} apart at t={t:g}; cutoffs of scale {eta_cutoff:g} "
                              f"need at least {1.0 / eta_cutoff:.4g}")
    out = np.zeros(system.grid.n_points)
    for p, fr in zip(pos, frames):
        out += plateau(eta_cutoff * (system.grid.x - p)) * fr.beta
    return out


def q_form(system: KGSystem, u, w, t: float, eta_cutoff: float | None = None):
    """Localized quadratic energy of ``(u, w)`` at time ``t`` (columns broadcast)."""
    grid = system.grid
    V = system.potential(t)
    cw = cross_weight(system, t, eta_cutoff)
    shape = (-1,) + (1,) * (np.ndim(u) - 1)
    du = derivative4(u, grid.dx)
    integrand = (w * w + 2.0 * w * cw.reshape(shape) * du + u * banded_apply(system.lap, u)
                 + (1.0 + V).reshape(shape) * u * u)
    return 0.5 * grid.dx * np.sum(integrand, axis=0)


def _all_covectors(system: KGSystem, t: float, zero_profiles: bool = True) -> np.ndarray:
    """Covectors penalized in the coercivity bound. The ``alpha`` family alone
    misses the stationary zero-mode state ``Y0`` (it pairs to zero with all of
    them while ``Q(Y0) = 0``), so ``Y0`` itself is added unless disabled."""
    objs = system.objects(t, check_walls=False)
    parts = [np.concatenate([o.alpha_minus, o.alpha_plus, o.alpha0] + ([o.Y0] if zero_profiles else []))
             for o in objs]
    return np.concatenate(parts) if parts else np.zeros((0, 2, system.grid.n_points))


def q_matrices(system: KGSystem, t: float, eta_cutoff: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense matrices of the quadratic form and of the energy inner product on ``(u, w)``."""
    grid = system.grid
    n, dx = grid.n_points, grid.dx
    A = banded_dense(system.lap)
    V = system.potential(t)
    B = cross_weight(system, t, eta_cutoff)[:, None] * derivative4_dense(n, dx)
    Q = np.zeros((2 * n, 2 * n))
    Q[:n, :n] = 0.5 * dx * (A + np.diag(1.0 + V))
    Q[n:, n:] = 0.5 * dx * np.eye(n)
    Q[n:, :n] = 0.5 * dx * B
    Q[:n, n:] = 0.5 * dx * B.T
    E = np.zeros_like(Q)
    E[:n, :n] = dx * (np.eye(n) + A)
    E[n:, n:] = dx * np.eye(n)
    return Q, E


@dataclass(frozen=True)
class QCoercivity:
    C0: float
    c: float  # smallest value of (Q + C0 sum a^2) / |state|^2
    probe_min: float  # smallest ratio over random smooth states
    n_probe: int

    @property
    def passed(self) -> bool:
        return self.c > 0 and self.probe_min >= self.c * (1 - 1e-9)


def smooth_random_states(system: KGSystem, count: int, seed: int = 0, n_bumps: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Random sums of Gaussian bumps (widths 0.5 to 2, centers in the middle
    half of the domain) for ``u`` and ``w``, scaled to unit energy."""
    rng = np.random.default_rng(seed)
    grid = system.grid
    mid, half = 0.5 * (grid.x_lo + grid.x_hi), 0.25 * (grid.x_hi - grid.x_lo)

    def draw():
        centers = rng.uniform(mid - half, mid + half, (n_bumps, count))
        widths = rng.uniform(0.5, 2.0, (n_bumps, count))
        coef = rng.standard_normal((n_bumps, count))
        z = (grid.x[:, None, None] - centers[None]) / widths[None]
        return np.sum(coef[None] * np.exp(-z * z), axis=1)

    u, w = draw(), draw()
    scale = system.energy_norm(u, w)
    return u / scale, w / scale


def q_coercivity(system: KGSystem, t: float = 0.0, C0: float = 10.0, eta_cutoff: float | None = None,
                 n_probe: int = 1000, seed: int = 0, zero_profiles: bool = True) -> QCoercivity:
    """Coercivity of ``Q`` modulo the eigen-components.

    ``c`` is the exact smallest generalized eigenvalue of
    ``Q + C0 sum_i a_i^2`` against the energy inner product; the random probe
    confirms no sampled state goes below it.
    """
    grid = system.grid
    Q, E = q_matrices(system, t, eta_cutoff)
    cov = _all_covectors(system, t, zero_profiles)
    if len(cov):
        rows = grid.dx * cov.reshape(len(cov), -1)
        Q = Q + C0 * rows.T @ rows
    c = float(sla.eigh(Q, E, eigvals_only=True, subset_by_index=[0, 0])[0])
    u, w = smooth_random_states(system, n_probe, seed)
    S = np.vstack([u, w])
    ratios = np.einsum("ij,ij->j", S, Q @ S) / np.einsum("ij,ij->j", S, E @ S)
    return QCoercivity(float(C0), c, float(ratios.min()), n_probe)


# --- conservation ----------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ConservationReport:
    T: float
    dx: float
    dt: float
    q_drift: float  # max |Q(t) - Q(0)| / max_t |u(t)|^2
    pairing_drift: float  # max |<Jv, u>(t) - <Jv, u>(0)| / max_t(|u| |v|)
    q_drift_initial: float  # max |Q(t) - Q(0)| / |Q(0)|, meaningless when Q(0) ~ 0
    antisymmetry: float  # |<Ju, u>| at t = 0

    def passed(self, tol: float = 1e-3) -> bool:
        return self.q_drift <= tol and self.pairing_drift <= tol


def conservation_diagnostics(system: KGSystem, T: float = 2.0, dt: float | None = None, seed: int = 0,
                             states: tuple[KGState, KGState] | None = None) -> ConservationReport:
    """Drift of the moving-frame energy of one solution and of the symplectic
    pairing of two solutions for a single constant-velocity well."""
    if len(system.tracks) != 1 or system.tracks[0].amp:
        raise ContractError("conservation holds for one well at constant velocity")
    if states is None:
        u, w = smooth_random_states(system, 2, seed)
        states = (KGState(u[:, 0], w[:, 0]), KGState(u[:, 1], w[:, 1]))
    s1, s2 = states
    pair0 = KGState(np.stack([s1.u, s2.u], axis=1), np.stack([s1.udot, s2.udot], axis=1))
    traj = kg_evolve(system, pair0, T, dt)
    q = np.array([q_form(system, traj.u[i][:, 0], traj.udot[i][:, 0], float(t)) for i, t in enumerate(traj.times)])
    grid = system.grid
    pr = np.array([grid.dx * (traj.udot[i][:, 1] @ traj.u[i][:, 0] - traj.u[i][:, 1] @ traj.udot[i][:, 0])
                   for i in range(len(traj.times))])
    norms = np.array([system.energy_norm(traj.u[i], traj.udot[i]) for i in range(len(traj.times))])
    anti = abs(symplectic_pairing(grid, s1, s1))
    step = T / _step_count(T, grid.dt if dt is None else dt)[0]
    dq = float(np.max(np.abs(q - q[0])))
    return ConservationReport(
        T=float(T), dx=grid.dx, dt=step,
        q_drift=dq / float(np.max(norms[:, 0] ** 2)),
        pairing_drift=float(np.max(np.abs(pr - pr[0])) / np.max(np.prod(norms, axis=1))),
        q_drift_initial=dq / abs(q[0]) if q[0] != 0 else np.inf,
        antisymmetry=float(anti),
    )


# --- dichotomy ----------------------------------------------------------------------------------------------------


@dataclass
class KGDichotomyReport:
    exponents: np.ndarray  # frame exponents from the second half of the window, descending
    K_expected: int
    K_detected: int
    unstable_min: float
    unstable_threshold: float  # nu sqrt(1 - v^2) - slack
    stable_max: float
    epsilon: float
    stable_growth: float  # sup_t |stable part| e^{-epsilon t}
    hypotheses: list  # (item, passed, measured, bound)
    interval: dict = field(default_factory=dict)

    @property
    def hypotheses_ok(self) -> bool:
        return all(h[1] for h in self.hypotheses)

    @property
    def passed(self) -> bool:
        return (
            self.K_detected == self.K_expected
            and self.unstable_min >= self.unstable_threshold
            and self.stable_max <= self.epsilon
        )

    def lines(self) -> list[str]:
        out = [f"{'PASS' if ok else 'FAIL'} hypothesis {name}: measured {m:.6g}, bound {b:.6g}"
               for name, ok, m, b in self.hypotheses]
        out.append(f"{'PASS' if self.K_detected == self.K_expected else 'FAIL'} codim X_s = K: "
                   f"detected {self.K_detected}, expected {self.K_expected}")
        out.append(f"{'PASS' if self.unstable_min >= self.unstable_threshold else 'FAIL'} unstable growth: "
                   f"min exponent {self.unstable_min:.6g} >= {self.unstable_threshold:.6g} "
                   f"(margin {self.unstable_min - self.unstable_threshold:.3g})")
        out.append(f"{'PASS' if self.stable_max <= self.epsilon else 'FAIL'} stable growth: "
                   f"max exponent {self.stable_max:.6g} <= {self.epsilon:.6g} "
                   f"(margin {self.epsilon - self.stable_max:.3g}, constant {self.stable_growth:.4g})")
        return out


def _energy_cholesky_qr(system: KGSystem, U, W):
    G = system.grid.dx * (U.T @ U + U.T @ banded_apply(system.lap, U) + W.T @ W)
    R = np.linalg.cholesky(0.5 * (G + G.T)).T
    Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
    return U @ Rinv, W @ Rinv, R


def hypothesis_items(system: KGSystem, T: float, v: float | None, eta: float | None, n_times: int = 401) -> list:
    grid = system.grid
    stats = check_tracks(system.tracks, grid.x_lo, grid.x_hi, T, n_times=n_times)
    items = []
    if v is not None:
        items.append(("|beta_j| <= v", stats["max_speed"] <= v * (1 + 1e-12), stats["max_speed"], v))
    if eta is not None:
        items.append(("|beta_j'| <= eta", stats["max_acceleration"] <= eta * (1 + 1e-12),
                      stats["max_acceleration"], eta))
        if len(system.tracks) > 1:
            items.append(("|y_j - y_l| >= 1/eta", stats["min_separation"] >= 1.0 / eta,
                          stats["min_separation"], 1.0 / eta))
    return items


def interval_diagnostics(system: KGSystem, T: float, v: float, eta_cutoff: float | None, c3: float = 1.0,
                         c4: float = 1.0, n_solutions: int = 3, seed: int = 1, dt: float | None = None) -> dict:
    """Measured slack in the differential inequalities for the cone functionals.

    ``I^+`` is the l2 norm of the growing components; ``I^-`` the square root of
    the positive part of ``Q`` plus the squared decaying and zero components.
    Returns the smallest ``eps`` with ``d/dt I^+ >= nu sqrt(1 - v^2) I^+ - eps |u|``
    where ``I^+ >= c4 I^-`` and ``d/dt I^- <= eps |u|`` where ``I^+ <= c3 I^-``.
    """
    grid = system.grid
    dt = grid.dt if dt is None else dt
    # stride with a Nyquist frequency above 10 times the fastest rate
    nu_max = max((m.nu.max() for m in system.modes if m.K), default=1.0)
    stride = max(1, int(np.floor(np.pi / (10.0 * nu_max) / dt)))
    u0, w0 = smooth_random_states(system, n_solutions, seed)
    traj = kg_evolve(system, KGState(u0, w0), T, dt, stride)
    rate = system.nu_min * np.sqrt(1.0 - v * v)
    eps_plus, eps_minus, n_plus, n_minus = 0.0, 0.0, 0, 0
    Ip, Im, norms = [], [], []
    for i, t in enumerate(traj.times):
        objs = system.objects(float(t), check_walls=False)
        u, w = traj.u[i], traj.udot[i]
        ap = np.concatenate([pairing(grid, o.alpha_plus, u, w) for o in objs])
        am = np.concatenate([pairing(grid, o.alpha_minus, u, w) for o in objs])
        a0 = np.concatenate([pairing(grid, o.alpha0, u, w) for o in objs])
        q = q_form(system, u, w, float(t), eta_cutoff)
        Ip.append(np.sqrt(np.sum(ap**2, axis=0)))
        Im.append(np.sqrt(np.maximum(0.0, q + np.sum(am**2, axis=0) + np.sum(a0**2, axis=0))))
        norms.append(system.energy_norm(u, w))
    Ip, Im, norms, t = np.array(Ip), np.array(Im), np.array(norms), traj.times
    span = (t[2:] - t[:-2])[:, None]
    dIp, dIm = (Ip[2:] - Ip[:-2]) / span, (Im[2:] - Im[:-2]) / span
    mid = slice(1, -1)
    grow = Ip[mid] >= c4 * Im[mid]
    decay = Ip[mid] <= c3 * Im[mid]
    if grow.any():
        eps_plus = float(np.max(np.maximum(0.0, rate * Ip[mid] - dIp)[grow] / norms[mid][grow]))
        n_plus = int(grow.sum())
    if decay.any():
        eps_minus = float(np.max(np.maximum(0.0, dIm)[decay] / norms[mid][decay]))
        n_minus = int(decay.sum())
    return {"eps_growth": eps_plus, "eps_decay": eps_minus, "checked_growth": n_plus, "checked_decay": n_minus,
            "rate": float(rate), "stride_time": float(t[1] - t[0])}


def kg_dichotomy_verify(system: KGSystem, T: float, epsilon: float = 0.1, unstable_slack: float = 0.2,
                        v: float | None = None, eta: float | None = None, extra: int = 5, seed: int = 0,
                        dt: float | None = None, renorm_every: int = 25, interval_T: float | None = None,
                        c3: float = 1.0, c4: float = 1.0) -> KGDichotomyReport:
    """Evolve a random ``K + extra`` frame with energy-orthonormal QR.

    The ``K`` leading exponents must reach ``nu sqrt(1 - v^2) - unstable_slack``
    and the remaining ones stay at most ``epsilon``, which verifies
    ``codim X_s = K``; the trailing diagonal of the accumulated triangular factor
    bounds the growth of the stable family modulo the growing directions.
    """
    grid = system.grid
    dt = grid.dt if dt is None else dt
    hyps = hypothesis_items(system, T, v, eta)
    if v is None:
        v = max(tr.max_speed for tr in system.tracks)
    K = system.K
    m = K + extra
    u, w = smooth_random_states(system, m, seed)
    u, w, _ = _energy_cholesky_qr(system, u, w)
    n, dt = _step_count(T, dt)
    stepper = _Stepper(system, dt)
    logs = np.zeros(m)
    half_logs, half_time = None, 0.0
    stable_growth = 1.0
    for i in range(n):
        u, w = stepper.step(u, w, i * dt)
        if (i + 1) % renorm_every == 0 or i == n - 1:
            t = (i + 1) * dt
            u, w, R = _energy_cholesky_qr(system, u, w)
            logs += np.log(np.abs(np.diag(R)))
            if m > K:
                stable_growth = max(stable_growth, float(np.exp(np.max(logs[K:]) - epsilon * t)))
            if half_logs is None and t >= 0.5 * T:
                half_logs, half_time = logs.copy(), t
    exps = np.sort((logs - half_logs) / (n * dt - half_time))[::-1]
    threshold = system.nu_min * np.sqrt(1.0 - v * v) - unstable_slack
    detect = 0.5 * system.nu_min * np.sqrt(1.0 - v * v)
    interval = {}
    if interval_T:
        cut = eta if len(system.tracks) > 1 else None
        interval = interval_diagnostics(system, interval_T, v, cut, c3, c4, dt=dt)
    return KGDichotomyReport(
        exps, K, int(np.sum(exps > detect)), float(exps[K - 1]) if K else np.inf, float(threshold),
        float(exps[K]) if m > K else -np.inf, float(epsilon), stable_growth, hyps, interval,
    )
