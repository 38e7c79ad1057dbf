"""Potential shapes by name and moving-potential trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ContractError, DomainError, SeparationError


@dataclass(frozen=True)
class PotentialShape:
    """A stationary profile ``x -> V(x)`` built from the registry."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SHAPES:
            raise ContractError(f"unknown potential shape {self.name!r}; known: {sorted(SHAPES)}")
        SHAPES[self.name][1](self.params)

    def __call__(self, x) -> np.ndarray:
        return SHAPES[self.name][0](np.asarray(x, dtype=float), self.params)

    @property
    def decay_length(self) -> float:
        """Length scale on which the profile (and its bound states) fall off."""
        if self.name in ("sech2", "gaussian"):
            return float(self.params.get("width", 1.0))
        if self.name == "table":
            xs = _table(self.params)[0]
            return float(xs[-1] - xs[0]) / 20.0
        return 0.0


def _sech2(x, p):
    return p.get("amplitude", -2.0) / np.cosh(x / p.get("width", 1.0)) ** 2


def _gaussian(x, p):
    return p.get("amplitude", -1.0) * np.exp(-((x / p.get("width", 1.0)) ** 2))


def _constant(x, p):
    return np.full(np.shape(x), float(p.get("value", 0.0)))


_TABLE_CACHE: dict = {}


def _table(p):
    path = p["path"]
    if path not in _TABLE_CACHE:
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] != 2 or data.shape[0] < 4:
            raise ContractError(f"table {path} needs at least 4 rows of (x, V)")
        order = np.argsort(data[:, 0])
        _TABLE_CACHE[path] = (data[order, 0], CubicSpline(data[order, 0], data[order, 1]))
    return _TABLE_CACHE[path]


def _table_eval(x, p):
    xs, spline = _table(p)
    out = np.zeros_like(x)
    inside = (x >= xs[0]) & (x <= xs[-1])
    out[inside] = spline(x[inside])
    return out


def _needs_width(p):
    if p.get("width", 1.0) <= 0:
        raise ContractError("width must be positive")


def _needs_path(p):
    if "path" not in p:
        raise ContractError("table shape needs a 'path' parameter")


SHAPES = {
    "sech2": (_sech2, _needs_width),
    "gaussian": (_gaussian, _needs_width),
    "constant": (_constant, lambda p: None),
    "table": (_table_eval, _needs_path),
}


def poschl_teller(N: int, width: float = 1.0) -> PotentialShape:
    """``-N (N + 1) sech^2(x)``."""
    return PotentialShape("sech2", {"amplitude": -float(N * (N + 1)), "width": width})


@dataclass(frozen=True)
class PotentialTrack:
    """A shape riding on ``x(t) = x0 + v0 t + amp (1 - cos(omega t)) / omega``.

    The velocity is ``v0 + amp sin(omega t)``, so ``|x'| <= |v0| + |amp|`` and
    ``|x''| <= |amp| omega``.
    """

    shape: PotentialShape
    x0: float = 0.0
    v0: float = 0.0
    amp: float = 0.0
    omega: float = 0.0

    def position(self, t):
        t = np.asarray(t, dtype=float)
        drift = self.x0 + self.v0 * t
        if self.amp and self.omega:
            drift = drift + self.amp * (1.0 - np.cos(self.omega * t)) / self.omega
        return drift

    def velocity(self, t):
        t = np.asarray(t, dtype=float)
        if self.amp and self.omega:
            return self.v0 + self.amp * np.sin(self.omega * t)
        return self.v0 + 0.0 * t

    def acceleration(self, t):
        t = np.asarray(t, dtype=float)
        if self.amp and self.omega:
            return self.amp * self.omega * np.cos(self.omega * t)
        return 0.0 * t

    @property
    def max_speed(self) -> float:
        return abs(self.v0) + abs(self.amp)

    @property
    def max_acceleration(self) -> float:
        return abs(self.amp * self.omega)

    def sample(self, x, t) -> np.ndarray:
        return self.shape(np.asarray(x) - self.position(t))


def total_potential(tracks, x, t) -> np.ndarray:
    out = np.zeros_like(np.asarray(x, dtype=float))
    for tr in tracks:
        out += tr.sample(x, t)
    return out


def min_separation(tracks, times) -> float:
    if len(tracks) < 2:
        return np.inf
    pos = np.array([tr.position(times) for tr in tracks])
    best = np.inf
    for i in range(len(tracks)):
        for j in range(i + 1, len(tracks)):
            best = min(best, float(np.min(np.abs(pos[i] - pos[j]))))
    return best


def check_tracks(tracks, x_lo: float, x_hi: float, t_end: float, max_speed: float | None = None,
                 max_accel: float | None = None, min_sep: float | None = None,
                 wall_margin: float | None = None, n_times: int = 401) -> dict:
    """Validate a set of tracks over ``[0, t_end]``.

    A track closer to a wall than ``wall_margin`` (default: 10 decay lengths)
    raises :class:`DomainError`; tracks closer than ``min_sep`` raise
    :class:`SeparationError`. Speed and acceleration limits are reported as
    booleans so callers can list them as hypothesis results.
    """
    times = np.linspace(0.0, t_end, n_times)
    for i, tr in enumerate(tracks):
        margin = wall_margin if wall_margin is not None else 10.0 * tr.shape.decay_length
        pos = tr.position(times)
        gap = min(float(np.min(pos - x_lo)), float(np.min(x_hi - pos)))
        if gap < margin:
            raise DomainError(f"track {i} comes within {gap:.3g} of a wall (needs {margin:.3g})")
    sep = min_separation(tracks, times)
    if min_sep is not None and sep < min_sep:
        raise SeparationError(f"tracks come within {sep:.6g} of each other, below {min_sep:.6g}")
    speed = max((float(np.max(np.abs(tr.velocity(times)))) for tr in tracks), default=0.0)
    accel = max((float(np.max(np.abs(tr.acceleration(times)))) for tr in tracks), default=0.0)
    return {
        "max_speed": speed,
        "max_acceleration": accel,
        "min_separation": sep,
        "speed_ok": max_speed is None or speed <= max_speed * (1 + 1e-12),
        "acceleration_ok": max_accel is None or accel <= max_accel * (1 + 1e-12),
    }
