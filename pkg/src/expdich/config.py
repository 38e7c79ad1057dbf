"""Experiment configuration files (YAML or JSON) validated with pydantic."""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from .grid import GridSpec
from .potentials import PotentialShape, PotentialTrack


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ShapeConfig(_Strict):
    name: str
    params: dict = Field(default_factory=dict)

    def build(self, base_dir: Path | None = None) -> PotentialShape:
        params = dict(self.params)
        if self.name == "table" and base_dir is not None and "path" in params:
            p = Path(params["path"])
            params["path"] = str(p if p.is_absolute() else base_dir / p)
        return PotentialShape(self.name, params)


class TrackConfig(_Strict):
    shape: ShapeConfig
    x0: float = 0.0
    v0: float = 0.0
    amp: float = 0.0
    omega: float = 0.0

    def build(self, base_dir: Path | None = None) -> PotentialTrack:
        return PotentialTrack(self.shape.build(base_dir), self.x0, self.v0, self.amp, self.omega)


class GridConfig(_Strict):
    x_lo: float
    x_hi: float
    n_points: Optional[int] = None  # interior nodes
    dx: Optional[float] = None
    dt: float = 1e-3
    boundary: Literal["dirichlet", "truncated-line-dirichlet"] = "dirichlet"

    @model_validator(mode="after")
    def _one_resolution(self):
        if (self.n_points is None) == (self.dx is None):
            raise ValueError("give exactly one of n_points and dx")
        return self

    def build(self) -> GridSpec:
        if self.dx is not None:
            return GridSpec.from_spacing(self.x_lo, self.x_hi, self.dx, self.dt, self.boundary)
        return GridSpec(self.x_lo, self.x_hi, self.n_points, self.dt, self.boundary)


class ConeConfig(_Strict):
    c1: Optional[float] = None
    c2: Optional[float] = None
    c3: float = 1.0
    c4: float
    samples: int = 0  # random vectors per index for the step-inequality check (0 = skip)


class OutputConfig(_Strict):
    dir: Optional[str] = None
    name: Optional[str] = None


class _Base(_Strict):
    seed: int = 0
    output: OutputConfig = Field(default_factory=OutputConfig)


# --- kinds ---------------------------------------------------------------------------


class MatrixSystem(_Strict):
    example: Literal["intro", "constant", "rotating", "conjugated", "custom"] = "intro"
    matrices: Optional[list[list[list[float]]]] = None  # custom: repeated periodically
    diag: list[float] = Field(default_factory=lambda: [0.5, 3.0])
    eta: float = 0.0
    direction: Literal["forward", "backward"] = "forward"

    @model_validator(mode="after")
    def _custom_needs_matrices(self):
        if self.example == "custom" and not self.matrices:
            raise ValueError("example 'custom' needs 'matrices'")
        return self


class MatrixSystemConfig(_Base):
    kind: Literal["matrix-system"]
    system: MatrixSystem = Field(default_factory=MatrixSystem)
    window: tuple[int, int] = (0, 40)
    rates: tuple[float, float]
    K: int = 1  # unstable dimension (forward) or stable dimension (backward)
    cones: Optional[ConeConfig] = None


class AvalancheConfig(_Base):
    kind: Literal["avalanche"]
    generator: Literal["rotating", "conjugated", "constant"] = "rotating"
    eta: float = 0.1
    diag: list[float] = Field(default_factory=lambda: [0.5, 3.0])
    a: float = 0.5
    b: float = 3.0
    window: tuple[int, int] = (0, 50)
    epsilon: Optional[float] = None
    c3: Optional[float] = None


class HeatPotential(_Strict):
    """``value + amp sin(omega t) cos(wavenumber x)``."""

    value: float = -2.5
    amp: float = 0.05
    omega: float = 0.5
    wavenumber: float = 2.0


class BackwardHeatConfig(_Base):
    kind: Literal["backward-heat"]
    grid: GridConfig
    potential: HeatPotential = Field(default_factory=HeatPotential)
    mu: float = 1.5
    epsilon: float = 0.15
    delta_max: float = 0.05
    T: Optional[float] = None
    uniqueness_tol: float = 1e-6


class HeatMovingConfig(_Base):
    kind: Literal["heat-moving"]
    grid: GridConfig
    tracks: list[TrackConfig]
    T: float = 30.0
    eta: Optional[float] = None
    epsilon: float = 0.1
    extra: int = 5
    rate_tol: float = 0.05  # single well: relative tolerance of the growth rate


class KGConvergence(_Strict):
    betas: list[float] = Field(default_factory=lambda: [0.0, 0.5])
    which: list[Literal["plus", "minus", "zero"]] = Field(default_factory=lambda: ["plus", "minus", "zero"])
    dxs: list[float] = Field(default_factory=lambda: [0.1, 0.05, 0.025])
    T: float = 1.0
    half_width: float = 20.0
    min_order: float = 1.9


class KGConservation(_Strict):
    beta: float = 0.5
    T: float = 2.0
    dxs: list[float] = Field(default_factory=lambda: [0.05, 0.025])
    half_width: float = 20.0
    tol: float = 1e-3


class KleinGordonConfig(_Base):
    kind: Literal["klein-gordon"]
    grid: Optional[GridConfig] = None
    tracks: list[TrackConfig] = Field(default_factory=list)
    T: float = 20.0
    v: Optional[float] = None
    eta: Optional[float] = None
    epsilon: float = 0.1
    unstable_slack: float = 0.2
    extra: int = 5
    interval_T: Optional[float] = None
    convergence: Optional[KGConvergence] = None
    conservation: Optional[KGConservation] = None

    @model_validator(mode="after")
    def _something_to_do(self):
        if self.tracks and self.grid is None:
            raise ValueError("tracks need a grid")
        if not self.tracks and self.convergence is None and self.conservation is None:
            raise ValueError("nothing to run: give tracks, convergence or conservation")
        return self


class SweepConfig(_Strict):
    param: str  # dotted path, e.g. "eta" or "grid.dx"
    values: list


ExperimentConfig = Annotated[
    Union[MatrixSystemConfig, AvalancheConfig, BackwardHeatConfig, HeatMovingConfig, KleinGordonConfig],
    Field(discriminator="kind"),
]
_ADAPTER = TypeAdapter(ExperimentConfig)


def parse_config(data: dict):
    return _ADAPTER.validate_python(data)


def read_config_data(path) -> dict:
    path = Path(path)
    data = yaml.safe_load(path.read_text())
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return data


def load_config(path):
    """Parse and validate; the sweep block (if any) is split off and returned separately."""
    data = read_config_data(path)
    sweep = data.pop("sweep", None)
    cfg = parse_config(data)
    return cfg, (SweepConfig.model_validate(sweep) if sweep is not None else None), data


def with_value(data: dict, dotted: str, value) -> dict:
    """Copy of ``data`` with ``dotted`` (``a.b.0.c``) set to ``value``."""
    out = copy.deepcopy(data)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node[int(k)] if isinstance(node, list) else node.setdefault(k, {})
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value
    return out
