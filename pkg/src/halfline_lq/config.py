"""Run configuration: validated JSON documents and their materialisation.

Units: the space variable xi and time t are nondimensional (the heat equation
is written with unit diffusivity). ``lambda0`` has units of 1/time, ``mu`` of
exponential profiles 1/length. Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .operators import BoundaryInput, LinOp, admissible_alpha, boundary_input, dirichlet_laplacian
from .riccati import CostSpec
from .stochastic import NoiseConfig
from .weighted_space import Gram, Grid, WeightSpec, build_grid

__all__ = [
    "WeightModel",
    "GridModel",
    "Profile",
    "CostModel",
    "NoiseModel",
    "ProblemConfig",
    "Problem",
    "SemigroupSection",
    "RegularitySection",
    "SimulateSection",
    "IdentitySection",
    "OptimalSection",
    "RunConfig",
    "load_config",
    "config_hash",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class WeightModel(_Strict):
    theta: float = Field(0.8, gt=0.0, lt=1.0, description="weight exponent, rho = xi^(1+theta)")
    kind: Literal["pure_power", "capped"] = "capped"

    def spec(self) -> WeightSpec:
        return WeightSpec(self.theta, self.kind)


class GridModel(_Strict):
    n: int = Field(200, ge=8, description="number of interior nodes")
    xi_max: float = Field(20.0, ge=5.0, allow_inf_nan=False, description="truncation radius (length)")
    clustering: float = Field(2.0, ge=1.0, allow_inf_nan=False, description="power of the graded node map")


class ZeroProfile(_Strict):
    profile: Literal["zero"] = "zero"

    def evaluate(self, xi):
        return np.zeros_like(xi)


class ConstantProfile(_Strict):
    profile: Literal["constant"] = "constant"
    value: float = Field(1.0, allow_inf_nan=False)

    def evaluate(self, xi):
        return np.full_like(xi, self.value)


class GaussianBump(_Strict):
    profile: Literal["gaussian_bump"] = "gaussian_bump"
    center: float = Field(2.0, ge=0.0, allow_inf_nan=False, description="length")
    width: float = Field(0.5, gt=0.0, allow_inf_nan=False, description="standard deviation, length")
    amplitude: float = Field(1.0, allow_inf_nan=False)

    def evaluate(self, xi):
        return self.amplitude * np.exp(-0.5 * ((xi - self.center) / self.width) ** 2)


class Exponential(_Strict):
    profile: Literal["exponential"] = "exponential"
    mu: float = Field(1.0, gt=0.0, allow_inf_nan=False, description="decay rate, 1/length")
    amplitude: float = Field(1.0, allow_inf_nan=False)

    def evaluate(self, xi):
        return self.amplitude * np.exp(-self.mu * xi)


class NodalValues(_Strict):
    profile: Literal["nodal"] = "nodal"
    values: list[float]

    def evaluate(self, xi):
        v = np.asarray(self.values, dtype=float)
        if v.shape != np.shape(xi):
            raise ConfigError(f"x0.values: expected {np.size(xi)} nodal values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("x0.values: non-finite entry")
        return v


Profile = Annotated[
    Union[ZeroProfile, ConstantProfile, GaussianBump, Exponential, NodalValues],
    Field(discriminator="profile"),
]


class CostModel(_Strict):
    """C and G as multiplication operators; ``identity``/``zero`` are shorthands."""

    C: Union[Literal["identity", "zero"], Profile] = "identity"
    G: Union[Literal["identity", "zero"], Profile] = "zero"

    @staticmethod
    def _values(spec, xi):
        if spec == "identity":
            return np.ones_like(xi)
        if spec == "zero":
            return np.zeros_like(xi)
        return spec.evaluate(xi)

    def spec(self, grid: Grid) -> CostSpec:
        c = self._values(self.C, grid.nodes)
        g = self._values(self.G, grid.nodes)
        if np.any(g < 0):
            raise ConfigError("cost.G must be a nonnegative multiplier")
        return CostSpec.multiplication(c, g)


class NoiseModel(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    n_paths: int = Field(10_000, ge=1)
    n_steps: int = Field(200, ge=1, description="time steps on [tau, T]")
    noise: bool = True


class ProblemConfig(_Strict):
    weight: WeightModel = WeightModel()
    grid: GridModel = GridModel()
    lambda0: float = Field(1.0, gt=0.0, allow_inf_nan=False, description="shift, 1/time")
    alpha: float | None = Field(None, description="fractional exponent; default 1/2 + theta/8")
    tau: float = Field(0.0, ge=0.0, allow_inf_nan=False, description="initial time")
    T: float = Field(1.0, allow_inf_nan=False, description="horizon")
    riccati_steps: int = Field(400, ge=50, description="time steps of the Riccati solvers")
    cost: CostModel = CostModel()
    trace_coeff: float = 1.0
    noise: NoiseModel = NoiseModel()
    x0: Profile = GaussianBump()

    @model_validator(mode="after")
    def _check(self):
        lo, hi = admissible_alpha(self.weight.theta)
        if self.alpha is not None and not lo < self.alpha < hi:
            raise ValueError(f"alpha must lie in ({lo:g}, {hi:g}) for theta={self.weight.theta:g}")
        if not self.tau < self.T:
            raise ValueError("tau must be smaller than T")
        if self.trace_coeff not in (0.5, 1.0):
            raise ValueError("trace_coeff must be 0.5 or 1")
        return self

    @property
    def alpha_value(self) -> float:
        return 0.5 + self.weight.theta / 8 if self.alpha is None else self.alpha

    def noise_config(self, **overrides) -> NoiseConfig:
        kw = dict(
            seed=self.noise.seed,
            n_paths=self.noise.n_paths,
            n_steps=self.noise.n_steps,
            tau=self.tau,
            horizon_T=self.T,
            noise=self.noise.noise,
        )
        kw.update(overrides)
        return NoiseConfig(**kw)

    def build(self) -> "Problem":
        grid = build_grid(self.weight.spec(), self.grid.n, self.grid.xi_max, self.grid.clustering)
        A = dirichlet_laplacian(grid)
        bi = boundary_input(A, grid, self.lambda0, self.alpha_value)
        return Problem(self, grid, A, bi, self.cost.spec(grid), self.x0.evaluate(grid.nodes), self.noise_config())


@dataclass(frozen=True, eq=False)
class Problem:
    """A configuration materialised on its grid."""

    config: ProblemConfig
    grid: Grid
    A: LinOp
    bi: BoundaryInput
    cost: CostSpec
    x0: np.ndarray
    noise: NoiseConfig

    @property
    def gram(self) -> Gram:
        return self.A.gram


class SemigroupSection(_Strict):
    n: int = Field(400, ge=8)
    times: list[float] = [0.01, 0.1, 1.0]
    bump_support: tuple[float, float] = (1.0, 3.0)
    levels: list[int] = [200, 400, 800]
    t_min: float = Field(1e-3, gt=0.0)
    sweep_points: int = Field(13, ge=2)
    tolerance: float = Field(1e-2, gt=0.0)


class RegularitySection(_Strict):
    n0: int = Field(100, ge=8, description="coarsest grid; levels double it")
    levels: int = Field(3, ge=2)
    sigma: float = Field(0.4, gt=0.0, lt=1.0)
    t_cut: float = Field(1.0, gt=0.0, le=1.0)
    alpha: float | None = Field(None, ge=0.0, lt=1.0, description="weighted exponent; default problem alpha")
    unweighted_alpha: float = Field(0.4, ge=0.0, lt=1.0)


class SimulateSection(_Strict):
    control: Literal["zero", "constant", "sinusoid", "feedback"] = "zero"
    export_paths: int = Field(16, ge=1, description="paths written to trajectories.csv")


class IdentitySection(_Strict):
    controls: list[Literal["zero", "constant", "sinusoid"]] = ["zero", "constant", "sinusoid"]
    constant: float = 1.0
    sin_amplitude: float = 1.0
    sin_frequency: float = Field(1.0, description="cycles per unit time")


class OptimalSection(_Strict):
    n_perturbations: int = Field(20, ge=1)
    perturbation_paths: int = Field(1000, ge=2)
    perturbation_seed: int = Field(0, ge=0)
    modes: int = Field(4, ge=1)
    amplitude: float = Field(0.5, ge=0.0)


class RunConfig(_Strict):
    problem: ProblemConfig = ProblemConfig()
    semigroup: SemigroupSection = SemigroupSection()
    regularity: RegularitySection = RegularitySection()
    simulate: SimulateSection = SimulateSection()
    identity: IdentitySection = IdentitySection()
    optimal: OptimalSection = OptimalSection()
    emit: list[Literal["csv", "summary"]] = ["csv", "summary"]

    def with_seed(self, seed: int) -> "RunConfig":
        data = self.model_dump()
        data["problem"]["noise"]["seed"] = seed
        return load_config(data)


def _format_errors(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def load_config(source: str | Path | dict | None = None) -> RunConfig:
    """Parse and validate a config from a path, a JSON mapping or nothing (defaults)."""
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = source
    else:
        try:
            data = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def config_hash(cfg: BaseModel) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
