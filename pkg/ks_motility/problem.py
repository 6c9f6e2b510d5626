"""Problem definition: motility, reaction term, initial data and the full problem."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from ks_motility.config import ProblemConfig
from ks_motility.grid import Field, Grid, GridMismatchError, build_grid, integrate
from ks_motility.models import (
    InitialDataKind,
    InitialDataSpec,
    MotilityBounds,
    MotilityFamily,
    MotilitySpec,
)

BOUND_SAMPLES = 4096
BOUND_MARGIN = 0.01


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Grid, motility, initial data and regularization parameter.

    epsilon = 0 is the limit system; epsilon > 0 caps the consumption term.
    """

    grid: Grid
    phi: MotilitySpec
    u0: Field
    v0: Field
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.u0.grid != self.grid or self.v0.grid != self.grid:
            raise GridMismatchError("initial data must live on the problem grid")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.u0.min() < 0:
            raise ValueError("u0 must be nonnegative")
        if integrate(self.grid, self.u0) <= 0:
            raise ValueError("u0 must not vanish identically")
        if self.v0.min() < 0:
            raise ValueError("v0 must be nonnegative")

    @property
    def mean_u0(self) -> float:
        """Spatial mean of u0, the large-time limit of u."""
        return integrate(self.grid, self.u0) / self.grid.volume


def make_motility(family: MotilityFamily | str, parameters: list[float]) -> MotilitySpec:
    """Build a motility function from a family name and its parameters.

    Raises:
        ValueError: If the parameters are malformed or phi is not positive on [0, inf)
    """
    return MotilitySpec(family=MotilityFamily(family), parameters=list(parameters))


def certify_bounds(phi: MotilitySpec, M: float) -> MotilityBounds:
    """Bound phi and |phi'| on [0, M] by dense sampling with a 1% safety margin.

    Endpoints and analytic critical points are always among the samples, so the
    certificate never shrinks when M grows.
    """
    if M < 0:
        raise ValueError(f"M must be >= 0, got {M}")
    xi = np.concatenate([np.linspace(0.0, M, BOUND_SAMPLES), phi.critical_points(M)])
    values = phi.phi(xi)
    slopes = np.abs(phi.dphi(xi))
    return MotilityBounds(
        c1=float(values.min()) * (1.0 - BOUND_MARGIN),
        c2=float(values.max()) * (1.0 + BOUND_MARGIN),
        c3=float(slopes.max()) * (1.0 + BOUND_MARGIN),
        M=float(M),
    )


def _negativity_tolerance(values: np.ndarray) -> float:
    return 1e-12 * max(1.0, float(np.max(np.abs(values))))


def consumption_rate(u: np.ndarray, epsilon: float) -> np.ndarray:
    """Cellwise coefficient u / (1 + epsilon u) multiplying v in the consumption term."""
    return u / (1.0 + epsilon * u)


def regularized_consumption(u: Field, v: Field, epsilon: float) -> Field:
    """Cellwise u v / (1 + epsilon u); exactly u v when epsilon = 0.

    Raises:
        GridMismatchError: If u and v live on different grids
        ValueError: On negative epsilon or negative input values
    """
    if u.grid != v.grid:
        raise GridMismatchError("u and v live on different grids")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    for name, f in (("u", u), ("v", v)):
        if f.min() < -_negativity_tolerance(f.values):
            raise ValueError(f"negative input values in {name}: min = {f.min():.3e}")
    return Field(u.grid, consumption_rate(u.values, epsilon) * v.values)


def _gaussian(grid: Grid, center: list[float], width: float, amplitude: float) -> np.ndarray:
    if len(center) != grid.dim:
        raise ValueError(f"gaussian center needs {grid.dim} coordinates, got {len(center)}")
    r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
    return amplitude * np.exp(-r2 / (2.0 * width * width))


def _random_smooth(grid: Grid, seed: int, modes: int) -> np.ndarray:
    """Truncated cosine series with decaying random coefficients."""
    rng = np.random.default_rng(seed)
    k = np.arange(modes)
    k2 = sum(np.meshgrid(*([k**2] * grid.dim), indexing="ij"))
    coeffs = rng.standard_normal((modes,) * grid.dim) / (1.0 + k2)
    values = coeffs
    for axis in range(grid.dim):
        basis = np.cos(np.pi * np.outer(grid.centers(axis), k) / grid.extents[axis])
        # contract the leading mode axis, appending the cell axis at the end
        values = np.tensordot(values, basis, axes=([0], [1]))
    return values


def make_initial_data(
    grid: Grid, kind: InitialDataKind | str, parameters: Optional[dict[str, Any]] = None
) -> Field:
    """Generate nonnegative initial data.

    Args:
        grid: Grid the data lives on
        kind: constant, gaussian, bumps or random_smooth
        parameters: Kind-specific parameters (see ``InitialDataSpec``)

    Returns:
        A nonnegative Field

    Raises:
        ValueError: If the parameters are invalid or would produce negative values
    """
    spec = InitialDataSpec(kind=InitialDataKind(kind), **(parameters or {}))
    center = spec.center or [length / 2.0 for length in grid.extents]

    if spec.kind == InitialDataKind.CONSTANT:
        if spec.value is None:
            raise ValueError("constant initial data needs a value")
        values = np.full(grid.shape, float(spec.value))
    elif spec.kind == InitialDataKind.GAUSSIAN:
        if spec.width is None:
            raise ValueError("gaussian initial data needs a width")
        values = spec.background + _gaussian(grid, center, spec.width, spec.amplitude)
    elif spec.kind == InitialDataKind.BUMPS:
        if not spec.bumps:
            raise ValueError("bumps initial data needs at least one bump")
        values = np.full(grid.shape, spec.background)
        for bump in spec.bumps:
            values = values + _gaussian(grid, bump.center, bump.width, bump.amplitude)
    else:
        raw = spec.amplitude * _random_smooth(grid, spec.seed, spec.modes)
        values = raw - raw.min() + spec.floor

    if np.any(values < 0):
        raise ValueError(f"{spec.kind.value} initial data has negative values")

    field = Field(grid, values)
    if spec.mass is not None:
        total = integrate(grid, field)
        if total <= 0:
            raise ValueError("cannot rescale initial data with zero integral to a mass")
        field = Field(grid, values * (spec.mass / total))
    return field


def build_problem(config: ProblemConfig) -> ProblemSpec:
    """Build a ProblemSpec from its declarative configuration.

    Raises:
        ValueError: If any part of the configuration is invalid
    """
    grid = build_grid(config.grid.dim, config.grid.extents, config.grid.cells)
    phi = make_motility(config.motility.family, config.motility.parameters)
    u0 = make_initial_data(grid, config.u0.kind, config.u0.model_dump(exclude={"kind"}))
    v0 = make_initial_data(grid, config.v0.kind, config.v0.model_dump(exclude={"kind"}))
    return ProblemSpec(grid=grid, phi=phi, u0=u0, v0=v0, epsilon=config.epsilon)
