"""Functionals of the a priori estimates, window integrals, weak residuals and decay metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import xlogy

from ks_motility.grid import (
    Field,
    Grid,
    apply_A_inv_sqrt,
    grad_inner,
    gradient_sq_array,
    integrate,
    laplacian_array,
)
from ks_motility.models import DiagnosticsRecord, MotilityBounds, MotilitySpec, WeightedParams
from ks_motility.problem import consumption_rate
from ks_motility.stepper import SimState, Trajectory

DEFAULT_WINDOW = 1.0


@dataclass
class DiagnosticsConfig:
    """What ``record`` computes."""

    p_values: list[float] = field(default_factory=lambda: [2.0, 3.0])
    weighted: Optional[WeightedParams] = None
    # spatial mean of u0; defaults to the current mass over |Omega|
    reference_mean: Optional[float] = None
    # cells with u below fisher_floor * mean(u) are left out of the Fisher integral
    fisher_floor: float = 1e-12


def record(
    state: SimState,
    config: DiagnosticsConfig,
    previous_v: Optional[Field] = None,
    dt: Optional[float] = None,
) -> DiagnosticsRecord:
    """Evaluate every tracked functional for one state.

    v_t_sq needs the previous step's v and the step size; without them it is absent.
    The weighted functional is absent (with a status flag) unless enabled and
    max(v) < delta.
    """
    grid = state.grid
    w = grid.cell_volume
    u = state.u.values
    v = state.v.values

    mass_u = float(np.sum(u)) * w
    sup_v = float(np.max(np.abs(v)))
    mean_u = config.reference_mean if config.reference_mean is not None else mass_u / grid.volume

    dual = apply_A_inv_sqrt(grid, state.u).values
    grad_v2 = gradient_sq_array(v, grid.spacing)
    grad_u2 = gradient_sq_array(u, grid.spacing)
    lap_v = laplacian_array(v, grid.spacing)

    v_t_sq = None
    if previous_v is not None and dt is not None:
        v_t_sq = float(np.sum(((v - previous_v.values) / dt) ** 2)) * w

    fisher_mask = u >= config.fisher_floor * (mass_u / grid.volume)
    fisher_u = float(np.sum(grad_u2[fisher_mask] / u[fisher_mask])) * w

    weighted = None
    weighted_status = "disabled"
    if config.weighted is not None:
        if sup_v < config.weighted.delta:
            weighted = weighted_functional(state, config.weighted)
            weighted_status = "ok"
        else:
            weighted_status = "v_not_below_delta"

    return DiagnosticsRecord(
        t=state.t,
        mass_u=mass_u,
        sup_v=sup_v,
        dual_norm_sq=float(np.sum(dual**2)) * w,
        l2_u_sq=float(np.sum(u**2)) * w,
        grad_v_sq=float(np.sum(grad_v2)) * w,
        lap_v_sq=float(np.sum(lap_v**2)) * w,
        grad_v_4=float(np.sum(grad_v2**2)) * w,
        v_t_sq=v_t_sq,
        p_values=list(config.p_values),
        lp_u=[float(np.sum(np.abs(u) ** p)) * w for p in config.p_values],
        entropy_u=float(np.sum(np.where(u > 0, xlogy(u, u), 0.0))) * w,
        fisher_u=fisher_u,
        grad_u_43=float(np.sum(grad_u2 ** (2.0 / 3.0))) * w,
        weighted=weighted,
        weighted_status=weighted_status,
        stab_u=float(np.max(np.abs(u - mean_u))),
        stab_v=sup_v,
        min_u=float(u.min()),
        min_v=float(v.min()),
    )


class DiagnosticsRecorder:
    """Observer that records diagnostics every ``cadence`` steps.

    v_t is the backward difference to the last state the recorder saw, divided by the
    elapsed step count times dt. Seeing every step gives the one-step difference.
    """

    def __init__(self, config: DiagnosticsConfig, dt: float, cadence: int = 1) -> None:
        self.config = config
        self.dt = dt
        self.cadence = cadence
        self.records: list[DiagnosticsRecord] = []
        self._previous_v: Optional[Field] = None
        self._previous_step = 0

    def __call__(self, state: SimState, step_index: int) -> Optional[DiagnosticsRecord]:
        result = None
        if step_index % self.cadence == 0:
            elapsed = None
            if self._previous_v is not None:
                elapsed = (step_index - self._previous_step) * self.dt
            result = record(state, self.config, previous_v=self._previous_v, dt=elapsed)
            self.records.append(result)
        self._previous_v = state.v
        self._previous_step = step_index
        return result


@dataclass
class WindowSeries:
    """Time-ordered samples of a spatial integral, integrated over sliding windows."""

    samples: list[tuple[float, float]]
    window: float = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if self.window <= 0:
            raise ValueError(f"window must be positive, got {self.window}")
        times = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample times must be strictly increasing")

    @classmethod
    def from_arrays(
        cls, times: Sequence[float], values: Sequence[float], window: float = DEFAULT_WINDOW
    ) -> "WindowSeries":
        return cls(list(zip(map(float, times), map(float, values))), window)


def sliding_window_series(series: WindowSeries) -> np.ndarray:
    """Trapezoidal integral over [(t - window)_+, t] at every sample time t.

    Window starts falling between samples are integrated exactly for the piecewise
    linear interpolant.
    """
    if len(series.samples) < 2:
        raise ValueError("sliding window integrals need at least 2 samples")
    t = np.array([s[0] for s in series.samples])
    f = np.array([s[1] for s in series.samples])
    cumulative = cumulative_trapezoid(f, t, initial=0.0)

    start = np.maximum(t - series.window, t[0])
    idx = np.clip(np.searchsorted(t, start, side="right") - 1, 0, len(t) - 2)
    offset = start - t[idx]
    slope = (f[idx + 1] - f[idx]) / (t[idx + 1] - t[idx])
    f_start = f[idx] + slope * offset
    cumulative_start = cumulative[idx] + offset * (f[idx] + f_start) / 2.0
    return cumulative - cumulative_start


def sliding_window_sup(series: WindowSeries) -> float:
    """Supremum over sample times of the sliding-window integral."""
    return float(np.max(sliding_window_series(series)))


def choose_weighted_params(p: float, bounds: MotilityBounds) -> WeightedParams:
    """Largest admissible kappa and 99% of the largest admissible delta for exponent p.

    kappa = (p-1) c1 / (p (c2+1)^2) and
    delta = 0.99 min(1 / (2 p c3), kappa / ((p-1) c3 + kappa)), with c3 = 0 branches
    read as +inf.
    """
    if p <= 1:
        raise ValueError(f"p must be > 1, got {p}")
    kappa = (p - 1.0) * bounds.c1 / (p * (bounds.c2 + 1.0) ** 2)
    first = math.inf if bounds.c3 == 0 else 1.0 / (2.0 * p * bounds.c3)
    second = kappa / ((p - 1.0) * bounds.c3 + kappa)
    return WeightedParams(p=p, kappa=kappa, delta=0.99 * min(first, second))


def weighted_functional(state: SimState, wp: WeightedParams) -> float:
    """Integral of u^p (delta - v)^(-kappa).

    Since v >= 0 the weight is at least delta^(-kappa), so the result dominates
    delta^(-kappa) times the integral of u^p.

    Raises:
        ValueError: If max(v) >= delta
    """
    v = state.v.values
    if float(v.max()) >= wp.delta:
        raise ValueError(f"weighted functional needs max(v) < delta = {wp.delta:.6g}, got {v.max():.6g}")
    u = state.u.values
    return float(np.sum(np.abs(u) ** wp.p * (wp.delta - v) ** (-wp.kappa))) * state.grid.cell_volume


class TestFunctionSpec(BaseModel):
    """Test function amplitude * prod_i cos(pi m_i x_i / L_i) * psi(t).

    psi is the smooth bump exp(1 - 1/(1 - (t/support)^2)) on [0, support), zero after.
    The cosine factors have vanishing normal derivative on the box boundary.
    """

    __test__ = False

    amplitude: float = 1.0
    modes: list[int] = PydanticField(default_factory=list)
    support: float = PydanticField(default=1.0, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_modes(self) -> "TestFunctionSpec":
        if any(m < 0 for m in self.modes):
            raise ValueError("test function modes must be >= 0")
        return self

    def spatial(self, grid: Grid) -> Field:
        modes = self.modes or [0] * grid.dim
        if len(modes) != grid.dim:
            raise ValueError(f"test function needs {grid.dim} modes, got {len(modes)}")
        values = np.full(grid.shape, self.amplitude)
        for axis, (m, x) in enumerate(zip(modes, grid.mesh())):
            values = values * np.cos(np.pi * m * x / grid.extents[axis])
        return Field(grid, values)

    def psi(self, t: float) -> float:
        s = t / self.support
        if s >= 1.0 or s < 0.0:
            return 0.0
        return math.exp(1.0 - 1.0 / (1.0 - s * s))

    def dpsi(self, t: float) -> float:
        s = t / self.support
        if s >= 1.0 or s < 0.0:
            return 0.0
        q = 1.0 - s * s
        return self.psi(t) * (-2.0 * s / self.support) / (q * q)


def weak_residual(
    trajectory: Trajectory, test_function: TestFunctionSpec, phi: MotilitySpec
) -> tuple[float, float]:
    """Residuals of the weak formulations for u and v on a stored trajectory.

    For u:  -int int u phi_t - int u0 phi(0)  =  -int int grad(u phi(v)) . grad phi
    For v:   int int v phi_t + int v0 phi(0)  =   int int grad v . grad phi + int int c(u) v phi
    with c(u) = u / (1 + eps u). The initial datum in the v identity is v0 (the published
    statement prints it as v_9). Time integrals use the trapezoid rule over the stored
    states, space integrals the midpoint rule, gradients are paired on cell faces.

    Raises:
        ValueError: If fewer than two states are stored or the test function support
            extends past the last stored time
    """
    states = trajectory.states
    if len(states) < 2:
        raise ValueError("weak residual needs a trajectory with at least 2 stored states")
    times = np.array([s.t for s in states])
    if test_function.support > times[-1] + 1e-12:
        raise ValueError(
            f"test function support {test_function.support} exceeds trajectory horizon {times[-1]}"
        )

    grid = states[0].grid
    chi = test_function.spatial(grid)
    chi_values = chi.values
    w = grid.cell_volume

    u_phi_t = np.zeros(len(states))
    u_flux = np.zeros(len(states))
    v_phi_t = np.zeros(len(states))
    v_rhs = np.zeros(len(states))
    for k, state in enumerate(states):
        psi = test_function.psi(state.t)
        dpsi = test_function.dpsi(state.t)
        u = state.u.values
        v = state.v.values
        flux_potential = Field(grid, u * phi.phi(v))
        u_phi_t[k] = float(np.sum(u * chi_values)) * w * dpsi
        u_flux[k] = grad_inner(grid, flux_potential, chi) * psi
        v_phi_t[k] = float(np.sum(v * chi_values)) * w * dpsi
        consumption = consumption_rate(u, state.epsilon) * v
        v_rhs[k] = (
            grad_inner(grid, state.v, chi) * psi
            + float(np.sum(consumption * chi_values)) * w * psi
        )

    psi0 = test_function.psi(times[0])
    u0_term = integrate(grid, Field(grid, states[0].u.values * chi_values)) * psi0
    v0_term = integrate(grid, Field(grid, states[0].v.values * chi_values)) * psi0

    lhs_u = -trapezoid(u_phi_t, times) - u0_term
    rhs_u = -trapezoid(u_flux, times)
    lhs_v = trapezoid(v_phi_t, times) + v0_term
    rhs_v = trapezoid(v_rhs, times)
    return abs(lhs_u - rhs_u), abs(lhs_v - rhs_v)


class DecayTime(BaseModel):
    """First time after which a metric stays at or below a threshold (None if never)."""

    threshold: float
    time: Optional[float] = None

    @property
    def reached(self) -> bool:
        return self.time is not None


class StabilizationReport(BaseModel):
    """Series of distances to the semitrivial equilibrium and decay times."""

    times: list[float]
    stab_u: list[float]
    stab_v: list[float]
    u_decay: list[DecayTime]
    v_decay: list[DecayTime]


def first_crossing_times(
    times: Sequence[float], values: Sequence[float], thresholds: Sequence[float]
) -> list[DecayTime]:
    """For each threshold, the first sample time from which on the values stay <= it."""
    values_arr = np.asarray(values, dtype=float)
    result: list[DecayTime] = []
    for threshold in thresholds:
        if values_arr.size == 0:
            result.append(DecayTime(threshold=threshold, time=None))
            continue
        above = np.nonzero(values_arr > threshold)[0]
        if above.size == 0:
            result.append(DecayTime(threshold=threshold, time=float(times[0])))
        elif above[-1] == len(values_arr) - 1:
            result.append(DecayTime(threshold=threshold, time=None))
        else:
            result.append(DecayTime(threshold=threshold, time=float(times[above[-1] + 1])))
    return result


def stabilization_from_series(
    times: Sequence[float],
    stab_u: Sequence[float],
    stab_v: Sequence[float],
    u_thresholds: Sequence[float],
    v_thresholds: Sequence[float],
) -> StabilizationReport:
    return StabilizationReport(
        times=list(times),
        stab_u=list(stab_u),
        stab_v=list(stab_v),
        u_decay=first_crossing_times(times, stab_u, u_thresholds),
        v_decay=first_crossing_times(times, stab_v, v_thresholds),
    )


def stabilization_metrics(
    trajectory: Trajectory,
    u_thresholds: Sequence[float] = (0.1, 0.01),
    v_thresholds: Sequence[float] = (0.5, 0.1, 0.02, 0.001),
) -> StabilizationReport:
    """Distance of u to the mean of u0 and sup of v along the stored states.

    Raises:
        ValueError: If the trajectory stores no states
    """
    states = trajectory.states
    if not states:
        raise ValueError("stabilization metrics need at least one stored state")
    grid = states[0].grid
    mean_u0 = integrate(grid, states[0].u) / grid.volume
    times = [s.t for s in states]
    stab_u = [float(np.max(np.abs(s.u.values - mean_u0))) for s in states]
    stab_v = [float(np.max(np.abs(s.v.values))) for s in states]
    return stabilization_from_series(times, stab_u, stab_v, u_thresholds, v_thresholds)
