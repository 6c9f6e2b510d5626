"""Linearly implicit time stepping that conserves mass and preserves positivity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ks_motility.grid import Field, Grid, GridMismatchError, laplacian_array
from ks_motility.models import MotilityBounds, MotilitySpec, StepParams
from ks_motility.problem import ProblemSpec, consumption_rate

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A linear solve failed to converge or produced non-finite values."""

    def __init__(
        self,
        message: str,
        stage: Optional[str] = None,
        iterations: Optional[int] = None,
        residual: Optional[float] = None,
    ) -> None:
        super().__init__(message)
        self.stage = stage
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class SimState:
    """One instant (u, v, t) of a trajectory of the epsilon-regularized system."""

    u: Field
    v: Field
    t: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if self.u.grid != self.v.grid:
            raise GridMismatchError("u and v must share one grid")
        if self.t < 0:
            raise ValueError(f"time must be >= 0, got {self.t}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def grid(self) -> Grid:
        return self.u.grid


Observer = Callable[[SimState, int], Any]


@dataclass
class Trajectory:
    """Result of ``run``: the final state plus whatever was recorded on the way."""

    final: SimState
    dt: float
    steps: int
    cadence: int = 1
    states: list[SimState] = field(default_factory=list)
    observations: list[Any] = field(default_factory=list)

    @property
    def times(self) -> list[float]:
        return [s.t for s in self.states]


def _neg_laplacian_diagonal(grid: Grid) -> np.ndarray:
    diag = np.zeros(grid.shape)
    for axis, (h, n) in enumerate(zip(grid.spacing, grid.cells)):
        counts = np.full(n, 2.0)
        counts[0] = counts[-1] = 1.0
        shape = [1] * grid.dim
        shape[axis] = n
        diag = diag + counts.reshape(shape) / (h * h)
    return diag


def _solve_spd(
    matvec: Callable[[np.ndarray], np.ndarray],
    diagonal: np.ndarray,
    rhs: np.ndarray,
    params: StepParams,
    stage: str,
) -> np.ndarray:
    """Jacobi-preconditioned CG for a symmetric positive definite matrix-free operator."""
    n = rhs.size
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)

    operator = LinearOperator((n, n), matvec=matvec, dtype=float)
    preconditioner = LinearOperator((n, n), matvec=lambda r: r / diagonal, dtype=float)
    max_iters = params.max_iters or 10 * n
    iterations = 0

    def _count(_: np.ndarray) -> None:
        nonlocal iterations
        iterations += 1

    x, info = cg(
        operator,
        rhs,
        rtol=params.solver_tol,
        atol=0.0,
        maxiter=max_iters,
        M=preconditioner,
        callback=_count,
    )
    if info != 0 or not np.all(np.isfinite(x)):
        residual = float(np.linalg.norm(rhs - matvec(x))) / rhs_norm
        raise SolverError(
            f"{stage}-stage solve did not converge in {iterations} iterations "
            f"(relative residual {residual:.3e}, tolerance {params.solver_tol:.1e})",
            stage=stage,
            iterations=iterations,
            residual=residual,
        )
    logger.debug("%s-stage CG converged in %d iterations", stage, iterations)
    return x


def step(state: SimState, phi: MotilitySpec, params: StepParams) -> SimState:
    """Advance one backward-Euler step with frozen coefficients.

    Stage 1 solves (I - dt L D) u+ = u with D = diag(phi(v)). With w = D u+ this is the
    symmetric system (D^-1 - dt L) w = u, solved for the increment w - D u; u+ is then
    rebuilt in flux form u + dt L w, so its integral matches that of u to round-off.
    Stage 2 solves (I - dt L + dt diag(u+/(1 + eps u+))) v+ = v for the increment v+ - v.

    Raises:
        SolverError: If a solve fails to converge or the new state is not finite
    """
    grid = state.grid
    spacing = grid.spacing
    shape = grid.shape
    dt = params.dt
    u = state.u.values
    v = state.v.values
    neg_lap_diag = _neg_laplacian_diagonal(grid).ravel()

    def lap(x: np.ndarray) -> np.ndarray:
        return laplacian_array(x.reshape(shape), spacing).ravel()

    # Stage 1: u with v frozen
    motility = phi.phi(v).ravel()
    w0 = motility * u.ravel()
    delta_w = _solve_spd(
        lambda x: x / motility - dt * lap(x),
        1.0 / motility + dt * neg_lap_diag,
        dt * lap(w0),
        params,
        "u",
    )
    u_new = u.ravel() + dt * lap(w0 + delta_w)

    # Stage 2: v with consumption frozen at u+
    rate = consumption_rate(u_new, state.epsilon)
    v_flat = v.ravel()
    delta_v = _solve_spd(
        lambda x: x - dt * lap(x) + dt * rate * x,
        1.0 + dt * neg_lap_diag + dt * rate,
        dt * (lap(v_flat) - rate * v_flat),
        params,
        "v",
    )
    v_new = v_flat + delta_v

    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise SolverError(f"non-finite values after step at t = {state.t:.6g}")

    return SimState(
        u=Field(grid, u_new.reshape(shape)),
        v=Field(grid, v_new.reshape(shape)),
        t=state.t + dt,
        epsilon=state.epsilon,
    )


def step_explicit(state: SimState, phi: MotilitySpec, dt: float) -> SimState:
    """Forward Euler step of the same semi-discretisation, used as a reference integrator."""
    grid = state.grid
    u = state.u.values
    v = state.v.values
    u_new = u + dt * laplacian_array(phi.phi(v) * u, grid.spacing)
    v_new = v + dt * (laplacian_array(v, grid.spacing) - consumption_rate(u, state.epsilon) * v)
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
        raise SolverError(f"non-finite values after explicit step at t = {state.t:.6g}")
    return SimState(Field(grid, u_new), Field(grid, v_new), state.t + dt, state.epsilon)


def run(
    problem: ProblemSpec,
    t_end: float,
    params: StepParams,
    observer: Optional[Observer] = None,
    cadence: int = 1,
    keep_states: bool = False,
) -> Trajectory:
    """Advance from t = 0 to t >= t_end.

    The observer is called with (state, step index) at step 0 and every ``cadence``
    steps; non-None return values are collected as observations. States at the same
    cadence are kept when ``keep_states`` is set.

    Raises:
        ValueError: If t_end <= 0 or cadence < 1
        SolverError: Propagated from ``step``
    """
    if t_end <= 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    if cadence < 1:
        raise ValueError(f"cadence must be >= 1, got {cadence}")

    n_steps = max(1, math.ceil(t_end / params.dt - 1e-9))
    state = SimState(problem.u0, problem.v0, 0.0, problem.epsilon)
    trajectory = Trajectory(final=state, dt=params.dt, steps=n_steps, cadence=cadence)

    def _observe(k: int, current: SimState) -> None:
        if k % cadence != 0:
            return
        if observer is not None:
            observation = observer(current, k)
            if observation is not None:
                trajectory.observations.append(observation)
        if keep_states:
            trajectory.states.append(current)

    logger.info(
        "Running %d steps of dt=%.3g on %s cells (epsilon=%g)",
        n_steps,
        params.dt,
        "x".join(str(n) for n in problem.grid.cells),
        problem.epsilon,
    )
    _observe(0, state)
    for k in range(1, n_steps + 1):
        state = replace(step(state, problem.phi, params), t=k * params.dt)
        _observe(k, state)

    trajectory.final = state
    return trajectory


def suggest_dt(problem: ProblemSpec, bounds: MotilityBounds, safety: float) -> float:
    """Accuracy heuristic tying dt to the explicit-scheme scale.

    The scheme is unconditionally stable; this only keeps the splitting error modest.
    """
    if not 0 < safety <= 1:
        raise ValueError(f"safety must be in (0, 1], got {safety}")
    h = min(problem.grid.spacing)
    diffusive = h * h / (2 * problem.grid.dim * bounds.c2)
    reactive = 1.0 / (problem.u0.max() * problem.v0.max() + 1.0)
    return safety * min(diffusive, reactive)
