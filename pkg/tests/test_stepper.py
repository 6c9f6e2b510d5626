"""Tests for the linearly implicit stepper."""

import math

import numpy as np
import pytest

from ks_motility.grid import Field, Grid, build_grid, integrate
from ks_motility.models import MotilityBounds, StepParams
from ks_motility.problem import ProblemSpec, make_initial_data, make_motility
from ks_motility.stepper import (
    SimState,
    SolverError,
    run,
    step,
    step_explicit,
    suggest_dt,
)


def _smooth_problem(n: int) -> ProblemSpec:
    grid = build_grid(1, [1.0], [n])
    x = grid.centers(0)
    u0 = Field(grid, np.exp(np.cos(np.pi * x)))
    v0 = Field(grid, 0.5 + 0.5 * np.cos(np.pi * x) ** 2)
    return ProblemSpec(grid, make_motility("exp_decay", [1.0, 0.5]), u0, v0, epsilon=0.1)


def _restrict(fine: np.ndarray) -> np.ndarray:
    """Average pairs of fine cells onto the coarse grid."""
    return 0.5 * (fine[0::2] + fine[1::2])


def test_constant_u_without_signal_is_fixed(grid_2d: Grid) -> None:
    """Test that u = c, v = 0 is a fixed point up to the time stamp."""
    state = SimState(Field.constant(grid_2d, 2.0), Field.constant(grid_2d, 0.0), 0.0, 0.0)
    phi = make_motility("exp_decay", [1.0, 0.5])

    new = step(state, phi, StepParams(dt=0.3))

    np.testing.assert_array_equal(new.u.values, state.u.values)
    np.testing.assert_array_equal(new.v.values, state.v.values)
    assert new.t == pytest.approx(0.3)


def test_zero_u_gives_heat_flow(grid_1d: Grid, rng: np.random.Generator) -> None:
    """Test that without cells u stays 0 and v diffuses conservatively."""
    v0 = Field(grid_1d, rng.random(grid_1d.size))
    state = SimState(Field.constant(grid_1d, 0.0), v0)
    phi = make_motility("constant", [1.0])
    params = StepParams(dt=0.01)

    for _ in range(20):
        new = step(state, phi, params)
        assert np.all(new.u.values == 0.0)
        assert integrate(grid_1d, new.v) == pytest.approx(integrate(grid_1d, v0), rel=1e-9)
        assert new.v.max() <= state.v.max() + 1e-14
        state = new


def test_step_conserves_mass(bump_problem: ProblemSpec) -> None:
    """Test that the mass of u is conserved to round-off."""
    state = SimState(bump_problem.u0, bump_problem.v0, 0.0, bump_problem.epsilon)
    mass0 = integrate(bump_problem.grid, state.u)
    params = StepParams(dt=0.05)

    for _ in range(50):
        state = step(state, bump_problem.phi, params)
        assert integrate(bump_problem.grid, state.u) == pytest.approx(mass0, rel=1e-12)


def test_step_preserves_positivity_with_large_dt() -> None:
    """Test positivity and sup-v monotonicity far beyond the explicit stability limit."""
    grid = build_grid(2, [1.0, 1.0], [24, 24])
    u0 = make_initial_data(grid, "gaussian", {"width": 0.05, "mass": 1.0})
    v0 = make_initial_data(grid, "random_smooth", {"seed": 5, "amplitude": 0.5})
    state = SimState(u0, v0, 0.0, 0.0)
    phi = make_motility("exp_decay", [1.0, 0.5])
    params = StepParams(dt=1.0)

    for _ in range(10):
        new = step(state, phi, params)
        assert new.u.min() >= -1e-12 * u0.max()
        assert new.v.min() >= -1e-12 * v0.max()
        assert new.v.max() <= state.v.max() + 1e-12
        state = new


def test_step_in_three_dimensions(grid_3d: Grid) -> None:
    """Test mass, positivity and sup-v monotonicity with the 7-point stencil."""
    u0 = make_initial_data(grid_3d, "gaussian", {"width": 0.15, "mass": 1.0})
    v0 = make_initial_data(grid_3d, "random_smooth", {"seed": 3, "amplitude": 0.5})
    state = SimState(u0, v0, 0.0, 0.1)
    phi = make_motility("exp_decay", [1.0, 0.5])
    mass0 = integrate(grid_3d, u0)

    for _ in range(20):
        new = step(state, phi, StepParams(dt=0.05))
        assert integrate(grid_3d, new.u) == pytest.approx(mass0, rel=1e-12)
        assert new.u.min() >= -1e-12 * u0.max()
        assert new.v.min() >= -1e-12 * v0.max()
        assert new.v.max() <= state.v.max() + 1e-12
        state = new


def test_uniform_state_follows_scalar_recursion(grid_1d: Grid) -> None:
    """Test that spatially uniform data follows v+ = v / (1 + dt c)."""
    c, dt = 1.5, 0.1
    state = SimState(Field.constant(grid_1d, c), Field.constant(grid_1d, 1.0))
    phi = make_motility("exp_decay", [1.0, 0.5])

    for n in range(1, 11):
        state = step(state, phi, StepParams(dt=dt))
        np.testing.assert_allclose(state.v.values, (1.0 + dt * c) ** (-n), rtol=1e-10)
        np.testing.assert_allclose(state.u.values, c, rtol=1e-12)


def test_larger_epsilon_consumes_less(grid_2d: Grid, rng: np.random.Generator) -> None:
    """Test that with u constant the integral of v is larger for the larger epsilon."""
    v0 = Field(grid_2d, 0.2 + rng.random(grid_2d.shape))
    u0 = Field.constant(grid_2d, 2.0)
    phi = make_motility("constant", [1.0])

    def v_mass(epsilon: float) -> list[float]:
        problem = ProblemSpec(grid_2d, phi, u0, v0, epsilon=epsilon)
        masses: list[float] = []
        run(
            problem,
            1.0,
            StepParams(dt=0.05),
            observer=lambda state, _: masses.append(integrate(grid_2d, state.v)),
        )
        return masses

    small, large = v_mass(0.1), v_mass(1.0)

    assert len(small) == len(large) == 21
    assert small[0] == large[0]
    for a, b in zip(small[1:], large[1:]):
        assert a < b


def test_step_reports_solver_failure(rng: np.random.Generator) -> None:
    """Test that a capped iteration count surfaces as a SolverError."""
    grid = build_grid(1, [1.0], [64])
    state = SimState(
        Field(grid, 1.0 + rng.random(grid.size)), Field(grid, rng.random(grid.size))
    )
    params = StepParams(dt=0.1, solver_tol=1e-12, max_iters=1)

    with pytest.raises(SolverError) as exc_info:
        step(state, make_motility("exp_decay", [1.0, 0.5]), params)

    assert exc_info.value.stage == "u"
    assert exc_info.value.iterations == 1
    assert exc_info.value.residual > 1e-12


def test_run_single_step(bump_problem: ProblemSpec) -> None:
    """Test that T = dt takes exactly one step."""
    trajectory = run(bump_problem, 0.01, StepParams(dt=0.01))

    assert trajectory.steps == 1
    assert trajectory.final.t == pytest.approx(0.01)


def test_run_observer_count(bump_problem: ProblemSpec) -> None:
    """Test that the observer sees the initial state and every step."""
    seen: list[int] = []

    trajectory = run(bump_problem, 0.1, StepParams(dt=0.03), observer=lambda s, k: seen.append(k))

    assert trajectory.steps == math.ceil(0.1 / 0.03)
    assert seen == list(range(trajectory.steps + 1))


def test_run_cadence_and_kept_states(bump_problem: ProblemSpec) -> None:
    """Test that states are kept at the requested cadence, including step 0."""
    trajectory = run(
        bump_problem,
        0.1,
        StepParams(dt=0.01),
        observer=lambda s, k: k,
        cadence=5,
        keep_states=True,
    )

    assert trajectory.observations == [0, 5, 10]
    assert trajectory.times == pytest.approx([0.0, 0.05, 0.1])


def test_run_is_deterministic(bump_problem: ProblemSpec) -> None:
    """Test that replaying a run gives bitwise-identical states."""
    params = StepParams(dt=0.02)

    first = run(bump_problem, 0.2, params).final
    second = run(bump_problem, 0.2, params).final

    np.testing.assert_array_equal(first.u.values, second.u.values)
    np.testing.assert_array_equal(first.v.values, second.v.values)


def test_run_rejects_invalid_arguments(bump_problem: ProblemSpec) -> None:
    """Test that nonpositive horizons and cadences are rejected."""
    with pytest.raises(ValueError):
        run(bump_problem, 0.0, StepParams(dt=0.1))
    with pytest.raises(ValueError):
        run(bump_problem, 1.0, StepParams(dt=0.1), cadence=0)


def test_step_params_validation() -> None:
    """Test that step parameters reject nonpositive dt and loose tolerances."""
    with pytest.raises(ValueError):
        StepParams(dt=0.0)
    with pytest.raises(ValueError):
        StepParams(dt=0.1, solver_tol=1e-3)


def test_suggest_dt_1d() -> None:
    """Test the diffusive limit h^2 / (2 d c2) in 1D."""
    grid = build_grid(1, [1.0], [10])
    problem = ProblemSpec(
        grid,
        make_motility("constant", [1.0]),
        Field.constant(grid, 1.0),
        Field.constant(grid, 0.0),
    )
    bounds = MotilityBounds(c1=1.0, c2=1.0, c3=0.0, M=0.0)

    assert suggest_dt(problem, bounds, 1.0) == pytest.approx(0.005)
    assert suggest_dt(problem, bounds, 0.5) == pytest.approx(0.0025)


def test_suggest_dt_2d() -> None:
    """Test the diffusive limit in 2D with c2 = 2."""
    grid = build_grid(2, [1.0, 1.0], [20, 20])
    problem = ProblemSpec(
        grid,
        make_motility("constant", [2.0]),
        Field.constant(grid, 1.0),
        Field.constant(grid, 1.0),
    )
    bounds = MotilityBounds(c1=2.0, c2=2.0, c3=0.0, M=1.0)

    assert suggest_dt(problem, bounds, 0.9) == pytest.approx(0.9 * 3.125e-4)


def test_suggest_dt_rejects_bad_safety(bump_problem: ProblemSpec) -> None:
    """Test that the safety factor must lie in (0, 1]."""
    bounds = MotilityBounds(c1=0.5, c2=1.5, c3=1.0, M=1.0)
    with pytest.raises(ValueError):
        suggest_dt(bump_problem, bounds, 1.5)


def test_temporal_order() -> None:
    """Test first-order convergence in dt against a tiny-step explicit reference."""
    problem = _smooth_problem(32)
    t_end = 0.1
    reference = SimState(problem.u0, problem.v0, 0.0, problem.epsilon)
    dt_ref = 1e-5
    for _ in range(round(t_end / dt_ref)):
        reference = step_explicit(reference, problem.phi, dt_ref)

    errors = []
    for dt in (0.01, 0.005, 0.0025):
        final = run(problem, t_end, StepParams(dt=dt)).final
        errors.append(
            np.max(np.abs(final.u.values - reference.u.values))
            + np.max(np.abs(final.v.values - reference.v.values))
        )

    for coarse, fine in zip(errors, errors[1:]):
        assert 0.7 <= math.log2(coarse / fine) <= 1.3


def test_spatial_order() -> None:
    """Test second-order convergence in h on smooth data at a small fixed dt."""
    params = StepParams(dt=1e-4)
    finals = {n: run(_smooth_problem(n), 0.02, params).final for n in (16, 32, 64, 128)}

    errors = []
    for coarse, fine in ((16, 32), (32, 64), (64, 128)):
        errors.append(
            np.max(np.abs(finals[coarse].u.values - _restrict(finals[fine].u.values)))
        )

    order = math.log2(errors[-2] / errors[-1])
    assert 1.7 <= order <= 2.3
