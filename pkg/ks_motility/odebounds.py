"""Closed-form ODE comparison bounds and a brute-force RK4 oracle that checks them.

Three differential inequalities are covered:

* linear damping      y' + a y <= h(t)            ->  y <= y(t0) + b / (1 - e^{-a})
* superlinear, h y    y' + a y^lam <= h(t) y      ->  y <= max(y0, (a(lam-1))^{-1/(lam-1)}) e^b
* superlinear, const  y' + a y^lam <= b           ->  y <= (b/a)^{1/lam} + (a(lam-1)(t-t0))^{-1/(lam-1)}

where the forcing h >= 0 has at most b mass in every unit window. The oracle integrates
the corresponding equalities with adversarial forcing and compares against the bound.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ks_motility.models import OdeBoundKind, OdeBoundProblem, VerificationReport

logger = logging.getLogger(__name__)

FORCING_PIECE = 0.1
FORCING_WINDOW = 1.0
PASS_MARGIN = 1e-6
MIN_STEPS = 1000
# RK4 substeps keep (local stiffness) * substep below this
STABILITY_LIMIT = 0.5
MAX_SUBSTEPS = 5_000_000

_KIND_INDEX = {kind: i for i, kind in enumerate(OdeBoundKind)}


def bound_linear_damping(y0: float, a: float, b: float) -> float:
    """Bound for y' + a y <= h with unit-window mass of h at most b."""
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if y0 < 0:
        raise ValueError(f"y0 must be >= 0, got {y0}")
    return y0 + b / -math.expm1(-a)


def bound_superlinear(y0: float, a: float, b: float, lam: float) -> float:
    """Bound for y' + a y^lam <= h y with unit-window mass of h at most b."""
    if lam <= 1:
        raise ValueError(f"lambda must be > 1, got {lam}")
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if y0 <= 0:
        raise ValueError(f"y0 must be positive, got {y0}")
    floor = (a * (lam - 1.0)) ** (-1.0 / (lam - 1.0))
    return max(y0, floor) * math.exp(b)


def bound_superlinear_decay(a: float, b: float, lam: float, elapsed: float) -> float:
    """Bound for y' + a y^lam <= b at time t0 + elapsed, independent of y(t0).

    Raises:
        ValueError: If elapsed <= 0, where the bound is infinite
    """
    if lam <= 1:
        raise ValueError(f"lambda must be > 1, got {lam}")
    if a <= 0 or b <= 0:
        raise ValueError(f"a and b must be positive, got a={a}, b={b}")
    if elapsed <= 0:
        raise ValueError(f"elapsed time must be positive, got {elapsed}")
    return (b / a) ** (1.0 / lam) + (a * (lam - 1.0) * elapsed) ** (-1.0 / (lam - 1.0))


def comparison_function(a: float, b: float, lam: float, elapsed: np.ndarray) -> np.ndarray:
    """ybar = c1 + c2 s^{-1/(lam-1)} with c1 = (b/a)^{1/lam}, c2 = (a(lam-1))^{-1/(lam-1)}."""
    s = np.asarray(elapsed, dtype=float)
    c1 = (b / a) ** (1.0 / lam)
    c2 = (a * (lam - 1.0)) ** (-1.0 / (lam - 1.0))
    return c1 + c2 * s ** (-1.0 / (lam - 1.0))


def comparison_defect(a: float, b: float, lam: float, elapsed: np.ndarray) -> np.ndarray:
    """ybar' + a ybar^lam - b, which is nonnegative for a supersolution."""
    s = np.asarray(elapsed, dtype=float)
    c2 = (a * (lam - 1.0)) ** (-1.0 / (lam - 1.0))
    derivative = -c2 / (lam - 1.0) * s ** (-lam / (lam - 1.0))
    return derivative + a * comparison_function(a, b, lam, s) ** lam - b


@dataclass(frozen=True)
class PiecewiseForcing:
    """Nonnegative forcing, constant on pieces of length ``piece`` starting at t0."""

    t0: float
    piece: float
    values: np.ndarray

    def __call__(self, t: float) -> float:
        if t < self.t0:
            return 0.0
        idx = min(int((t - self.t0) / self.piece), len(self.values) - 1)
        return float(self.values[idx])

    def breakpoints(self, start: float, end: float) -> list[float]:
        """Piece boundaries strictly inside (start, end)."""
        first = math.floor((start - self.t0) / self.piece) + 1
        points = []
        k = first
        while True:
            point = self.t0 + k * self.piece
            if point >= end:
                break
            if point > start:
                points.append(point)
            k += 1
        return points

    def max_window_integral(self, window: float = FORCING_WINDOW) -> float:
        per_window = max(1, round(window / self.piece))
        if len(self.values) <= per_window:
            return float(np.sum(self.values)) * self.piece
        sums = np.convolve(self.values, np.ones(per_window), mode="valid")
        return float(sums.max()) * self.piece


def make_forcing(
    b: float,
    t0: float,
    horizon: float,
    seed: int,
    scale: float = 1.0,
    piece: float = FORCING_PIECE,
) -> PiecewiseForcing:
    """Random piecewise-constant forcing whose largest unit-window integral is scale * b."""
    if not 0 <= scale <= 1:
        raise ValueError(f"scale must be in [0, 1], got {scale}")
    n_pieces = max(1, math.ceil((horizon - t0) / piece - 1e-9))
    rng = np.random.default_rng(seed)
    raw = PiecewiseForcing(t0, piece, rng.exponential(size=n_pieces))
    peak = raw.max_window_integral()
    return PiecewiseForcing(t0, piece, raw.values * (scale * b / peak))


def _rhs(problem: OdeBoundProblem, y: float, h: float) -> float:
    if problem.kind == OdeBoundKind.LINEAR_DAMPING:
        return -problem.a * y + h
    power = abs(y) ** problem.lam
    if problem.kind == OdeBoundKind.SUPERLINEAR_ABSORPTION:
        return -problem.a * power + h * y
    return -problem.a * power + problem.b


def _stiffness(problem: OdeBoundProblem, y: float, h: float) -> float:
    if problem.kind == OdeBoundKind.LINEAR_DAMPING:
        return problem.a
    rate = problem.a * problem.lam * abs(y) ** (problem.lam - 1.0)
    if problem.kind == OdeBoundKind.SUPERLINEAR_ABSORPTION:
        rate += h
    return rate


def _rk4(problem: OdeBoundProblem, y: float, h: float, dt: float) -> float:
    k1 = _rhs(problem, y, h)
    k2 = _rhs(problem, y + 0.5 * dt * k1, h)
    k3 = _rhs(problem, y + 0.5 * dt * k2, h)
    k4 = _rhs(problem, y + dt * k3, h)
    return y + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def integrate_equality(
    problem: OdeBoundProblem, forcing: Optional[PiecewiseForcing], n_steps: int
) -> tuple[np.ndarray, np.ndarray, bool]:
    """RK4 for the equality dynamics, reported on a uniform grid of n_steps steps.

    Each report step is split at forcing breakpoints and into substeps short enough
    for the local stiffness.

    Returns:
        (times, values, overflow)
    """
    dt = (problem.horizon - problem.t0) / n_steps
    times = problem.t0 + dt * np.arange(n_steps + 1)
    values = np.full(n_steps + 1, np.nan)
    values[0] = y = problem.y0
    substeps = 0

    for k in range(n_steps):
        t = float(times[k])
        end = float(times[k + 1])
        stops = (forcing.breakpoints(t, end) if forcing is not None else []) + [end]
        for stop in stops:
            h = forcing((t + stop) / 2.0) if forcing is not None else 0.0
            while stop - t > 1e-14 * max(1.0, abs(stop)):
                sub = min(stop - t, STABILITY_LIMIT / max(_stiffness(problem, y, h), 1e-300))
                try:
                    y = _rk4(problem, y, h, sub)
                except OverflowError:
                    y = math.inf
                t += sub
                substeps += 1
                if not math.isfinite(y) or substeps > MAX_SUBSTEPS:
                    logger.warning("RK4 oracle overflowed for %s at t=%.6g", problem.kind.value, t)
                    return times, values, True
            t = stop
        values[k + 1] = y
    return times, values, False


def _bounds_on_grid(problem: OdeBoundProblem, times: np.ndarray) -> np.ndarray:
    if problem.kind == OdeBoundKind.LINEAR_DAMPING:
        return np.full(times.shape, bound_linear_damping(problem.y0, problem.a, problem.b))
    if problem.kind == OdeBoundKind.SUPERLINEAR_ABSORPTION:
        return np.full(
            times.shape, bound_superlinear(problem.y0, problem.a, problem.b, problem.lam)
        )
    bounds = np.full(times.shape, np.inf)
    elapsed = times - problem.t0
    positive = elapsed > 0
    bounds[positive] = [
        bound_superlinear_decay(problem.a, problem.b, problem.lam, float(s))
        for s in elapsed[positive]
    ]
    return bounds


def verify_bound(
    problem: OdeBoundProblem,
    forcing_seed: int,
    n_steps: int = MIN_STEPS,
    scale: float = 1.0,
    richardson: Optional[bool] = None,
    forcing: Optional[PiecewiseForcing] = None,
) -> VerificationReport:
    """Integrate the equality dynamics and compare against the closed-form bound.

    Passes iff y - bound <= 1e-6 (1 + bound) at every grid time and the integration did
    not overflow. ``richardson`` (default: seeds divisible by 10) reruns with twice the
    steps and reports the largest difference on the shared grid. An explicit ``forcing``
    replaces the seeded one; it must satisfy the window constraint itself.
    """
    if n_steps < MIN_STEPS:
        raise ValueError(f"n_steps must be >= {MIN_STEPS}, got {n_steps}")

    if problem.kind == OdeBoundKind.SUPERLINEAR_CONSTANT_FORCING:
        forcing = None
    elif forcing is None:
        forcing = make_forcing(problem.b, problem.t0, problem.horizon, forcing_seed, scale)

    times, values, overflow = integrate_equality(problem, forcing, n_steps)
    bounds = _bounds_on_grid(problem, times)
    finite = np.isfinite(bounds) & np.isfinite(values)
    excess = values[finite] - bounds[finite]
    relative = excess / (1.0 + bounds[finite])
    max_excess = float(excess.max()) if excess.size else -math.inf
    max_relative = float(relative.max()) if relative.size else -math.inf

    richardson_diff = None
    if richardson is None:
        richardson = forcing_seed % 10 == 0
    if richardson and not overflow:
        _, fine, fine_overflow = integrate_equality(problem, forcing, 2 * n_steps)
        if not fine_overflow:
            richardson_diff = float(np.max(np.abs(fine[::2] - values)))

    return VerificationReport(
        kind=problem.kind,
        seed=forcing_seed,
        a=problem.a,
        b=problem.b,
        lam=problem.lam,
        y0=problem.y0,
        n_steps=n_steps,
        max_excess=max_excess,
        max_relative_excess=max_relative,
        passed=(not overflow) and max_relative <= PASS_MARGIN,
        overflow=overflow,
        richardson_diff=richardson_diff,
    )


def random_problem(kind: OdeBoundKind, seed: int, horizon: float = 5.0) -> OdeBoundProblem:
    """Log-uniform a, b in [0.1, 10], lambda in (1, 4], y0 in [0, 100]."""
    rng = np.random.default_rng([seed, _KIND_INDEX[kind]])
    a = 10.0 ** rng.uniform(-1.0, 1.0)
    b = 10.0 ** rng.uniform(-1.0, 1.0)
    lam = 4.0 - 3.0 * rng.random()
    y0 = 100.0 * rng.random()
    if kind == OdeBoundKind.SUPERLINEAR_ABSORPTION:
        y0 = max(y0, 1e-3)
    return OdeBoundProblem(kind=kind, a=a, b=b, lam=lam, y0=y0, t0=0.0, horizon=horizon)


def _verify_task(task: tuple[OdeBoundKind, int, int]) -> VerificationReport:
    kind, seed, n_steps = task
    return verify_bound(random_problem(kind, seed), seed, n_steps)


def verify_suite(
    seeds: Iterable[int],
    kinds: Sequence[OdeBoundKind] = tuple(OdeBoundKind),
    n_steps: int = MIN_STEPS,
    workers: int = 1,
) -> list[VerificationReport]:
    """Verify randomized problems for every (kind, seed), ordered by kind then seed."""
    seed_list = list(seeds)
    tasks = [(kind, seed, n_steps) for kind in kinds for seed in seed_list]
    logger.info("Verifying %d ODE bound problems with %d worker(s)", len(tasks), workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_verify_task, tasks, chunksize=8))
    return [_verify_task(task) for task in tasks]


def parse_seed_range(text: str) -> range:
    """Parse 'a..b' (inclusive) into a range."""
    try:
        start_text, end_text = text.split("..")
        start, end = int(start_text), int(end_text)
    except ValueError as e:
        raise ValueError(f"seed range must look like 'a..b', got {text!r}") from e
    if end < start:
        raise ValueError(f"empty seed range {text!r}")
    return range(start, end + 1)
