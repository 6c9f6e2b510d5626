"""Core data models for chemotaxis-consumption simulation."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Roots with a smaller relative imaginary part count as real.
REAL_ROOT_TOL = 1e-7


class MotilityFamily(str, Enum):
    """Closed-form families for the motility function phi."""

    CONSTANT = "constant"
    EXP_DECAY = "exp_decay"
    RATIONAL = "rational"
    POLYNOMIAL = "polynomial"


class InitialDataKind(str, Enum):
    """Generators for nonnegative initial data."""

    CONSTANT = "constant"
    GAUSSIAN = "gaussian"
    BUMPS = "bumps"
    RANDOM_SMOOTH = "random_smooth"


class OdeBoundKind(str, Enum):
    """The three ODE comparison lemmas checked by the oracle."""

    LINEAR_DAMPING = "linear_damping"
    SUPERLINEAR_ABSORPTION = "superlinear_absorption"
    SUPERLINEAR_CONSTANT_FORCING = "superlinear_constant_forcing"


class Severity(str, Enum):
    """Check severity levels."""

    INFO = "info"
    WARN = "warn"
    ERROR = "error"


_PARAMETER_COUNTS = {
    MotilityFamily.CONSTANT: 1,
    MotilityFamily.EXP_DECAY: 2,
    MotilityFamily.RATIONAL: 3,
}


def _positive_decaying(a: float, b: float) -> bool:
    """Whether a*g(xi) + b > 0 on [0, inf) for g decreasing from 1 to 0."""
    if a >= 0:
        return b >= 0 and a + b > 0
    return a + b > 0


def _positive_polynomial(coeffs: np.ndarray) -> bool:
    """Whether a polynomial (ascending coefficients) is positive on [0, inf).

    True exactly when the leading coefficient is positive and no real root is >= 0.
    """
    if coeffs[-1] <= 0:
        return False
    if coeffs.size == 1:
        return True
    for root in npoly.polyroots(coeffs):
        if abs(root.imag) <= REAL_ROOT_TOL * max(1.0, abs(root)) and root.real >= 0:
            return False
    return True


class MotilitySpec(BaseModel):
    """The motility function phi with exact closed forms for phi and phi'.

    Polynomial coefficients are in ascending powers: c0 + c1*xi + c2*xi**2 + ...
    """

    family: MotilityFamily
    parameters: list[float]

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_positive(self) -> "MotilitySpec":
        params = self.parameters
        if self.family == MotilityFamily.POLYNOMIAL:
            if not params:
                raise ValueError("polynomial motility needs at least one coefficient")
        elif len(params) != _PARAMETER_COUNTS[self.family]:
            raise ValueError(
                f"{self.family.value} motility takes {_PARAMETER_COUNTS[self.family]} "
                f"parameters, got {len(params)}"
            )
        if not all(math.isfinite(p) for p in params):
            raise ValueError("motility parameters must be finite")

        if self.family == MotilityFamily.CONSTANT:
            ok = params[0] > 0
        elif self.family == MotilityFamily.EXP_DECAY:
            ok = _positive_decaying(params[0], params[1])
        elif self.family == MotilityFamily.RATIONAL:
            if params[2] < 0:
                raise ValueError("rational motility exponent k must be nonnegative")
            ok = _positive_decaying(params[0], params[1])
        else:
            coeffs = np.trim_zeros(np.asarray(params, dtype=float), "b")
            if coeffs.size == 0:
                raise ValueError("positivity violation: polynomial is identically zero")
            ok = _positive_polynomial(coeffs)
        if not ok:
            raise ValueError(
                f"positivity violation: phi = {self.family.value}{tuple(params)} "
                "is not positive on [0, inf)"
            )
        return self

    def phi(self, xi: Any) -> Any:
        """Evaluate phi at xi (scalar or array)."""
        xi = np.asarray(xi, dtype=float)
        p = self.parameters
        if self.family == MotilityFamily.CONSTANT:
            return np.full_like(xi, p[0])
        if self.family == MotilityFamily.EXP_DECAY:
            return p[0] * np.exp(-xi) + p[1]
        if self.family == MotilityFamily.RATIONAL:
            return p[0] * (1.0 + xi) ** (-p[2]) + p[1]
        return npoly.polyval(xi, p)

    def dphi(self, xi: Any) -> Any:
        """Evaluate phi' at xi (scalar or array)."""
        xi = np.asarray(xi, dtype=float)
        p = self.parameters
        if self.family == MotilityFamily.CONSTANT:
            return np.zeros_like(xi)
        if self.family == MotilityFamily.EXP_DECAY:
            return -p[0] * np.exp(-xi)
        if self.family == MotilityFamily.RATIONAL:
            return -p[0] * p[2] * (1.0 + xi) ** (-p[2] - 1.0)
        if len(p) == 1:
            return np.zeros_like(xi)
        return npoly.polyval(xi, npoly.polyder(p))

    def critical_points(self, upper: float) -> list[float]:
        """Interior points of [0, upper] where phi or |phi'| may attain an extremum.

        The exponential and rational families are monotone with monotone |phi'|, so
        their extrema sit at the endpoints.
        """
        if self.family != MotilityFamily.POLYNOMIAL or len(self.parameters) < 2:
            return []
        points: list[float] = []
        d1 = npoly.polyder(self.parameters)
        for coeffs in (d1, npoly.polyder(d1)):
            coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
            if coeffs.size < 2:
                continue
            for root in npoly.polyroots(coeffs):
                if abs(root.imag) < 1e-12 and 0.0 < root.real < upper:
                    points.append(float(root.real))
        return sorted(points)


class GaussianBump(BaseModel):
    """One gaussian bump amplitude * exp(-|x - center|^2 / (2 width^2))."""

    center: list[float]
    width: float = Field(gt=0)
    amplitude: float = Field(default=1.0, ge=0)

    model_config = ConfigDict(extra="forbid")


class InitialDataSpec(BaseModel):
    """Declarative initial datum; which fields apply depends on ``kind``.

    ``center`` defaults to the middle of the domain. ``mass``, when given, rescales the
    generated field to that integral.
    """

    kind: InitialDataKind
    value: Optional[float] = None
    center: Optional[list[float]] = None
    width: Optional[float] = Field(default=None, gt=0)
    amplitude: float = 1.0
    background: float = Field(default=0.0, ge=0)
    bumps: list[GaussianBump] = Field(default_factory=list)
    seed: int = 0
    modes: int = Field(default=4, ge=1)
    floor: float = Field(default=0.0, ge=0)
    mass: Optional[float] = Field(default=None, gt=0)

    model_config = ConfigDict(extra="forbid")


class MotilityBounds(BaseModel):
    """Certified bounds c1 <= phi <= c2 and |phi'| <= c3 on [0, M]."""

    c1: float = Field(gt=0)
    c2: float
    c3: float = Field(ge=0)
    M: float = Field(ge=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_order(self) -> "MotilityBounds":
        if self.c2 < self.c1:
            raise ValueError(f"c2 = {self.c2} must be >= c1 = {self.c1}")
        return self


class StepParams(BaseModel):
    """Time step and linear solver settings."""

    dt: float = Field(gt=0)
    solver_tol: float = Field(default=1e-11, gt=0, le=1e-6)
    # None means 10 * total cell count
    max_iters: Optional[int] = Field(default=None, ge=1)

    model_config = ConfigDict(frozen=True)


class WeightedParams(BaseModel):
    """Exponent p, weight exponent kappa and signal ceiling delta of the weighted functional."""

    p: float = Field(gt=1)
    kappa: float = Field(gt=0)
    delta: float = Field(gt=0)

    model_config = ConfigDict(frozen=True)

    def satisfies(self, bounds: MotilityBounds) -> bool:
        """Re-check the parameter conditions against motility bounds."""
        p, kappa, delta = self.p, self.kappa, self.delta
        slack = 1e-12
        kappa_ok = kappa <= (p - 1.0) * bounds.c1 / (p * (bounds.c2 + 1.0) ** 2) * (1 + slack)
        delta_ok = p * bounds.c3 * delta <= 0.5 + slack
        mixed_ok = (p - 1.0) * bounds.c3 * delta + kappa * delta <= kappa * (1 + slack)
        return kappa_ok and delta_ok and mixed_ok


class DiagnosticsRecord(BaseModel):
    """Every tracked functional for one simulation state."""

    t: float
    mass_u: float
    sup_v: float
    dual_norm_sq: float
    l2_u_sq: float
    grad_v_sq: float
    lap_v_sq: float
    grad_v_4: float
    v_t_sq: Optional[float] = None
    p_values: list[float] = Field(default_factory=list)
    lp_u: list[float] = Field(default_factory=list)
    entropy_u: float
    fisher_u: float
    grad_u_43: float
    weighted: Optional[float] = None
    weighted_status: str = "disabled"
    stab_u: float
    stab_v: float
    min_u: float = 0.0
    min_v: float = 0.0


class OdeBoundProblem(BaseModel):
    """Parameters of one ODE comparison problem."""

    kind: OdeBoundKind
    a: float = Field(gt=0)
    b: float = Field(gt=0)
    lam: float = 2.0
    y0: float = Field(ge=0)
    t0: float = 0.0
    horizon: float = 5.0

    @model_validator(mode="after")
    def _check_problem(self) -> "OdeBoundProblem":
        if self.horizon <= self.t0:
            raise ValueError(f"horizon {self.horizon} must exceed t0 {self.t0}")
        if self.kind != OdeBoundKind.LINEAR_DAMPING and self.lam <= 1:
            raise ValueError(f"lambda must be > 1 for {self.kind.value}, got {self.lam}")
        if self.kind == OdeBoundKind.SUPERLINEAR_ABSORPTION and self.y0 <= 0:
            raise ValueError("superlinear_absorption needs y0 > 0")
        return self


class VerificationReport(BaseModel):
    """Outcome of one brute-force check of an ODE bound."""

    kind: OdeBoundKind
    seed: int
    a: float
    b: float
    lam: float
    y0: float
    n_steps: int
    max_excess: float
    max_relative_excess: float
    passed: bool
    overflow: bool = False
    richardson_diff: Optional[float] = None


class Finding(BaseModel):
    """Outcome of one per-run invariant check."""

    id: str
    severity: Severity
    passed: bool
    title: str
    description: str
    metadata: dict[str, Any] = Field(default_factory=dict)

    model_config = ConfigDict(use_enum_values=True)
