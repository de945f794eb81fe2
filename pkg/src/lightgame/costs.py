"""Edge cost model: base congestion cost plus traffic-light waiting time.

An edge with red proportion ``p`` costs ``c(x, p) = base(x) + waiting(x, p)``
for a load ``x``, clamped below at zero. Every built-in waiting family is
affine in ``x`` for a fixed ``p``, which keeps the Beckmann integral and the
marginal cost in closed form whenever the base cost is affine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from scipy import integrate

# Fitted constants for the simulated single-junction journey.
SUMO_BASE_SLOPE = 0.4
SUMO_BASE_INTERCEPT = 44.0
SUMO_P_MAX = 0.85

DEFAULT_P_MIN = 0.05
DEFAULT_P_MAX = 0.85


class CostError(ValueError):
    """Raised when a cost is evaluated outside its domain."""


# --------------------------------------------------------------------------
# base congestion costs
# --------------------------------------------------------------------------


class BaseCost(Protocol):
    def value(self, x: float) -> float: ...


@dataclass(frozen=True)
class Affine:
    """``a*x + b`` with ``a, b >= 0``."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise CostError(f"affine cost needs a, b >= 0, got ({self.a}, {self.b})")

    def value(self, x):
        return self.a * x + self.b

    def deriv(self, x):
        return self.a

    def to_dict(self):
        return {"affine": [self.a, self.b]}


@dataclass(frozen=True)
class Constant:
    b: float

    def __post_init__(self):
        if self.b < 0:
            raise CostError(f"constant cost must be >= 0, got {self.b}")

    def value(self, x):
        return self.b

    def deriv(self, x):
        return 0.0

    def to_dict(self):
        return {"constant": self.b}


@dataclass(frozen=True)
class Polynomial:
    """Polynomial with coefficients in increasing degree order.

    Non-negativity and monotonicity on ``x >= 0`` are checked on a grid when
    the object is built; non-negative coefficients always pass.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise CostError("polynomial needs at least one coefficient")
        if any(c < 0 for c in self.coeffs):
            grid = np.linspace(0.0, 100.0, 2001)
            vals = np.polynomial.polynomial.polyval(grid, self.coeffs)
            if vals.min() < 0 or np.any(np.diff(vals) < -1e-12):
                raise CostError("polynomial cost must be non-negative and non-decreasing on x >= 0")

    def value(self, x):
        return float(np.polynomial.polynomial.polyval(x, self.coeffs))

    def deriv(self, x):
        d = np.polynomial.polynomial.polyder(self.coeffs)
        return float(np.polynomial.polynomial.polyval(x, d)) if len(d) else 0.0

    def to_dict(self):
        return {"polynomial": list(self.coeffs)}


# --------------------------------------------------------------------------
# waiting families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class WaitingFamily:
    """A waiting time ``slope(p) * x + intercept(p)``.

    Subclasses set ``name`` (the file-format tag) and ``p_range``.
    """

    name = "abstract"
    p_range = (0.0, 1.0)

    def check_p(self, p):
        lo, hi = self.p_range
        if not lo <= p <= hi:
            raise CostError(f"{self.name}: red proportion {p} outside [{lo}, {hi}]")

    def is_infinite(self, p):
        return False

    def slope(self, p):
        raise NotImplementedError

    def intercept(self, p):
        return 0.0

    def value(self, x, p):
        self.check_p(p)
        if self.is_infinite(p):
            return math.inf
        return self.slope(p) * x + self.intercept(p)


@dataclass(frozen=True)
class Zero(WaitingFamily):
    name = "zero"

    def slope(self, p):
        return 0.0


@dataclass(frozen=True)
class SimpleExponential(WaitingFamily):
    """``w(x, p) = x * (exp(p) - 1)``."""

    name = "simple_exp"

    def slope(self, p):
        return math.expm1(p)


@dataclass(frozen=True)
class SumoFitted(WaitingFamily):
    """Regression surface from the single-junction simulations.

    Only defined for ``p <= 0.85``; past that the measured waiting time stops
    being continuous, so we refuse rather than extrapolate. Note that it does
    not vanish at ``p = 0`` (it gives ``0.28*x + 4``).
    """

    name = "sumo_fitted"
    p_range = (0.0, SUMO_P_MAX)

    def slope(self, p):
        return 0.12 * math.exp(6.12 * p) + 0.16

    def intercept(self, p):
        return -10.51 * math.exp(3.05 * p) + 14.51


@dataclass(frozen=True)
class Blocking(WaitingFamily):
    """Simple exponential waiting, infinite once the light is always red."""

    name = "blocking"

    def is_infinite(self, p):
        return p >= 1.0

    def slope(self, p):
        return math.expm1(p)


FAMILIES = {cls.name: cls for cls in (Zero, SimpleExponential, SumoFitted, Blocking)}


# --------------------------------------------------------------------------
# light cycles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LightCycle:
    """Red and green durations in seconds, ambers already folded in."""

    t_r: float
    t_g: float

    def __post_init__(self):
        if self.t_r < 0 or self.t_g < 0 or self.t_r + self.t_g <= 0:
            raise CostError(f"invalid cycle (t_r={self.t_r}, t_g={self.t_g})")

    @classmethod
    def from_p(cls, p: float, T: float) -> LightCycle:
        return cls(p * T, (1.0 - p) * T)

    @classmethod
    def from_phases(cls, red: float, green: float, amber: float = 3.0) -> LightCycle:
        """Signal plan with an amber after each phase; each amber counts toward the phase before it."""
        return cls(red + amber, green + amber)

    @property
    def T(self) -> float:
        return self.t_r + self.t_g

    @property
    def p(self) -> float:
        return self.t_r / self.T

    def check_bounds(self, p_min=DEFAULT_P_MIN, p_max=DEFAULT_P_MAX):
        if not p_min <= self.p <= p_max:
            raise CostError(f"red proportion {self.p:.4f} outside [{p_min}, {p_max}]")
        return self


# --------------------------------------------------------------------------
# edge cost
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeCost:
    base: Any = field(default_factory=lambda: Affine(1.0, 0.0))
    waiting: WaitingFamily = field(default_factory=Zero)
    p: float = 0.0

    def __post_init__(self):
        self.waiting.check_p(self.p)

    @property
    def blocked(self) -> bool:
        return self.waiting.is_infinite(self.p)

    def with_p(self, p: float, waiting: WaitingFamily | None = None) -> EdgeCost:
        return EdgeCost(self.base, waiting if waiting is not None else self.waiting, p)

    def affine_coeffs(self):
        """``(slope, intercept)`` of the unclamped cost, or None if not affine."""
        if self.blocked:
            return None
        if isinstance(self.base, Affine):
            a, b = self.base.a, self.base.b
        elif isinstance(self.base, Constant):
            a, b = 0.0, self.base.b
        else:
            return None
        return a + self.waiting.slope(self.p), b + self.waiting.intercept(self.p)

    def to_dict(self):
        out = {"base": self.base.to_dict()}
        if not isinstance(self.waiting, Zero) or self.p:
            out["waiting"] = {"family": self.waiting.name, "p": self.p}
        return out


def eval_cost(ec: EdgeCost, x: float) -> float:
    if x < 0:
        raise CostError(f"negative flow {x}")
    if ec.blocked:
        return math.inf
    return max(0.0, ec.base.value(x) + ec.waiting.value(x, ec.p))


def eval_fitted_journey(x: float, p: float) -> float:
    """Journey time through the simulated junction at congestion ``x``."""
    if not 0.0 <= p < SUMO_P_MAX:
        raise CostError(f"fitted journey cost needs 0 <= p < {SUMO_P_MAX}, got {p}")
    fam = SumoFitted()
    raw = SUMO_BASE_SLOPE * x + SUMO_BASE_INTERCEPT + fam.slope(p) * x + fam.intercept(p)
    return max(0.0, raw)


def _clamped_affine_integral(a, b, f):
    if b >= 0:
        return 0.5 * a * f * f + b * f
    if a <= 0:
        return 0.0
    z0 = -b / a
    return 0.5 * a * (f - z0) ** 2 if f > z0 else 0.0


def integral_cost(ec: EdgeCost, f: float) -> float:
    """``integral_0^f c(z, p) dz``, the edge's term of the Beckmann potential."""
    if f < 0:
        raise CostError(f"negative load {f}")
    if f == 0:
        return 0.0
    if ec.blocked:
        raise CostError("infinite cost on the integration interval")
    coeffs = ec.affine_coeffs()
    if coeffs is not None:
        return _clamped_affine_integral(*coeffs, f)
    val, _ = integrate.quad(lambda z: eval_cost(ec, z), 0.0, f, epsabs=1e-10, epsrel=1e-10, limit=200)
    return val


def marginal_cost(ec: EdgeCost, x: float) -> float:
    """``d/dx [x * c(x, p)]``."""
    if ec.blocked:
        return math.inf
    coeffs = ec.affine_coeffs()
    if coeffs is not None:
        a, b = coeffs
        return 2 * a * x + b if a * x + b > 0 else 0.0
    raw = ec.base.value(x) + ec.waiting.value(x, ec.p)
    deriv = getattr(ec.base, "deriv", None)
    if deriv is not None:
        if raw <= 0:
            return 0.0
        return raw + x * (deriv(x) + ec.waiting.slope(ec.p))
    h = 1e-6 * max(1.0, x)
    lo = max(0.0, x - h)
    return ((x + h) * eval_cost(ec, x + h) - lo * eval_cost(ec, lo)) / (x + h - lo)


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------


def base_from_dict(raw: dict):
    if "affine" in raw:
        a, b = raw["affine"]
        return Affine(float(a), float(b))
    if "constant" in raw:
        return Constant(float(raw["constant"]))
    if "polynomial" in raw:
        return Polynomial(tuple(raw["polynomial"]))
    raise CostError(f"unknown base cost {raw!r}")


def waiting_from_name(name: str) -> WaitingFamily:
    try:
        return FAMILIES[name]()
    except KeyError:
        raise CostError(f"unknown waiting family {name!r}") from None
