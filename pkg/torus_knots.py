"""
Torus knots T(a, b) on a standard torus and their admissible cyclic symmetries.

    γ_ρ(a, b)(t) = ((1 + ρ cos 2πbt) cos 2πat,
                    (1 + ρ cos 2πbt) sin 2πat,
                     ρ sin 2πbt)

winds a times around the z-axis and b times around the core circle, so its
image is b-fold rotationally symmetric about z.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from curve_geometry import ClosedCurve
from curve_symmetry import CyclicAction, SymmetryError

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.4
SAMPLES_PER_WIND = 8


class TorusSpecError(ValueError):
    pass


@dataclass(frozen=True)
class TorusKnotSpec:
    a: int
    b: int
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        if abs(self.a) < 2 or abs(self.b) < 2:
            raise TorusSpecError(f"need |a|, |b| >= 2, got a={self.a}, b={self.b}")
        if math.gcd(self.a, self.b) != 1:
            raise TorusSpecError(f"a={self.a} and b={self.b} are not coprime")
        if not 0.0 < self.rho < 1.0:
            raise TorusSpecError(f"rho must lie in (0, 1), got {self.rho}")

    @property
    def sum_product_gcd(self) -> int:
        return math.gcd(self.a + self.b, self.a * self.b)

    @property
    def min_samples(self) -> int:
        return SAMPLES_PER_WIND * max(abs(self.a), abs(self.b))

    def swapped(self) -> "TorusKnotSpec":
        return TorusKnotSpec(self.b, self.a, self.rho)

    def label(self) -> str:
        return f"T({self.a},{self.b})"


@dataclass(frozen=True)
class AdmissibleSymmetry:
    """A cyclic period m of T(a, b) with its index shift k and the parameter it divides."""

    m: int
    k: int
    divides: str

    @property
    def action(self) -> CyclicAction:
        return CyclicAction(self.m, self.k)

    def to_dict(self) -> dict:
        return {"m": self.m, "k": self.k, "divides": self.divides}


def validate_torus_spec(a: int, b: int, rho: float = DEFAULT_RHO) -> TorusKnotSpec:
    spec = TorusKnotSpec(a, b, rho)
    # coprime a, b forces gcd(a + b, ab) = 1; the combined period relies on it
    if spec.sum_product_gcd != 1:
        raise TorusSpecError(f"gcd(a+b, ab) = {spec.sum_product_gcd} for {spec.label()}")
    logger.debug(f"[SYM] {spec.label()} rho={rho}: gcd(a+b, ab) = 1")
    return spec


def torus_knot_at(a: int, b: int, rho: float, t) -> np.ndarray:
    """Points of γ_ρ(a, b) at parameter values t (any real numbers, period 1)."""
    t = np.asarray(t, dtype=float)
    around = 2.0 * np.pi * a * t
    tube = 2.0 * np.pi * b * t
    radial = 1.0 + rho * np.cos(tube)
    return np.column_stack((radial * np.cos(around), radial * np.sin(around), rho * np.sin(tube)))


def torus_knot_points(a: int, b: int, rho: float, n: int) -> np.ndarray:
    return torus_knot_at(a, b, rho, np.arange(n) / n)


def torus_knot_curve(spec: TorusKnotSpec, n: int) -> ClosedCurve:
    if n < spec.min_samples:
        raise TorusSpecError(f"{spec.label()} needs n >= {spec.min_samples}, got {n}")
    return ClosedCurve(torus_knot_points(spec.a, spec.b, spec.rho, n))


def _divisors(value: int) -> List[int]:
    value = abs(value)
    return [d for d in range(2, value + 1) if value % d == 0]


def solve_shift_parameter(a: int, b: int, m: int) -> int:
    """
    k in [0, m) with τ_l γ_ρ(a, b) = γ_ρ(a, b) when m | b, or the same for
    γ_ρ(b, a) when m | a: k = -a^{-1} (resp. -b^{-1}) mod m.
    """
    if m < 2:
        raise TorusSpecError(f"m must be >= 2, got {m}")
    if b % m == 0:
        unit = a
    elif a % m == 0:
        unit = b
    else:
        raise TorusSpecError(f"m={m} divides neither a={a} nor b={b}")
    return (-pow(unit % m, -1, m)) % m


def admissible_symmetries(spec: TorusKnotSpec) -> List[AdmissibleSymmetry]:
    """
    Every period m > 1 dividing |a| or |b|. Since a and b are coprime no m
    divides both; listing is by increasing m.
    """
    found = [AdmissibleSymmetry(m, solve_shift_parameter(spec.a, spec.b, m), "a") for m in _divisors(spec.a)]
    found += [AdmissibleSymmetry(m, solve_shift_parameter(spec.a, spec.b, m), "b") for m in _divisors(spec.b)]
    return sorted(found, key=lambda sym: sym.m)


def allowed_periods(spec: TorusKnotSpec) -> List[int]:
    return [sym.m for sym in admissible_symmetries(spec)]


def combined_period_shift(a: int, b: int) -> int:
    """k with k(a + b) ≡ 1 (mod |ab|): the shift of the joint period |ab| of T(a, b)."""
    modulus = abs(a * b)
    if math.gcd(a + b, modulus) != 1:
        raise TorusSpecError(f"a+b={a + b} is not invertible modulo {modulus}")
    return pow((a + b) % modulus, -1, modulus)


def symmetric_initializer(spec: TorusKnotSpec, m: int, n: int) -> Tuple[ClosedCurve, CyclicAction]:
    """
    Torus-knot start curve fixed by the Z/m action for period m.

    For m | b the curve is γ_ρ(a, b); for m | a it is γ_ρ(b, a), whose image
    is a-fold symmetric about the z-axis. Both represent the same knot class.
    """
    if n % m:
        raise SymmetryError(f"n={n} is not divisible by m={m}")
    k = solve_shift_parameter(spec.a, spec.b, m)
    if spec.b % m == 0:
        curve = torus_knot_curve(spec, n)
    else:
        curve = torus_knot_curve(spec.swapped(), n)
    logger.info(f"[SYM] {spec.label()} initializer: m={m} k={k} n={n}")
    return curve, CyclicAction(m, k)


def ellipse_curve(semi_major: float, semi_minor: float, n: int) -> ClosedCurve:
    """Planar ellipse sampled uniformly in the angle parameter."""
    if semi_major <= 0.0 or semi_minor <= 0.0:
        raise ValueError("ellipse semi-axes must be positive")
    t = 2.0 * np.pi * np.arange(n) / n
    return ClosedCurve(np.column_stack((semi_major * np.cos(t), semi_minor * np.sin(t), np.zeros(n))))


def regular_polygon(n: int, radius: float = 1.0) -> ClosedCurve:
    return ellipse_curve(radius, radius, n)
