"""
Discrete O'Hara energies E_α (2 < α < 3) on closed polylines.

    E_α ≈ Σ_{i≠j, |i-j|_N > n_ex} (|x_i - x_j|^-α - D(i,j)^-α) w_i w_j

with D the shorter polyline arc and w_i the averaged adjacent edge length.
S_α = L^(α-2) E_α is the scale-invariant version that the optimizer descends.
Row blocks of 64 are evaluated (optionally) on a thread pool and reduced in
block order, so results do not depend on the worker count.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from curve_geometry import (
    ClosedCurve,
    CurveValidationError,
    bilipschitz_ratio,
    riemann_zeta,
    sobolev_seminorm,
)

logger = logging.getLogger(__name__)

ROW_BLOCK = 64
THREADS_ENV = "SYMKNOT_THREADS"
ARC_TIE_TOL = 1e-12

ORACLE_TOL = 1e-8
ORACLE_MAX_REFINEMENTS = 8
ORACLE_NODES_PER_PANEL = 8

# Constant of the elementary inequality behind the seminorm bound: 4^3 * 2^(2-2α).
SEMINORM_BOUND_BASE = 64.0


class SingularityError(ValueError):
    """Two non-excluded samples coincide, so the pair term is infinite."""

    def __init__(self, message: str, pair=None):
        super().__init__(message)
        self.pair = pair


class OracleConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnergyParams:
    """
    alpha: energy exponent, 2 < α < 3.
    neighbor_exclusion: pairs with cyclic index separation <= this are skipped.
    oracle_quad_points: starting panel count of the circle quadrature.
    diagonal_correction: add the near-diagonal cells back in (values only).
    mobius_allowed: admit α = 2, which only the circle oracle accepts.
    """

    alpha: float
    neighbor_exclusion: int = 1
    oracle_quad_points: int = 4096
    diagonal_correction: bool = False
    mobius_allowed: bool = False

    def __post_init__(self):
        low_ok = self.alpha >= 2.0 if self.mobius_allowed else self.alpha > 2.0
        if not (low_ok and self.alpha < 3.0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must lie in (2, 3), got {self.alpha}")
        if self.neighbor_exclusion < 1:
            raise ValueError(f"neighbor_exclusion must be >= 1, got {self.neighbor_exclusion}")
        if self.oracle_quad_points < 1:
            raise ValueError(f"oracle_quad_points must be positive, got {self.oracle_quad_points}")

    def require_energy_range(self) -> None:
        if self.alpha <= 2.0:
            raise ValueError("alpha = 2 is only admitted by the circle oracle")


@dataclass(frozen=True)
class GradientField:
    """Per-sample gradients of S_α (dS) and E_α (dE), both (N, 3)."""

    dS: np.ndarray
    dE: np.ndarray
    scaled_energy: float
    energy: float
    length: float

    @property
    def n(self) -> int:
        return self.dS.shape[0]


def worker_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threads


def _row_blocks(n: int) -> List[np.ndarray]:
    return [np.arange(start, min(start + ROW_BLOCK, n)) for start in range(0, n, ROW_BLOCK)]


def _map_blocks(fn, blocks) -> Iterator:
    threads = worker_threads()
    if threads == 1 or len(blocks) == 1:
        return map(fn, blocks)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map() yields in submission order
        return iter(list(pool.map(fn, blocks)))


@dataclass
class _BlockResult:
    energy: float
    rows: np.ndarray
    grad_rows: Optional[np.ndarray] = None
    weight_grad_rows: Optional[np.ndarray] = None
    arc_marks: Optional[np.ndarray] = None
    terms: Optional[np.ndarray] = field(default=None, repr=False)


def _pair_block(curve: ClosedCurve, params: EnergyParams, rows: np.ndarray,
                with_gradient: bool, keep_terms: bool = False) -> _BlockResult:
    pts = curve.points
    n = curve.n
    total = curve.length
    alpha = params.alpha
    cols = np.arange(n)

    offset = (cols[None, :] - rows[:, None]) % n
    separation = np.minimum(offset, n - offset)
    active = separation > params.neighbor_exclusion

    diff = pts[rows][:, None, :] - pts[None, :, :]
    chord = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    hit = active & (chord == 0.0)
    if np.any(hit):
        r, c = np.argwhere(hit)[0]
        pair = (int(rows[r]), int(c))
        raise SingularityError(f"samples {pair[0]} and {pair[1]} coincide", pair=pair)

    cum = curve.cumulative_arclength[:-1]
    arc = cum[None, :] - cum[rows][:, None]
    arc = np.where(arc < 0.0, arc + total, arc)
    back = total - arc
    # ties (antipodal samples) go forward whatever the rounding in cum
    forward = arc <= back + ARC_TIE_TOL * total
    dist = np.where(forward, arc, back)

    safe_chord = np.where(active, chord, 1.0)
    safe_dist = np.where(active, dist, 1.0)
    chord_pow = safe_chord ** -alpha
    dist_pow = safe_dist ** -alpha
    terms = np.where(active, chord_pow - dist_pow, 0.0)

    weights = curve.vertex_weights
    pair_weights = weights[rows][:, None] * weights[None, :]
    weighted = terms * pair_weights
    result = _BlockResult(energy=float(np.sum(weighted)), rows=rows)
    if keep_terms:
        result.terms = weighted
    if not with_gradient:
        return result

    # chord part; ordered pairs count each unordered pair twice
    chord_coef = np.where(active, -2.0 * alpha * chord_pow / safe_chord**2 * pair_weights, 0.0)
    result.grad_rows = np.einsum("ij,ijk->ik", chord_coef, diff)
    result.weight_grad_rows = 2.0 * terms @ weights

    # intrinsic part: D is a sum of edge lengths along the chosen arc
    dist_coef = np.where(active, alpha * dist_pow / safe_dist * pair_weights, 0.0)
    starts = np.where(forward, rows[:, None], cols[None, :])
    ends = starts + np.where(forward, offset, n - offset)
    marks = np.bincount(starts.ravel(), dist_coef.ravel(), minlength=n + 1)
    marks -= np.bincount(np.minimum(ends, n).ravel(), dist_coef.ravel(), minlength=n + 1)
    wrapped = ends > n
    if np.any(wrapped):
        marks[0] += float(np.sum(dist_coef[wrapped]))
        marks -= np.bincount(ends[wrapped] - n, dist_coef[wrapped], minlength=n + 1)
    result.arc_marks = marks
    return result


def _evaluate(curve: ClosedCurve, params: EnergyParams, with_gradient: bool,
              keep_terms: bool = False) -> List[_BlockResult]:
    blocks = _row_blocks(curve.n)
    return list(_map_blocks(lambda rows: _pair_block(curve, params, rows, with_gradient, keep_terms), blocks))


def _raw_energy(results: List[_BlockResult]) -> float:
    energy = 0.0
    for res in results:
        energy += res.energy
    return energy


def near_diagonal_correction(curve: ClosedCurve, params: EnergyParams) -> float:
    """
    Leading-order estimate of the cells the pair sum leaves out near i = j.

    For a smooth curve with curvature κ the discrete row sum undershoots the
    integral by (α κ² / 12) h^(3-α) Z with
    Z = ζ(α) - ζ(α-2) + Σ_{k<=n_ex} (k^(2-α) - k^(-α)).
    """
    alpha = params.alpha
    ks = np.arange(1, params.neighbor_exclusion + 1, dtype=float)
    z = (
        riemann_zeta(alpha)
        - riemann_zeta(alpha - 2.0)
        + float(np.sum(ks ** (2.0 - alpha) - ks ** -alpha))
    )
    weights = curve.vertex_weights
    kappa = curve.turning_angles / weights
    return float(np.sum(weights * alpha * kappa**2 / 12.0 * weights ** (3.0 - alpha))) * z


def ohara_energy(curve: ClosedCurve, params: EnergyParams) -> float:
    params.require_energy_range()
    energy = _raw_energy(_evaluate(curve, params, with_gradient=False))
    if params.diagonal_correction:
        energy += near_diagonal_correction(curve, params)
    return energy


def scaled_energy(curve: ClosedCurve, params: EnergyParams) -> float:
    return curve.length ** (params.alpha - 2.0) * ohara_energy(curve, params)


def pair_terms(curve: ClosedCurve, params: EnergyParams) -> np.ndarray:
    """Weighted pair contributions as an (N, N) matrix; zeros on excluded pairs."""
    params.require_energy_range()
    results = _evaluate(curve, params, with_gradient=False, keep_terms=True)
    return np.vstack([res.terms for res in results])


def energy_gradient(curve: ClosedCurve, params: EnergyParams) -> GradientField:
    """Exact gradients of E_α and S_α with respect to every sample."""
    params.require_energy_range()
    if params.diagonal_correction:
        raise ValueError("the near-diagonal correction is for energy values only; gradients use the raw pair sum")
    n = curve.n
    results = _evaluate(curve, params, with_gradient=True)

    energy = 0.0
    chord_grad = np.empty((n, 3))
    weight_grad = np.empty(n)
    marks = np.zeros(n + 1)
    for res in results:
        energy += res.energy
        chord_grad[res.rows] = res.grad_rows
        weight_grad[res.rows] = res.weight_grad_rows
        marks += res.arc_marks

    # w_i = (l_{i-1} + l_i) / 2, so edge e feeds w_e and w_{e+1}
    edge_grad = np.cumsum(marks)[:n] + 0.5 * (weight_grad + np.roll(weight_grad, -1))
    tangents = curve.edge_tangents
    along = edge_grad[:, None] * tangents
    d_energy = chord_grad + np.roll(along, 1, axis=0) - along
    d_length = np.roll(tangents, 1, axis=0) - tangents

    alpha = params.alpha
    total = curve.length
    d_scaled = total ** (alpha - 2.0) * d_energy + (alpha - 2.0) * total ** (alpha - 3.0) * energy * d_length
    scaled = total ** (alpha - 2.0) * energy
    logger.debug(f"[ENERGY] n={n} alpha={alpha} E={energy:.12g} S={scaled:.12g}")
    return GradientField(dS=d_scaled, dE=d_energy, scaled_energy=scaled, energy=energy, length=total)


# -- circle reference value --------------------------------------------------


def _log_sinc(x: np.ndarray) -> np.ndarray:
    x2 = x * x
    series = -x2 * (1 / 6 + x2 * (1 / 180 + x2 * (1 / 2835 + x2 * (1 / 37800 + x2 / 467775))))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.log(np.sin(x) / x)
    return np.where(x < 0.2, series, direct)


def _circle_integrand(u: np.ndarray, alpha: float) -> np.ndarray:
    # w = u^β / 2 flattens the w^(2-α) cusp at the diagonal
    beta = 2.0 / (3.0 - alpha)
    w = 0.5 * u**beta
    excess = np.expm1(-alpha * _log_sinc(np.pi * w)) * w**-alpha
    return excess * 0.5 * beta * u ** (beta - 1.0)


def _composite_gauss(panels: int, alpha: float) -> float:
    nodes, gauss_weights = leggauss(ORACLE_NODES_PER_PANEL)
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    u = mid[:, None] + half[:, None] * nodes[None, :]
    values = _circle_integrand(u, alpha)
    return float(np.sum(values @ gauss_weights * half))


def circle_energy_oracle(params: EnergyParams) -> float:
    """
    E_α of the round circle of length 1 (arclength parametrized):

        E_α = 2 ∫_0^{1/2} [(sin(πw)/π)^-α - w^-α] dw

    Panels double until two successive values agree to 1e-8 relative.
    At α = 2 (mobius_allowed) the value is 4.
    """
    alpha = params.alpha
    panels = params.oracle_quad_points
    previous = 2.0 * _composite_gauss(panels, alpha)
    for _ in range(ORACLE_MAX_REFINEMENTS):
        panels *= 2
        current = 2.0 * _composite_gauss(panels, alpha)
        if abs(current - previous) <= ORACLE_TOL * abs(current):
            logger.debug(f"[ENERGY] circle oracle alpha={alpha} value={current:.15g} panels={panels}")
            return current
        previous = current
    raise OracleConvergenceError(
        f"circle quadrature did not settle to {ORACLE_TOL} after {ORACLE_MAX_REFINEMENTS} refinements (alpha={alpha})"
    )


# -- a priori bounds -----------------------------------------------------------


def apriori_bilip_bound(energy_bound: float, params: EnergyParams) -> float:
    """Lower bound on the bi-Lipschitz ratio of any curve with E_α <= energy_bound."""
    if energy_bound < 0.0:
        raise ValueError(f"energy bound must be non-negative, got {energy_bound}")
    alpha = params.alpha
    exponent = -energy_bound / (1.0 - (2.0 / 3.0) ** alpha)
    return float(min(0.25, np.exp(exponent) / 16.0))


@dataclass(frozen=True)
class AprioriReport:
    energy: float
    bound: float
    bilip_ratio: float

    @property
    def holds(self) -> bool:
        return self.bilip_ratio >= self.bound


def apriori_check(curve: ClosedCurve, params: EnergyParams) -> AprioriReport:
    """Compare a length-1 curve's bi-Lipschitz ratio against the energy-based bound."""
    if abs(curve.length - 1.0) > 1e-9:
        curve = curve.rescaled_to_length(1.0)
    energy = ohara_energy(curve, params)
    return AprioriReport(energy=energy, bound=apriori_bilip_bound(energy, params), bilip_ratio=bilipschitz_ratio(curve))


def elementary_power_bound(x, alpha: float) -> bool:
    """1 - x^α <= (α+1)(1-x) on [0, 1], the pointwise step of the seminorm bound."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("x must lie in [0, 1]")
    return bool(np.all(1.0 - x**alpha <= (alpha + 1.0) * (1.0 - x)))


@dataclass(frozen=True)
class SeminormEnergyReport:
    left: float
    right: float
    slack: float

    @property
    def ratio(self) -> float:
        return self.left / self.right if self.right > 0.0 else float("inf")

    @property
    def passed(self) -> bool:
        return self.left <= (1.0 + self.slack) * self.right

    def to_dict(self) -> dict:
        return {"left": self.left, "right": self.right, "ratio": self.ratio, "slack": self.slack, "passed": self.passed}


def seminorm_energy_check(curve: ClosedCurve, params: EnergyParams, slack: float = 0.05) -> SeminormEnergyReport:
    """
    Check [Γ']²_{(α-1)/2, 2} <= 4³ 2^(2-2α) E_α on an arclength-uniform polyline.

    Both sides share the near-diagonal treatment chosen by
    params.diagonal_correction.
    """
    if not curve.is_arclength_uniform():
        raise CurveValidationError("seminorm check needs an arclength-uniform curve; resample first")
    alpha = params.alpha
    seminorm = sobolev_seminorm(curve, (alpha - 1.0) / 2.0, diagonal_correction=params.diagonal_correction)
    right = SEMINORM_BOUND_BASE * 2.0 ** (2.0 - 2.0 * alpha) * ohara_energy(curve, params)
    report = SeminormEnergyReport(left=seminorm**2, right=right, slack=slack)
    if not report.passed:
        logger.warning(f"[ENERGY] seminorm bound fails at alpha={alpha}: {report.left:.6g} > {report.right:.6g}")
    return report
