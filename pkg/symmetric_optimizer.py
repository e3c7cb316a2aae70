"""
Symmetric minimization of the scale-invariant O'Hara energy S_α.

Projected gradient descent with Armijo backtracking: the gradient is projected
onto the fixed subspace of a cyclic action, stripped of its component along
the curve, smoothed by a Sobolev-type preconditioner along the sample index
and stepped under a bi-Lipschitz floor. Moving samples along the curve only
reparametrizes it, and the discrete energy can be lowered that way by
bunching samples, so descent moves samples across the curve only.

Every resample_every iterations the curve is resampled by arclength, rescaled
to length 1 and symmetrized again. Maintenance is always adopted and resets
the Armijo baseline: S_α never increases between maintenance iterations, and
at a maintenance iteration it moves by the resampling error only.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from curve_geometry import ClosedCurve, CurveValidationError, arclength_resample, bilipschitz_ratio
from curve_symmetry import (
    CyclicAction,
    SymmetryDetection,
    SymmetryError,
    detect_periods,
    is_symmetric,
    procrustes,
    project_field,
    symmetrize,
)
from knot_energy import EnergyParams, GradientField, SingularityError, energy_gradient, scaled_energy
from torus_knots import TorusKnotSpec, admissible_symmetries, symmetric_initializer

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "S_alpha", "E_alpha", "length", "grad_sym_rms", "grad_full_rms", "bilip", "step"]
PRECONDITIONERS = ("sobolev", "none")
PRECONDITIONER_WIDTH = 2.0
MIN_RELATIVE_STEP = 1e-14
PALAIS_RATIO_LIMIT = 10.0
SYMMETRY_TOL = 1e-8


class OptimizationStallError(RuntimeError):
    """No admissible Armijo step exists; carries the trace up to the stall."""

    def __init__(self, message: str, trace: "OptimizationTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OptimizerConfig:
    alpha: float = 2.5
    max_iters: int = 50000
    grad_tol: float = 1e-5
    step_init: float = 1e-2
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    bilip_floor: float = 0.05
    resymmetrize_every: int = 25
    resample_every: int = 25
    n_samples: int = 240
    rho: float = 0.4
    log_every: int = 100
    preconditioner: str = "sobolev"
    neighbor_exclusion: int = 1

    def __post_init__(self):
        if not 2.0 < self.alpha < 3.0:
            raise ValueError(f"alpha must lie in (2, 3), got {self.alpha}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError(f"armijo_c must lie in (0, 1), got {self.armijo_c}")
        if self.grad_tol <= 0.0 or self.step_init <= 0.0:
            raise ValueError("grad_tol and step_init must be positive")
        if not 0.0 <= self.bilip_floor < 1.0:
            raise ValueError(f"bilip_floor must lie in [0, 1), got {self.bilip_floor}")
        if self.resymmetrize_every < 1 or self.resample_every < 1 or self.log_every < 1:
            raise ValueError("maintenance and logging intervals must be positive")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}, got {self.preconditioner!r}")

    def maintenance_at(self, iteration: int, symmetric: bool) -> bool:
        """True when the step numbered `iteration` is followed by resampling or resymmetrizing."""
        if iteration <= 0:
            return False
        if iteration % self.resample_every == 0:
            return True
        return symmetric and iteration % self.resymmetrize_every == 0

    def energy_params(self) -> EnergyParams:
        return EnergyParams(alpha=self.alpha, neighbor_exclusion=self.neighbor_exclusion)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    S_alpha: float
    E_alpha: float
    length: float
    grad_sym_rms: float
    grad_full_rms: float
    bilip: float
    step: float


class OptimizationTrace:
    """Accepted iterates in order; row 0 is the starting curve (step 0)."""

    def __init__(self, records: Optional[List[TraceRecord]] = None):
        self.records: List[TraceRecord] = list(records or [])

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def accepted_steps(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def s_values(self) -> np.ndarray:
        return np.array([rec.S_alpha for rec in self.records])

    def to_frame(self) -> pd.DataFrame:
        if not self.records:
            return pd.DataFrame(columns=TRACE_COLUMNS)
        frame = pd.DataFrame([asdict(rec) for rec in self.records], columns=TRACE_COLUMNS)
        frame["iter"] = frame["iter"].astype(int)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "OptimizationTrace":
        missing = [col for col in TRACE_COLUMNS if col not in frame.columns]
        if missing:
            raise ValueError(f"trace is missing columns {missing}")
        records = [
            TraceRecord(int(row["iter"]), *(float(row[col]) for col in TRACE_COLUMNS[1:]))
            for _, row in frame.iterrows()
        ]
        return cls(records)


@dataclass(frozen=True)
class CriticalityReport:
    """
    Normal gradient norms at a (candidate) critical point, normalized by
    S_α / diameter.

    grad_tol is the tolerance the symmetric norm was driven to; ratio is the
    full norm measured against it. Small ratios mean the symmetric critical
    point is critical for the unrestricted energy as well.
    """

    sym_grad_rms: float
    full_grad_rms: float
    grad_tol: float
    scaled_energy: float
    periods: List[int] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.full_grad_rms / self.grad_tol

    @property
    def palais_ok(self) -> bool:
        return self.ratio <= PALAIS_RATIO_LIMIT

    def to_dict(self) -> dict:
        return {
            "sym_grad_rms": self.sym_grad_rms,
            "full_grad_rms": self.full_grad_rms,
            "grad_tol": self.grad_tol,
            "ratio": self.ratio,
            "palais_ok": self.palais_ok,
            "scaled_energy": self.scaled_energy,
            "periods": list(self.periods),
        }


@dataclass
class OptimizationResult:
    curve: ClosedCurve
    trace: OptimizationTrace
    report: CriticalityReport
    action: Optional[CyclicAction]
    config: OptimizerConfig
    reason: str

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    @property
    def iterations(self) -> int:
        return self.trace.accepted_steps

    def descent_increases(self, rel_tol: float = 1e-12) -> List[int]:
        """Iterations whose S_α rose over the previous row without maintenance in between."""
        symmetric = self.action is not None
        values = self.trace.s_values
        return [
            rec.iter for rec, s_prev, s_now in zip(self.trace.records[1:], values, values[1:])
            if not self.config.maintenance_at(rec.iter, symmetric) and s_now > s_prev * (1.0 + rel_tol)
        ]


def _rms(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.einsum("ij,ij->i", values, values))))


def _project(values: np.ndarray, action: Optional[CyclicAction]) -> np.ndarray:
    return values if action is None else project_field(values, action)


def sobolev_precondition(values: np.ndarray, alpha: float, width: float = PRECONDITIONER_WIDTH) -> np.ndarray:
    """Damp index frequency j by 1 / (1 + (|j| / width)^(α+1)), coordinate by coordinate."""
    n = values.shape[0]
    freq = np.arange(n // 2 + 1, dtype=float)
    multiplier = 1.0 / (1.0 + (freq / width) ** (alpha + 1.0))
    spectrum = np.fft.rfft(values, axis=0) * multiplier[:, None]
    return np.fft.irfft(spectrum, n=n, axis=0)


def strip_tangential(values: np.ndarray, curve: ClosedCurve) -> np.ndarray:
    """Remove from each sample's vector its component along the vertex tangent."""
    tangents = curve.vertex_tangents
    along = np.einsum("ij,ij->i", values, tangents)
    return values - along[:, None] * tangents


def normalized_gradient_norms(curve: ClosedCurve, gradient: GradientField,
                              action: Optional[CyclicAction]) -> tuple:
    """
    (symmetric, full) RMS of the normal part of ∇S_α, scaled by diameter / S_α.

    The tangential part only measures how far the sampling is from the one
    the discrete energy prefers, so it is left out of both norms.
    """
    scale = curve.diameter / gradient.scaled_energy
    normal = strip_tangential(gradient.dS, curve)
    return _rms(_project(normal, action)) * scale, _rms(normal) * scale


def criticality_report(curve: ClosedCurve, action: Optional[CyclicAction], params: EnergyParams,
                       grad_tol: float = 1e-5, m_max: int = 12,
                       symmetry_tol: float = SYMMETRY_TOL) -> CriticalityReport:
    if action is not None and not is_symmetric(curve, action, symmetry_tol)[0]:
        raise SymmetryError(f"curve is not symmetric under m={action.m}, k={action.k} to {symmetry_tol}")
    gradient = energy_gradient(curve, params)
    sym_norm, full_norm = normalized_gradient_norms(curve, gradient, action)
    periods = sorted({det.order for det in detect_periods(curve, m_max=m_max)})
    return CriticalityReport(
        sym_grad_rms=sym_norm,
        full_grad_rms=full_norm,
        grad_tol=grad_tol,
        scaled_energy=gradient.scaled_energy,
        periods=periods,
    )


class _Descent:
    """State of one minimization run."""

    def __init__(self, curve: ClosedCurve, action: Optional[CyclicAction], config: OptimizerConfig):
        self.action = action
        self.config = config
        self.params = config.energy_params()
        self.n = curve.n
        self.trace = OptimizationTrace()
        self.curve = self.normalized(curve)
        self.gradient = energy_gradient(self.curve, self.params)
        self.step = config.step_init * self.curve.diameter
        self.current_s = self.gradient.scaled_energy

    def normalized(self, curve: ClosedCurve) -> ClosedCurve:
        if self.action is None:
            curve = curve.centered()
        else:
            curve = symmetrize(curve, self.action)
        return curve.rescaled_to_length(1.0)

    def record(self, iteration: int, step: float) -> TraceRecord:
        sym_norm, full_norm = normalized_gradient_norms(self.curve, self.gradient, self.action)
        rec = TraceRecord(
            iter=iteration,
            S_alpha=self.gradient.scaled_energy,
            E_alpha=self.gradient.energy,
            length=self.curve.length,
            grad_sym_rms=sym_norm,
            grad_full_rms=full_norm,
            bilip=bilipschitz_ratio(self.curve),
            step=step,
        )
        self.trace.append(rec)
        return rec

    def direction(self) -> np.ndarray:
        descent = -_project(strip_tangential(self.gradient.dS, self.curve), self.action)
        if self.config.preconditioner == "sobolev":
            smoothed = sobolev_precondition(descent, self.params.alpha)
            descent = _project(strip_tangential(smoothed, self.curve), self.action)
        return descent

    def _admissible(self, points: np.ndarray) -> Optional[tuple]:
        try:
            trial = ClosedCurve(points)
        except CurveValidationError:
            return None
        if bilipschitz_ratio(trial) < self.config.bilip_floor:
            return None
        try:
            return trial, scaled_energy(trial, self.params)
        except SingularityError:
            return None

    def line_search(self) -> Optional[float]:
        """Armijo backtracking; step is the largest sample displacement. Returns the step taken."""
        descent = self.direction()
        largest = float(np.max(np.linalg.norm(descent, axis=1)))
        if largest == 0.0:
            return None
        slope = float(np.sum(self.gradient.dS * descent)) / largest
        current = self.current_s
        floor = MIN_RELATIVE_STEP * self.curve.diameter
        step = self.step
        while step >= floor:
            outcome = self._admissible(self.curve.points + (step / largest) * descent)
            if outcome is not None:
                trial, trial_s = outcome
                if trial_s <= current + self.config.armijo_c * step * slope:
                    self.curve = trial
                    self.current_s = trial_s
                    self.step = min(step / self.config.backtrack_factor, self.config.step_init * trial.diameter)
                    return step
            step *= self.config.backtrack_factor
        return None

    def try_maintenance(self, resample: bool, keep_monotone: bool = False) -> bool:
        """
        Resample (optionally), rescale and resymmetrize, then restart the
        Armijo baseline from the new S_α. Skipped when the result leaves the
        admissible set, or raises S_α while keep_monotone is set.
        """
        candidate = self.curve
        try:
            if resample:
                candidate = arclength_resample(candidate, self.n)
            candidate = self.normalized(candidate)
        except CurveValidationError as exc:
            logger.warning(f"[OPT] maintenance skipped: {exc}")
            return False
        outcome = self._admissible(candidate.points)
        if outcome is None:
            logger.warning("[OPT] maintenance skipped: result is not admissible")
            return False
        if keep_monotone and outcome[1] > self.current_s:
            return False
        if outcome[1] > self.current_s:
            logger.debug(f"[OPT] maintenance raised S by {outcome[1] - self.current_s:.3e}")
        self.curve, self.current_s = outcome
        return True

    def refresh(self) -> None:
        self.gradient = energy_gradient(self.curve, self.params)


def minimize_curve(curve: ClosedCurve, action: Optional[CyclicAction], config: OptimizerConfig) -> OptimizationResult:
    """
    Descend S_α from `curve`, restricted to curves fixed by `action` when given.

    Stops when the normalized symmetric gradient RMS drops to grad_tol
    ("converged") or after max_iters accepted steps ("max_iters"). Raises
    OptimizationStallError when no admissible step remains even after an
    arclength resample.
    """
    if action is not None:
        action.check_samples(curve.n)
    state = _Descent(curve, action, config)
    rec = state.record(0, 0.0)
    logger.info(f"[OPT] start n={state.n} alpha={config.alpha} S={rec.S_alpha:.10g} bilip={rec.bilip:.4g}")

    reason = "max_iters"
    iteration = 0
    rescued = False
    while True:
        if rec.grad_sym_rms <= config.grad_tol:
            reason = "converged"
            break
        if iteration >= config.max_iters:
            break
        step = state.line_search()
        if step is None:
            if not rescued and state.try_maintenance(resample=True, keep_monotone=True):
                rescued = True
                state.step = config.step_init * state.curve.diameter
                state.refresh()
                continue
            raise OptimizationStallError(
                f"no admissible step after {iteration} iterations (S={rec.S_alpha:.10g})", state.trace
            )
        rescued = False
        iteration += 1
        if config.maintenance_at(iteration, symmetric=action is not None):
            state.try_maintenance(resample=iteration % config.resample_every == 0)
        state.refresh()
        rec = state.record(iteration, step)
        if iteration % config.log_every == 0:
            logger.info(
                f"[OPT] iter={iteration} S={rec.S_alpha:.10g} grad_sym={rec.grad_sym_rms:.3e} "
                f"grad_full={rec.grad_full_rms:.3e} bilip={rec.bilip:.4g} step={step:.3e}"
            )

    final = state.normalized(state.curve)
    report = criticality_report(final, action, state.params, grad_tol=config.grad_tol)
    logger.info(
        f"[OPT] {reason} after {iteration} steps: S={report.scaled_energy:.10g} "
        f"grad_sym={report.sym_grad_rms:.3e} ratio={report.ratio:.3g} periods={report.periods}"
    )
    return OptimizationResult(curve=final, trace=state.trace, report=report, action=action, config=config, reason=reason)


def minimize_symmetric(spec: TorusKnotSpec, m: int, config: OptimizerConfig) -> OptimizationResult:
    """Minimize S_α over curves of the knot class of `spec` fixed by the period-m action."""
    if m not in {sym.m for sym in admissible_symmetries(spec)}:
        raise SymmetryError(f"m={m} divides neither |a| nor |b| of {spec.label()}")
    if config.n_samples % m:
        raise SymmetryError(f"n_samples={config.n_samples} is not divisible by m={m}")
    curve, action = symmetric_initializer(spec, m, config.n_samples)
    return minimize_curve(curve, action, config)


# -- comparing minimizers ----------------------------------------------------


@dataclass
class ComparisonVerdict:
    """
    verdict: "isometric", "mirror" or "distinct".
    decided_by: "energy" when the S_α gap settled it, "alignment" otherwise.
    """

    verdict: str
    decided_by: str
    energies: tuple
    proper_residual: Optional[float]
    mirror_residual: Optional[float]
    periods: tuple

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "decided_by": self.decided_by,
            "energies": list(self.energies),
            "proper_residual": self.proper_residual,
            "mirror_residual": self.mirror_residual,
            "periods": [list(p) for p in self.periods],
        }


def best_alignment(first: ClosedCurve, second: ClosedCurve, det_sign: int = 1) -> float:
    """
    Smallest rms / diameter over index shifts, both orientations and rigid
    motions with det = det_sign that carry `second` onto `first`.
    """
    target = first.points - first.centroid
    best = np.inf
    for candidate in (second, second.reversed()):
        source = candidate.points - candidate.centroid
        for shift in range(candidate.n):
            _, rms = procrustes(np.roll(source, -shift, axis=0), target, det_sign=det_sign)
            best = min(best, rms)
    return float(best / first.diameter)


def _signature(detections: List[SymmetryDetection]) -> tuple:
    return tuple(sorted({det.order for det in detections}))


def compare_minimizers(first: ClosedCurve, second: ClosedCurve, params: EnergyParams,
                       energy_tol: float = 1e-3, align_tol: float = 1e-4, m_max: int = 12) -> ComparisonVerdict:
    first = first.centered().rescaled_to_length(1.0)
    second = second.centered().rescaled_to_length(1.0)
    if second.n != first.n:
        second = arclength_resample(second, first.n)
    energies = (scaled_energy(first, params), scaled_energy(second, params))
    periods = (_signature(detect_periods(first, m_max)), _signature(detect_periods(second, m_max)))
    gap = abs(energies[0] - energies[1]) / max(energies)
    if gap > energy_tol:
        logger.info(f"[OPT] distinct by energy: relative gap {gap:.3e}")
        return ComparisonVerdict("distinct", "energy", energies, None, None, periods)

    proper = best_alignment(first, second, det_sign=1)
    mirror = best_alignment(first, second, det_sign=-1)
    if proper <= align_tol:
        verdict = "isometric"
    elif mirror <= align_tol:
        verdict = "mirror"
    else:
        verdict = "distinct"
    logger.info(f"[OPT] {verdict} by alignment: proper {proper:.3e}, mirror {mirror:.3e}")
    return ComparisonVerdict(verdict, "alignment", energies, proper, mirror, periods)
