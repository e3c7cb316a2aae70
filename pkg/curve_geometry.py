"""
Discrete closed curves for knot-energy work.

A curve is a periodic polyline sampled at t_i = i/N: sample N-1 connects back
to sample 0. Everything here is a pure function of an immutable ClosedCurve:
lengths, intrinsic (shorter-arc) distances, arclength resampling, the
bi-Lipschitz ratio and the fractional Sobolev seminorm of the unit tangent.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist
from scipy.special import zetac

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4
UNIFORM_SPREAD_TOL = 0.01
# smallest relative tolerance brentq accepts
BRENTQ_RTOL = 4.0 * np.finfo(float).eps


class CurveValidationError(ValueError):
    """Rejected curve data; `index` names the offending sample when known."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class ClosedCurve:
    """
    N ordered samples of a closed curve in 3-space with derived edge tables.

    Edge i runs from points[i] to points[(i+1) % N]. cumulative_arclength has
    N+1 entries, starting at 0 and ending at the total length L.
    """

    __slots__ = ("_points", "_edges", "_edge_lengths", "_cumulative")

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise CurveValidationError(f"expected an (N, 3) array of points, got shape {pts.shape}")
        n = pts.shape[0]
        if n < MIN_SAMPLES:
            raise CurveValidationError(f"a closed curve needs at least {MIN_SAMPLES} samples, got {n}")
        finite = np.all(np.isfinite(pts), axis=1)
        if not np.all(finite):
            bad = int(np.flatnonzero(~finite)[0])
            raise CurveValidationError(f"non-finite coordinates at index {bad}", index=bad)

        edges = np.roll(pts, -1, axis=0) - pts
        lengths = np.sqrt(np.einsum("ij,ij->i", edges, edges))
        degenerate = np.flatnonzero(lengths <= 0.0)
        if degenerate.size:
            bad = int(degenerate[0])
            raise CurveValidationError(
                f"repeated consecutive points at index {bad} (points[{bad}] == points[{(bad + 1) % n}])",
                index=bad,
            )
        cumulative = np.concatenate(([0.0], np.cumsum(lengths)))

        for arr in (pts, edges, lengths, cumulative):
            arr.setflags(write=False)
        self._points = pts
        self._edges = edges
        self._edge_lengths = lengths
        self._cumulative = cumulative

    # -- derived tables ---------------------------------------------------

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def edges(self) -> np.ndarray:
        return self._edges

    @property
    def edge_lengths(self) -> np.ndarray:
        return self._edge_lengths

    @property
    def cumulative_arclength(self) -> np.ndarray:
        return self._cumulative

    @property
    def length(self) -> float:
        return float(self._cumulative[-1])

    @property
    def centroid(self) -> np.ndarray:
        return self._points.mean(axis=0)

    @property
    def diameter(self) -> float:
        return float(pdist(self._points).max())

    @property
    def vertex_weights(self) -> np.ndarray:
        """w_i = (|e_{i-1}| + |e_i|) / 2, the discrete |γ'(u)| du."""
        return 0.5 * (np.roll(self._edge_lengths, 1) + self._edge_lengths)

    @property
    def edge_tangents(self) -> np.ndarray:
        return self._edges / self._edge_lengths[:, None]

    @property
    def vertex_tangents(self) -> np.ndarray:
        """Unit bisector of the two edge tangents at each vertex; zero at a cusp."""
        bisector = np.roll(self.edge_tangents, 1, axis=0) + self.edge_tangents
        norms = np.linalg.norm(bisector, axis=1)
        out = np.zeros_like(bisector)
        np.divide(bisector, norms[:, None], out=out, where=norms[:, None] > 0.0)
        return out

    @property
    def turning_angles(self) -> np.ndarray:
        """Angle at vertex i between edge i-1 and edge i."""
        t_prev = np.roll(self.edge_tangents, 1, axis=0)
        t_next = self.edge_tangents
        cross = np.linalg.norm(np.cross(t_prev, t_next), axis=1)
        dot = np.einsum("ij,ij->i", t_prev, t_next)
        return np.arctan2(cross, dot)

    def edge_spread(self) -> float:
        lengths = self._edge_lengths
        return float((lengths.max() - lengths.min()) / lengths.mean())

    def is_arclength_uniform(self, tol: float = UNIFORM_SPREAD_TOL) -> bool:
        return self.edge_spread() < tol

    # -- new curves -------------------------------------------------------

    def scaled(self, factor: float, center=None) -> "ClosedCurve":
        origin = np.zeros(3) if center is None else np.asarray(center, dtype=float)
        return ClosedCurve(origin + factor * (self._points - origin))

    def rescaled_to_length(self, target: float = 1.0, center=None) -> "ClosedCurve":
        return self.scaled(target / self.length, center=center)

    def translated(self, offset) -> "ClosedCurve":
        return ClosedCurve(self._points + np.asarray(offset, dtype=float))

    def centered(self) -> "ClosedCurve":
        return self.translated(-self.centroid)

    def transformed(self, rotation, translation=None) -> "ClosedCurve":
        moved = self._points @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            moved = moved + np.asarray(translation, dtype=float)
        return ClosedCurve(moved)

    def shifted(self, shift: int) -> "ClosedCurve":
        """Cyclic index shift: new point i is old point (i + shift) mod N."""
        return ClosedCurve(np.roll(self._points, -int(shift), axis=0))

    def reversed(self) -> "ClosedCurve":
        """Orientation flip keeping sample 0 in place."""
        return ClosedCurve(np.roll(self._points[::-1], 1, axis=0))

    def __repr__(self) -> str:
        return f"ClosedCurve(n={self.n}, length={self.length:.6g})"


@dataclass(frozen=True)
class CurveStats:
    length: float
    min_edge: float
    max_edge: float
    bilip_ratio: float
    diameter: float

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "min_edge": self.min_edge,
            "max_edge": self.max_edge,
            "bilip_ratio": self.bilip_ratio,
            "diameter": self.diameter,
        }


@dataclass(frozen=True)
class ArclengthRegularity:
    """c = min speed, C = max speed of the t-parametrization, B = 1 / bilip ratio."""

    min_speed: float
    max_speed: float
    bilip_constant: float


def polyline_length(curve: ClosedCurve) -> float:
    return curve.length


def _check_index(curve: ClosedCurve, idx: int) -> int:
    if not 0 <= idx < curve.n:
        raise IndexError(f"sample index {idx} outside [0, {curve.n})")
    return int(idx)


def intrinsic_distance(curve: ClosedCurve, i: int, j: int) -> float:
    """Length of the shorter polyline arc joining samples i and j."""
    i = _check_index(curve, i)
    j = _check_index(curve, j)
    cum = curve.cumulative_arclength
    arc = abs(cum[j] - cum[i])
    return float(min(arc, curve.length - arc))


def forward_arc_matrix(curve: ClosedCurve, rows: Optional[np.ndarray] = None) -> np.ndarray:
    """A[r, j] = arclength walked forward from sample rows[r] to sample j."""
    cum = curve.cumulative_arclength[:-1]
    rows = np.arange(curve.n) if rows is None else np.asarray(rows)
    arc = cum[None, :] - cum[rows][:, None]
    return np.where(arc < 0.0, arc + curve.length, arc)


def intrinsic_distance_matrix(curve: ClosedCurve, rows: Optional[np.ndarray] = None) -> np.ndarray:
    arc = forward_arc_matrix(curve, rows)
    return np.minimum(arc, curve.length - arc)


def chord_matrix(curve: ClosedCurve, rows: Optional[np.ndarray] = None) -> np.ndarray:
    pts = curve.points
    rows = np.arange(curve.n) if rows is None else np.asarray(rows)
    diff = pts[rows][:, None, :] - pts[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def bilipschitz_ratio(curve: ClosedCurve) -> float:
    """min over distinct pairs of chord / intrinsic distance; 0 flags a self-intersection."""
    dist = intrinsic_distance_matrix(curve)
    chord = chord_matrix(curve)
    valid = dist > 0.0
    return float(np.min(chord[valid] / dist[valid]))


def curve_stats(curve: ClosedCurve) -> CurveStats:
    lengths = curve.edge_lengths
    return CurveStats(
        length=curve.length,
        min_edge=float(lengths.min()),
        max_edge=float(lengths.max()),
        bilip_ratio=bilipschitz_ratio(curve),
        diameter=curve.diameter,
    )


def arclength_regularity(curve: ClosedCurve) -> ArclengthRegularity:
    ratio = bilipschitz_ratio(curve)
    lengths = curve.edge_lengths
    return ArclengthRegularity(
        min_speed=float(lengths.min() * curve.n),
        max_speed=float(lengths.max() * curve.n),
        bilip_constant=float("inf") if ratio == 0.0 else 1.0 / ratio,
    )


# -- arclength resampling ----------------------------------------------------


class _ChordWalker:
    """Walks a closed polyline in steps of fixed chord length."""

    def __init__(self, curve: ClosedCurve):
        self.points = curve.points
        self.edges = curve.edges
        self.lengths = curve.edge_lengths
        self.cum = curve.cumulative_arclength
        self.total = curve.length
        self.n = curve.n

    def position(self, sigma: float) -> np.ndarray:
        lap, local = divmod(sigma, self.total)
        edge = int(np.searchsorted(self.cum, local, side="right")) - 1
        edge = min(max(edge, 0), self.n - 1)
        t = (local - self.cum[edge]) / self.lengths[edge]
        return self.points[edge] + t * self.edges[edge]

    def step(self, sigma: float, chord: float) -> float:
        """Smallest arclength parameter after sigma at Euclidean distance `chord`."""
        start = self.position(sigma)
        lap, local = divmod(sigma, self.total)
        edge = min(int(np.searchsorted(self.cum, local, side="right")) - 1, self.n - 1)
        t_start = (local - self.cum[edge]) / self.lengths[edge]
        base = lap * self.total
        for _ in range(self.n + 1):
            tail = self.points[edge] + self.edges[edge] - start
            if float(tail @ tail) >= chord * chord:
                rel = self.points[edge] - start
                a = self.lengths[edge] ** 2
                b = float(self.edges[edge] @ rel)
                c = float(rel @ rel) - chord * chord
                disc = max(b * b - a * c, 0.0)
                t = max((-b + np.sqrt(disc)) / a, t_start)
                return base + self.cum[edge] + t * self.lengths[edge]
            edge += 1
            t_start = 0.0
            if edge == self.n:
                edge = 0
                base += self.total
        raise CurveValidationError(f"no point of the curve lies at chord distance {chord:.6g}")

    def closure_gap(self, chord: float, steps: int) -> float:
        sigma = 0.0
        for _ in range(steps):
            sigma = self.step(sigma, chord)
        return sigma - self.total

    def walk(self, chord: float, steps: int) -> np.ndarray:
        sigma = 0.0
        out = np.empty((steps, 3))
        out[0] = self.points[0]
        for idx in range(1, steps):
            sigma = self.step(sigma, chord)
            out[idx] = self.position(sigma)
        return out


def arclength_resample(curve: ClosedCurve, n_out: int) -> ClosedCurve:
    """
    Resample to n_out points with equal spacing along the input polyline.

    Consecutive output points are joined by chords of one common length, solved
    so the walk closes up exactly at sample 0. On smooth curves the arclength
    gaps agree with L / n_out to second order in the edge turning angles;
    resampling an output again at the same n_out returns it unchanged.
    """
    if n_out < MIN_SAMPLES:
        raise CurveValidationError(f"n_out must be at least {MIN_SAMPLES}, got {n_out}")
    walker = _ChordWalker(curve)
    total = curve.length
    hi = total / n_out
    gap_hi = walker.closure_gap(hi, n_out)
    # arc >= chord on every step, so gap_hi < 0 only through rounding
    if gap_hi <= 1e-12 * total:
        chord = hi
    else:
        lo = 0.5 * hi
        gap_lo = walker.closure_gap(lo, n_out)
        for _ in range(40):
            if gap_lo < 0.0:
                break
            lo *= 0.5
            gap_lo = walker.closure_gap(lo, n_out)
        else:
            raise CurveValidationError("could not bracket the resampling chord length")
        try:
            chord = brentq(lambda c: walker.closure_gap(c, n_out), lo, hi, xtol=1e-15 * total, rtol=BRENTQ_RTOL)
        except (ValueError, RuntimeError) as exc:
            raise CurveValidationError(f"resampling chord solve failed: {exc}") from exc
    logger.debug(f"[CURVE] resampled {curve.n} -> {n_out} samples, chord {chord:.12g}")
    return ClosedCurve(walker.walk(chord, n_out))


# -- fractional Sobolev seminorm -------------------------------------------


def riemann_zeta(x: float) -> float:
    """ζ(x) including the analytic continuation below 1."""
    return 1.0 + float(zetac(x))


def _edge_curvatures(curve: ClosedCurve, spacing: float) -> np.ndarray:
    angles = curve.turning_angles
    # edge i is bounded by vertices i and i+1
    return 0.5 * (angles + np.roll(angles, -1)) / spacing


def sobolev_seminorm(curve: ClosedCurve, s_exponent: float, diagonal_correction: bool = False) -> float:
    """
    [T]_{s,2} of the unit edge tangent T on an arclength-uniform polyline.

    Double sum over rows i and offsets -N/2 < w <= N/2, w != 0, of
    |T(i+w) - T(i)|^2 / |w h|^(1+2s) * h^2 with h = L/N. With
    diagonal_correction the missing w = 0 cells are filled in from the local
    curvature, which is exact to leading order for smooth curves.
    """
    if not 0.0 < s_exponent < 1.0:
        raise ValueError(f"s_exponent must lie in (0, 1), got {s_exponent}")
    spread = curve.edge_spread()
    if spread >= UNIFORM_SPREAD_TOL:
        raise CurveValidationError(
            f"edge-length spread {spread:.3g} exceeds {UNIFORM_SPREAD_TOL}; "
            "resample the curve by arclength first (arclength_resample)"
        )
    n = curve.n
    h = curve.length / n
    tangents = curve.edge_tangents
    total = 0.0
    for w in range(-n // 2 + 1, n // 2 + 1):
        if w == 0:
            continue
        diff = np.roll(tangents, -w, axis=0) - tangents
        total += float(np.einsum("ij,ij->", diff, diff)) / abs(w * h) ** (1.0 + 2.0 * s_exponent)
    total *= h * h
    if diagonal_correction:
        kappa = _edge_curvatures(curve, h)
        total += float(np.sum(kappa**2)) * h * 2.0 * h ** (2.0 - 2.0 * s_exponent) * -riemann_zeta(2.0 * s_exponent - 1.0)
    return float(np.sqrt(total))
