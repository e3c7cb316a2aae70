"""
Cyclic symmetry of discrete closed curves.

The group Z/m acts on an N-gon (m | N) by

    τ_l(x)_i = Rz(2π l / m) · x_{(i + k l N / m) mod N}

i.e. rotate by a multiple of 2π/m about the z-axis and shift the index by the
matching fraction of a period. This module applies the action, projects
curves and gradient fields onto the fixed subspace, detects rotational
periods of arbitrary curves and checks the geometric constraints any family
of symmetry axes of a knotted curve has to satisfy.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from curve_geometry import ClosedCurve
from knot_energy import GradientField

logger = logging.getLogger(__name__)

RATIONAL_ANGLE_WINDOW = 1e-6
AXIS_PARALLEL_TOL = 1e-6


class SymmetryError(ValueError):
    pass


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CyclicAction:
    """Z/m acting by 2π/m turns about z combined with k/m index periods."""

    m: int
    k: int

    def __post_init__(self):
        if self.m < 2:
            raise SymmetryError(f"group order m must be >= 2, got {self.m}")
        object.__setattr__(self, "k", self.k % self.m)

    def check_samples(self, n: int) -> None:
        if n % self.m:
            raise SymmetryError(f"N={n} is not divisible by m={self.m}")

    def index_shift(self, n: int, l: int) -> int:
        self.check_samples(n)
        return (self.k * (l % self.m) * (n // self.m)) % n

    def rotation(self, l: int) -> np.ndarray:
        return rotation_z(2.0 * np.pi * (l % self.m) / self.m)

    def elements(self) -> range:
        return range(self.m)


def _act(points: np.ndarray, action: CyclicAction, l: int) -> np.ndarray:
    shift = action.index_shift(points.shape[0], l)
    return np.roll(points, -shift, axis=0) @ action.rotation(l).T


def apply_group_action(curve: ClosedCurve, action: CyclicAction, l: int) -> ClosedCurve:
    return ClosedCurve(_act(curve.points, action, l))


def project_field(field_values: np.ndarray, action: CyclicAction) -> np.ndarray:
    """Average of the action over the group; an orthogonal projection on (N, 3) arrays."""
    action.check_samples(field_values.shape[0])
    total = np.zeros_like(field_values, dtype=float)
    for l in action.elements():
        total += _act(field_values, action, l)
    return total / action.m


def symmetrize(curve: ClosedCurve, action: CyclicAction) -> ClosedCurve:
    return ClosedCurve(project_field(curve.points, action))


def symmetric_projection(gradient: GradientField, action: CyclicAction) -> GradientField:
    return GradientField(
        dS=project_field(gradient.dS, action),
        dE=project_field(gradient.dE, action),
        scaled_energy=gradient.scaled_energy,
        energy=gradient.energy,
        length=gradient.length,
    )


def symmetry_residual(curve: ClosedCurve, action: CyclicAction) -> float:
    """max over l of rms(x - τ_l x), relative to the curve diameter."""
    action.check_samples(curve.n)
    pts = curve.points
    worst = 0.0
    for l in range(1, action.m):
        delta = pts - _act(pts, action, l)
        worst = max(worst, float(np.sqrt(np.mean(np.einsum("ij,ij->i", delta, delta)))))
    return worst / curve.diameter


def symmetric_subspace_residual(field_values: np.ndarray, action: CyclicAction) -> float:
    """||(I - P) v|| / ||v||; zero for the zero field."""
    norm = float(np.linalg.norm(field_values))
    if norm == 0.0:
        return 0.0
    return float(np.linalg.norm(field_values - project_field(field_values, action))) / norm


def is_symmetric(curve: ClosedCurve, action: CyclicAction, tol: float) -> Tuple[bool, float]:
    """(residual <= tol, residual) with the residual of symmetry_residual."""
    residual = symmetry_residual(curve, action)
    return residual <= tol, residual


# -- rigid motions -----------------------------------------------------------


@dataclass(frozen=True)
class RigidMotion:
    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
            raise SymmetryError("rotation must be an orthogonal 3x3 matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls(np.eye(3))

    @classmethod
    def about_axis(cls, angle: float, axis_point, axis_direction) -> "RigidMotion":
        direction = np.asarray(axis_direction, dtype=float)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            raise SymmetryError("rotation axis direction must be nonzero")
        direction = direction / norm
        rot = Rotation.from_rotvec(angle * direction).as_matrix()
        point = np.asarray(axis_point, dtype=float)
        return cls(rot, point - rot @ point)

    @classmethod
    def random(cls, rng: np.random.Generator, scale: float = 1.0) -> "RigidMotion":
        rot = Rotation.random(random_state=rng).as_matrix()
        return cls(rot, rng.normal(scale=scale, size=3))

    @property
    def is_proper(self) -> bool:
        return bool(np.linalg.det(self.rotation) > 0.0)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def apply_curve(self, curve: ClosedCurve) -> ClosedCurve:
        return ClosedCurve(self.apply(curve.points))

    def compose(self, other: "RigidMotion") -> "RigidMotion":
        """self ∘ other."""
        return RigidMotion(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidMotion":
        rot_t = self.rotation.T
        return RigidMotion(rot_t, -rot_t @ self.translation)


def rotation_about_axis(beta: float, axis_point, axis_direction) -> RigidMotion:
    """Turn by beta about the line through axis_point along axis_direction."""
    return RigidMotion.about_axis(beta, axis_point, axis_direction)


def procrustes(source: np.ndarray, target: np.ndarray, det_sign: int = 1) -> Tuple[np.ndarray, float]:
    """
    Orthogonal R with det(R) = det_sign minimizing Σ |R s_i - t_i|².

    Both point sets must already be centred. Returns (R, rms residual).
    """
    h = source.T @ target
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    correction = np.diag([1.0, 1.0, det_sign * d])
    rot = vt.T @ correction @ u.T
    delta = source @ rot.T - target
    return rot, float(np.sqrt(np.mean(np.einsum("ij,ij->i", delta, delta))))


def point_sets_coincide(first: np.ndarray, second: np.ndarray, tol: float = 1e-9) -> bool:
    """Equal as finite sets: every point of each has a partner in the other within tol."""
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    gaps = np.linalg.norm(first[:, None, :] - second[None, :, :], axis=2)
    return bool(np.all(gaps.min(axis=1) <= tol) and np.all(gaps.min(axis=0) <= tol))


# -- period detection ----------------------------------------------------------


@dataclass(frozen=True)
class SymmetryDetection:
    """A rotation of order `order` about a line that maps the curve to itself."""

    order: int
    axis_point: np.ndarray
    axis_direction: np.ndarray
    index_shift: int
    residual: float

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "axis_point": [float(v) for v in self.axis_point],
            "axis_direction": [float(v) for v in self.axis_direction],
            "index_shift": self.index_shift,
            "residual": self.residual,
        }


def _canonical_direction(direction: np.ndarray) -> np.ndarray:
    direction = direction / np.linalg.norm(direction)
    lead = int(np.argmax(np.abs(direction) > 1e-9))
    return -direction if direction[lead] < 0.0 else direction


def _same_line(first: SymmetryDetection, second: SymmetryDetection, tol: float) -> bool:
    if abs(float(first.axis_direction @ second.axis_direction)) < 1.0 - AXIS_PARALLEL_TOL:
        return False
    offset = second.axis_point - first.axis_point
    return float(np.linalg.norm(np.cross(offset, first.axis_direction))) <= tol


def detect_periods(curve: ClosedCurve, m_max: int = 12, tol: float = 1e-6) -> List[SymmetryDetection]:
    """
    Rotational symmetries realised by a cyclic index shift.

    For every shift s the best proper rotation mapping x_i to x_{i+s} (about
    the centroid) is fitted; fits with rms <= tol * diameter whose angle is a
    rational multiple 2π p/q, q <= m_max, are kept. One detection per
    (order, axis), sorted by decreasing order.
    """
    centroid = curve.centroid
    centred = curve.points - centroid
    diameter = curve.diameter
    found: List[SymmetryDetection] = []
    for shift in range(1, curve.n):
        rot, rms = procrustes(centred, np.roll(centred, -shift, axis=0))
        if rms > tol * diameter:
            continue
        angle, axis = rotation_angle_about(rot)
        if angle < 1e-9:
            continue
        turns = angle / (2.0 * np.pi)
        frac = Fraction(turns).limit_denominator(m_max)
        if frac.denominator < 2 or abs(turns - float(frac)) > RATIONAL_ANGLE_WINDOW:
            continue
        candidate = SymmetryDetection(
            order=frac.denominator,
            axis_point=centroid.copy(),
            axis_direction=_canonical_direction(axis),
            index_shift=shift,
            residual=rms / diameter,
        )
        for idx, known in enumerate(found):
            if known.order == candidate.order and _same_line(known, candidate, tol * diameter):
                if candidate.residual < known.residual:
                    found[idx] = candidate
                break
        else:
            found.append(candidate)
    found.sort(key=lambda det: (-det.order, det.residual))
    logger.debug(f"[SYM] detected orders {[det.order for det in found]} on n={curve.n}")
    return found


# -- axis constraints ----------------------------------------------------------


@dataclass(frozen=True)
class SymmetryViolation:
    clause: str
    message: str
    orders: Tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"clause": self.clause, "message": self.message, "orders": list(self.orders)}


def _line_to_curve_distance(curve: ClosedCurve, point: np.ndarray, direction: np.ndarray) -> float:
    """Distance between a line and the polyline (segment by segment)."""
    starts = curve.points - point
    ends = starts + curve.edges
    # project out the axis direction and measure the 2-D segment against the origin
    flat_a = starts - np.outer(starts @ direction, direction)
    flat_b = ends - np.outer(ends @ direction, direction)
    seg = flat_b - flat_a
    seg_sq = np.einsum("ij,ij->i", seg, seg)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(seg_sq > 0.0, -np.einsum("ij,ij->i", flat_a, seg) / seg_sq, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = flat_a + t[:, None] * seg
    return float(np.min(np.linalg.norm(closest, axis=1)))


def _line_gap(first: SymmetryDetection, second: SymmetryDetection) -> Tuple[float, bool]:
    """(distance between the two axis lines, whether they are parallel)."""
    u, v = first.axis_direction, second.axis_direction
    offset = second.axis_point - first.axis_point
    normal = np.cross(u, v)
    norm = float(np.linalg.norm(normal))
    if norm < AXIS_PARALLEL_TOL:
        return float(np.linalg.norm(np.cross(offset, u))), True
    return abs(float(offset @ normal)) / norm, False


def validate_symmetry_constraints(detections: Sequence[SymmetryDetection], curve: ClosedCurve,
                                  tol: float = 1e-6) -> List[SymmetryViolation]:
    """
    Check a family of detected rotational symmetries of a knotted curve:

      (a) an axis that meets the curve must have order 2;
      (b) two distinct axes cannot be parallel and disjoint;
      (c) two intersecting axes of different orders must be perpendicular with
          one of them of order 2;
      (d) in that configuration the order-2 axis misses the curve and the
          other axis meets it;
      (e) two distinct axes cannot share an order >= 3; intersecting distinct
          axes of equal order must have order 2.

    Distances are judged against tol * diameter. Returns every violation.
    """
    scale = tol * curve.diameter
    violations: List[SymmetryViolation] = []
    meets = [
        _line_to_curve_distance(curve, det.axis_point, det.axis_direction) <= scale for det in detections
    ]

    for det, hit in zip(detections, meets):
        if hit and det.order != 2:
            violations.append(SymmetryViolation("a", f"order-{det.order} axis meets the curve", (det.order,)))

    for i in range(len(detections)):
        for j in range(i + 1, len(detections)):
            first, second = detections[i], detections[j]
            gap, parallel = _line_gap(first, second)
            if parallel and gap <= scale:
                continue  # same axis
            orders = (first.order, second.order)
            if parallel:
                violations.append(SymmetryViolation("b", "two parallel disjoint axes", orders))
                continue
            intersecting = gap <= scale
            if first.order == second.order:
                if first.order >= 3:
                    violations.append(
                        SymmetryViolation("e", f"two distinct axes of order {first.order}", orders)
                    )
                continue
            if not intersecting:
                continue
            cosine = abs(float(first.axis_direction @ second.axis_direction))
            if cosine > 1e-6 or 2 not in orders:
                violations.append(
                    SymmetryViolation("c", "intersecting axes of different orders must be perpendicular with one of order 2", orders)
                )
                continue
            two_idx, other_idx = (i, j) if first.order == 2 else (j, i)
            if meets[two_idx] or not meets[other_idx]:
                violations.append(
                    SymmetryViolation("d", "order-2 axis must miss the curve and the other axis must meet it", orders)
                )
    if violations:
        logger.info(f"[SYM] {len(violations)} axis constraint violation(s): {[v.clause for v in violations]}")
    return violations


def rotation_angle_about(rotation: np.ndarray) -> Tuple[float, np.ndarray]:
    """(angle, unit axis) of a proper rotation matrix."""
    rotvec = Rotation.from_matrix(rotation).as_rotvec()
    angle = float(np.linalg.norm(rotvec))
    if angle == 0.0:
        return 0.0, np.array([0.0, 0.0, 1.0])
    return angle, rotvec / angle
