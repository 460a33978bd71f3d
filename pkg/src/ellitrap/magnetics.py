"""Magnetic fields of straight current segments and the resulting spin force.

Fields use the exact finite-segment Biot-Savart result, so a polygonal wire
is represented without discretisation error.  All quantities are SI.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _segment
from .constants import BOHR_MAGNETON, MU_0

#: minimum allowed distance between an evaluation point and a wire (m)
ON_WIRE_TOL = 1e-12


class SingularFieldError(ValueError):
    """Raised when a field is requested on (or within 1e-12 m of) a wire."""


@dataclass(frozen=True)
class WireSegment:
    start: tuple[float, float, float]
    end: tuple[float, float, float]
    current: float = 1.0

    def __post_init__(self):
        start = tuple(float(v) for v in self.start)
        end = tuple(float(v) for v in self.end)
        if len(start) != 3 or len(end) != 3:
            raise ValueError("segment endpoints must be 3-D points")
        if not all(np.isfinite(start + end)) or not np.isfinite(self.current):
            raise ValueError("segment coordinates and current must be finite")
        if start == end:
            raise ValueError("segment start and end coincide")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        object.__setattr__(self, "current", float(self.current))


@dataclass(frozen=True)
class WireSet:
    """An ordered collection of :class:`WireSegment`.

    Summation over segments follows this order, which keeps results
    reproducible to the last bit.
    """

    segments: tuple[WireSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def arrays(self):
        """Return ``(starts, ends, currents)`` as arrays of shape (M,3), (M,3), (M,)."""
        if not self.segments:
            return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0)
        starts = np.array([s.start for s in self.segments])
        ends = np.array([s.end for s in self.segments])
        currents = np.array([s.current for s in self.segments])
        return starts, ends, currents

    def scaled(self, factor: float) -> "WireSet":
        """All coordinates multiplied by ``factor``; currents unchanged."""
        return WireSet(
            WireSegment(
                tuple(factor * v for v in s.start),
                tuple(factor * v for v in s.end),
                s.current,
            )
            for s in self.segments
        )

    def with_current_factor(self, factor: float) -> "WireSet":
        return WireSet(
            WireSegment(s.start, s.end, factor * s.current) for s in self.segments
        )

    def translated(self, offset: Sequence[float]) -> "WireSet":
        off = np.asarray(offset, dtype=float)
        return WireSet(
            WireSegment(
                tuple(np.asarray(s.start) + off), tuple(np.asarray(s.end) + off), s.current
            )
            for s in self.segments
        )

    def __add__(self, other: "WireSet") -> "WireSet":
        return WireSet(self.segments + other.segments)


@dataclass(frozen=True)
class MagneticMoment:
    vector: tuple[float, float, float] = (0.0, BOHR_MAGNETON, 0.0)

    def __post_init__(self):
        vec = tuple(float(v) for v in self.vector)
        if len(vec) != 3 or not all(np.isfinite(vec)):
            raise ValueError("magnetic moment must be a finite 3-vector")
        object.__setattr__(self, "vector", vec)

    @classmethod
    def along(cls, direction: Sequence[float], bohr_magnetons: float = 1.0):
        d = np.asarray(direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0:
            raise ValueError("moment direction must be nonzero")
        return cls(tuple(d / norm * bohr_magnetons * BOHR_MAGNETON))


def _as_wireset(wires) -> WireSet:
    if isinstance(wires, WireSegment):
        return WireSet((wires,))
    if isinstance(wires, WireSet):
        return wires
    return WireSet(tuple(wires))


def _check_off_wire(points, starts, ends):
    if len(starts) == 0:
        return
    dist = _segment.min_distance(points, starts, ends)
    if np.any(dist < ON_WIRE_TOL):
        raise SingularFieldError("on-wire singularity: field point lies on a wire")


def segment_field(point, segment: WireSegment) -> np.ndarray:
    """Magnetic field (T) of one finite straight segment.

    ``point`` may be a single 3-vector or an array of shape (..., 3).
    """
    return total_field(point, WireSet((segment,)))


def total_field(point, wires: WireSet | Iterable[WireSegment]) -> np.ndarray:
    """Superposed field (T) of every segment in ``wires``."""
    wires = _as_wireset(wires)
    starts, ends, currents = wires.arrays()
    pts = np.asarray(point, dtype=float)
    if len(wires) == 0:
        return np.zeros(pts.shape)
    _check_off_wire(pts, starts, ends)
    return MU_0 / (4.0 * np.pi) * _segment.kernel(pts, starts, ends, currents)


def field_jacobian(point, wires: WireSet | Iterable[WireSegment]) -> np.ndarray:
    """Field gradient ``J[..., a, b] = dB_a/dx_b`` in T/m."""
    wires = _as_wireset(wires)
    starts, ends, currents = wires.arrays()
    pts = np.asarray(point, dtype=float)
    if len(wires) == 0:
        return np.zeros(pts.shape + (3,))
    _check_off_wire(pts, starts, ends)
    return MU_0 / (4.0 * np.pi) * _segment.kernel_jacobian(pts, starts, ends, currents)


def spin_force(point, wires, moment: MagneticMoment | None = None) -> np.ndarray:
    """State-dependent force ``F = -grad(mu . B)`` for a fixed moment, in N.

    The moment is held constant in the lab frame (it is pinned by a bias
    field), so ``F_b = -sum_a mu_a dB_a/dx_b``.
    """
    if moment is None:
        moment = MagneticMoment()
    mu = np.asarray(moment.vector)
    jac = field_jacobian(point, wires)
    return -np.einsum("a,...ab->...b", mu, jac)


def square_loop(half_side: float, height: float = 0.0, current: float = 1.0,
                center: Sequence[float] = (0.0, 0.0)) -> WireSet:
    """Closed square loop in the plane ``z = height``, counter-clockwise seen from +z."""
    cx, cy = float(center[0]), float(center[1])
    a = float(half_side)
    corners = [
        (cx + a, cy - a, height),
        (cx + a, cy + a, height),
        (cx - a, cy + a, height),
        (cx - a, cy - a, height),
    ]
    return WireSet(
        WireSegment(corners[k], corners[(k + 1) % 4], current) for k in range(4)
    )


def make_concentric_squares(n_loops: int = 3, a0: float = 0.15e-3,
                            pitch: float = 0.15e-3, height: float = 0.0,
                            current: float = 1.0,
                            center: Sequence[float] = (0.0, 0.0)) -> WireSet:
    """Concentric coplanar square loops with half-sides ``a0 + k * pitch``.

    All loops share the same circulation sense and carry ``current`` each.
    The defaults inscribe three squares in the 0.94 mm x 0.71 mm centre
    ellipse of the full-size trap; they are not published dimensions.
    """
    if int(n_loops) != n_loops or n_loops < 1:
        raise ValueError("n_loops must be a positive integer")
    if not a0 > 0:
        raise ValueError("innermost half-side a0 must be positive")
    if not pitch > 0:
        raise ValueError("loop pitch must be positive")
    wires = WireSet(())
    for k in range(int(n_loops)):
        wires = wires + square_loop(a0 + k * pitch, height, current, center)
    return wires


def square_loop_axial_field(half_side: float, z: float, current: float = 1.0) -> float:
    """On-axis ``B_z`` of a square loop of side ``2 * half_side`` at height ``z``."""
    a2 = half_side * half_side
    return MU_0 * current / np.pi * 2 * a2 / ((a2 + z * z) * np.sqrt(2 * a2 + z * z))


def field_map(points, wires, with_jacobian: bool = False) -> np.ndarray:
    """Rows ``x, y, z, Bx, By, Bz`` (plus 9 Jacobian entries, row-major) per point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    cols = [pts, total_field(pts, wires)]
    if with_jacobian:
        cols.append(field_jacobian(pts, wires).reshape(-1, 9))
    return np.hstack(cols)
