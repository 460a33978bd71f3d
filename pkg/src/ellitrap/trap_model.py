"""Planar electrode electrostatics, rf pseudopotential and secular frequencies.

Electrodes are polygons in the ``z = 0`` plane.  In the gapless-plane
approximation the rest of the plane is a grounded conductor, and the
potential of one electrode held at 1 V is the solid angle it subtends
divided by ``2 pi``.  Everything else (pseudopotential, trap centre,
curvature) is built from that basis function and its exact derivatives.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from shapely.geometry import LinearRing, Polygon
from shapely.ops import unary_union

from . import _segment
from .constants import AMU, E_CHARGE, SR88_MASS_AMU

Q_STABILITY_LIMIT = 0.9


class TrapError(RuntimeError):
    pass


class NullNotFoundError(TrapError):
    """Vertical scan found no sign change of the vertical force."""


class NotConvergedError(TrapError):
    pass


class UnstableTrapError(TrapError):
    """The curvature at the trap centre has a non-positive eigenvalue."""


class StabilityWarning(UserWarning):
    """A Mathieu q parameter exceeds the pseudopotential validity limit."""


@dataclass(frozen=True)
class Ion:
    mass: float = SR88_MASS_AMU * AMU
    charge: float = E_CHARGE

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("ion mass must be positive")
        if self.charge == 0 or not math.isfinite(self.charge):
            raise ValueError("ion charge must be nonzero")

    @classmethod
    def from_units(cls, mass_amu: float = SR88_MASS_AMU, charge_e: float = 1.0):
        return cls(mass_amu * AMU, charge_e * E_CHARGE)


SR88 = Ion()


@dataclass(frozen=True)
class RfDrive:
    amplitude: float      # V
    omega: float          # rad/s

    def __post_init__(self):
        # zero amplitude is allowed for dc-only evaluation
        if not self.amplitude >= 0:
            raise ValueError("rf amplitude must be non-negative")
        if not self.omega > 0:
            raise ValueError("rf angular frequency must be positive")


@dataclass(frozen=True, eq=False)
class ElectrodePolygon:
    """Simple polygon in the trap plane, stored counter-clockwise."""

    vertices: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError(f"electrode {self.label!r}: vertices must have shape (n, 2)")
        if len(v) < 3:
            raise ValueError(f"electrode {self.label!r}: needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"electrode {self.label!r}: vertices must be finite")
        if not LinearRing(v).is_simple:
            raise ValueError(f"electrode {self.label!r}: polygon self-intersects")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1).max()))

    def shape(self) -> Polygon:
        return Polygon(self.vertices)

    def scaled(self, s: float) -> "ElectrodePolygon":
        return ElectrodePolygon(self.vertices * s, self.label)

    def edges(self):
        """Edge start and end points as 3-D arrays (z = 0)."""
        v3 = np.column_stack([self.vertices, np.zeros(len(self.vertices))])
        return v3, np.roll(v3, -1, axis=0)


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class ElectrodeLayout:
    rf_electrodes: tuple[ElectrodePolygon, ...]
    dc_electrodes: tuple[tuple[ElectrodePolygon, float], ...]
    drive: RfDrive
    check_overlap: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "rf_electrodes", tuple(self.rf_electrodes))
        object.__setattr__(
            self, "dc_electrodes", tuple((p, float(v)) for p, v in self.dc_electrodes)
        )
        if not self.rf_electrodes:
            raise ValueError("layout needs at least one rf electrode")
        if self.check_overlap:
            polys = list(self.rf_electrodes) + [p for p, _ in self.dc_electrodes]
            shapes = [p.shape() for p in polys]
            for i in range(len(shapes)):
                for j in range(i):
                    common = shapes[i].intersection(shapes[j]).area
                    if common > 1e-9 * min(shapes[i].area, shapes[j].area):
                        raise ValueError(
                            f"electrodes {polys[j].label!r} and {polys[i].label!r} overlap"
                        )

    @property
    def rf_diameter(self) -> float:
        v = np.vstack([p.vertices for p in self.rf_electrodes])
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1).max()))

    def rf_centroid(self) -> np.ndarray:
        """Centroid of the region enclosed by the rf electrodes (holes filled)."""
        union = unary_union([p.shape() for p in self.rf_electrodes])
        geoms = getattr(union, "geoms", [union])
        filled = unary_union([Polygon(g.exterior) for g in geoms])
        return np.array(filled.centroid.coords[0])

    def scaled(self, s: float) -> "ElectrodeLayout":
        """Same layout with every coordinate multiplied by ``s``."""
        return ElectrodeLayout(
            tuple(p.scaled(s) for p in self.rf_electrodes),
            tuple((p.scaled(s), v) for p, v in self.dc_electrodes),
            self.drive,
            check_overlap=False,
        )

    def with_drive(self, drive: RfDrive) -> "ElectrodeLayout":
        return ElectrodeLayout(self.rf_electrodes, self.dc_electrodes, drive,
                               check_overlap=False)


@dataclass(frozen=True, eq=False)
class SecularModes:
    frequencies: np.ndarray     # Hz, ordered (x, y, z)
    axes: np.ndarray            # rows are unit principal axes, matched to x, y, z
    center: np.ndarray          # m
    q: np.ndarray
    hessian: np.ndarray         # J/m^2

    @property
    def nu_x(self) -> float:
        return float(self.frequencies[0])

    @property
    def nu_y(self) -> float:
        return float(self.frequencies[1])

    @property
    def nu_z(self) -> float:
        return float(self.frequencies[2])

    @property
    def unstable(self) -> bool:
        return bool(np.any(self.q > Q_STABILITY_LIMIT))


# ---------------------------------------------------------------------------
# basis functions


def _check_points(point):
    pts = np.asarray(point, dtype=float)
    if pts.shape[-1:] != (3,):
        raise ValueError("points must have a trailing dimension of 3")
    if np.any(~(pts[..., 2] > 0)):
        raise ValueError("basis functions are only defined strictly above the plane (z > 0)")
    return pts


def _solid_angle(pts, vertices):
    # fan triangulation from vertex 0; each triangle by Van Oosterom-Strackee
    v3 = np.column_stack([vertices, np.zeros(len(vertices))])
    r1 = v3[0] - pts[..., None, :]
    r2 = v3[1:-1] - pts[..., None, :]
    r3 = v3[2:] - pts[..., None, :]
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    n3 = np.linalg.norm(r3, axis=-1)
    num = np.einsum("...i,...i->...", r1, np.cross(r2, r3))
    den = (
        n1 * n2 * n3
        + np.einsum("...i,...i->...", r1, r2) * n3
        + np.einsum("...i,...i->...", r1, r3) * n2
        + np.einsum("...i,...i->...", r2, r3) * n1
    )
    omega = np.where(num == 0.0, 0.0, 2.0 * np.arctan2(num, den))
    # counter-clockwise polygons give negative triple products from above
    return -omega.sum(axis=-1)


def basis_potential(point, polygon: ElectrodePolygon) -> np.ndarray:
    """Potential at ``point`` with ``polygon`` at 1 V and the plane grounded.

    Equals the subtended solid angle over ``2 pi`` and lies in [0, 1].
    """
    pts = _check_points(point)
    phi = _solid_angle(pts, polygon.vertices) / (2.0 * np.pi)
    return np.clip(phi, 0.0, 1.0)


def basis_gradient(point, polygon: ElectrodePolygon) -> np.ndarray:
    """Exact gradient of :func:`basis_potential` (1/m).

    The solid-angle gradient of a planar loop is minus the Biot-Savart line
    integral around its boundary, evaluated edge by edge in closed form.
    """
    pts = _check_points(point)
    a, b = polygon.edges()
    return -_segment.kernel(pts, a, b, np.ones(len(a))) / (2.0 * np.pi)


def basis_hessian(point, polygon: ElectrodePolygon) -> np.ndarray:
    """Exact second derivatives of :func:`basis_potential` (1/m^2)."""
    pts = _check_points(point)
    a, b = polygon.edges()
    return -_segment.kernel_jacobian(pts, a, b, np.ones(len(a))) / (2.0 * np.pi)


def _sum_over(fn, point, polygons, weights=None):
    total = None
    for k, poly in enumerate(polygons):
        term = fn(point, poly)
        if weights is not None:
            term = weights[k] * term
        total = term if total is None else total + term
    return total


def rf_potential(point, layout: ElectrodeLayout) -> np.ndarray:
    """Potential per volt of rf amplitude (dimensionless)."""
    return _sum_over(basis_potential, point, layout.rf_electrodes)


def dc_potential(point, layout: ElectrodeLayout) -> np.ndarray:
    """Static potential (V) from the dc electrodes."""
    pts = _check_points(point)
    if not layout.dc_electrodes:
        return np.zeros(pts.shape[:-1])
    polys, volts = zip(*layout.dc_electrodes)
    return _sum_over(basis_potential, pts, polys, volts)


def _pseudo_coefficient(layout, ion):
    drive = layout.drive
    return ion.charge ** 2 * drive.amplitude ** 2 / (4.0 * ion.mass * drive.omega ** 2)


def pseudopotential_energy(point, layout: ElectrodeLayout, ion: Ion = SR88) -> np.ndarray:
    """Total effective potential energy (J): rf pseudopotential plus static dc term."""
    pts = _check_points(point)
    grad_rf = _sum_over(basis_gradient, pts, layout.rf_electrodes)
    energy = _pseudo_coefficient(layout, ion) * np.einsum("...i,...i->...", grad_rf, grad_rf)
    if layout.dc_electrodes:
        energy = energy + ion.charge * dc_potential(pts, layout)
    return energy


def pseudopotential_gradient(point, layout: ElectrodeLayout, ion: Ion = SR88) -> np.ndarray:
    """Gradient of :func:`pseudopotential_energy` (J/m), from exact basis derivatives."""
    pts = _check_points(point)
    grad_rf = _sum_over(basis_gradient, pts, layout.rf_electrodes)
    hess_rf = _sum_over(basis_hessian, pts, layout.rf_electrodes)
    grad = 2.0 * _pseudo_coefficient(layout, ion) * np.einsum("...ij,...j->...i", hess_rf, grad_rf)
    if layout.dc_electrodes:
        polys, volts = zip(*layout.dc_electrodes)
        grad = grad + ion.charge * _sum_over(basis_gradient, pts, polys, volts)
    return grad


def _fd_hessian(grad_fn, x, h):
    cols = []
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        cols.append((grad_fn(x + e) - grad_fn(x - e)) / (2.0 * h))
    hess = np.column_stack(cols)
    return 0.5 * (hess + hess.T)


def curvature(point, layout: ElectrodeLayout, ion: Ion = SR88, step: float | None = None):
    """Symmetrised Hessian (J/m^2) of the effective potential at ``point``.

    Central differences of the exact gradient with step ``h`` (default
    ``1e-4`` times the height), Richardson-extrapolated once.
    """
    x = np.asarray(point, dtype=float)
    h = 1e-4 * x[2] if step is None else step

    def grad(p):
        return pseudopotential_gradient(p, layout, ion)

    coarse = _fd_hessian(grad, x, h)
    fine = _fd_hessian(grad, x, 0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def find_rf_null(layout: ElectrodeLayout, ion: Ion = SR88, *, rtol: float = 1e-12,
                 max_iter: int = 200, n_scan: int = 400) -> np.ndarray:
    """Locate the trapping point above the surface.

    A vertical scan above the rf centroid brackets the minimum along z, then
    damped Newton iterations in 3-D drive the force below
    ``rtol * (e V_rf)^2 / (m Omega^2 D^3)`` with ``D`` the rf electrode
    diameter.
    """
    if not layout.drive.amplitude > 0:
        raise ValueError("rf null search needs a positive rf amplitude")
    diameter = layout.rf_diameter
    cx, cy = layout.rf_centroid()
    zs = np.geomspace(0.01, 10.0, n_scan) * diameter
    line = np.column_stack([np.full_like(zs, cx), np.full_like(zs, cy), zs])
    gz = pseudopotential_gradient(line, layout, ion)[:, 2]
    # energy falls (gz < 0) below the minimum and rises above it
    idx = np.nonzero((gz[:-1] < 0) & (gz[1:] >= 0))[0]
    if len(idx) == 0:
        raise NullNotFoundError("no null found: vertical force never changes sign")
    energies = pseudopotential_energy(line[idx + 1], layout, ion)
    k = int(idx[np.argmin(energies)])
    z0 = zs[k] - gz[k] * (zs[k + 1] - zs[k]) / (gz[k + 1] - gz[k])
    x = np.array([cx, cy, z0])

    # pseudopotential force scale; invariant in relative terms under scaling
    drive = layout.drive
    tol = rtol * (ion.charge * drive.amplitude) ** 2 / (ion.mass * drive.omega ** 2 * diameter ** 3)

    def grad(p):
        return pseudopotential_gradient(p, layout, ion)

    g = grad(x)
    for _ in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm < tol:
            return x
        hess = _fd_hessian(grad, x, 1e-4 * x[2])
        w, v = np.linalg.eigh(hess)
        if np.all(w > 0):
            step = -v @ ((v.T @ g) / w)
        else:
            # saddle-free step keeps moving downhill
            step = -v @ ((v.T @ g) / np.maximum(np.abs(w), 1e-12 * np.abs(w).max()))
        # keep the iterate above the plane
        limit = 0.5 * x[2]
        if np.linalg.norm(step) > limit:
            step *= limit / np.linalg.norm(step)
        alpha = 1.0
        while alpha > 1e-10:
            trial = x + alpha * step
            g_trial = grad(trial)
            if np.linalg.norm(g_trial) < gnorm:
                break
            alpha *= 0.5
        else:
            break
        x, g = trial, g_trial
    if np.linalg.norm(g) < tol:
        return x
    raise NotConvergedError(
        f"rf null search not converged: |grad| = {np.linalg.norm(g):.3e} J/m (tol {tol:.3e})"
    )


def secular_frequencies(layout: ElectrodeLayout, ion: Ion = SR88,
                        center: Sequence[float] | None = None) -> SecularModes:
    """Secular frequencies, principal axes and Mathieu q at the trap centre.

    Raises :class:`UnstableTrapError` for non-positive curvature and warns
    with :class:`StabilityWarning` when any ``q > 0.9``.
    """
    if center is None:
        center = find_rf_null(layout, ion)
    center = np.asarray(center, dtype=float)
    hess = curvature(center, layout, ion)
    w, v = np.linalg.eigh(hess)
    if np.any(w <= 0):
        raise UnstableTrapError(f"unstable trap: curvature eigenvalues {w}")
    # match each principal axis to the lab axis it is closest to
    rows, cols = linear_sum_assignment(-np.abs(v))
    order = np.empty(3, dtype=int)
    order[rows] = cols
    axes = v[:, order].T.copy()
    for i in range(3):
        if axes[i, i] < 0:
            axes[i] = -axes[i]
    freqs = np.sqrt(w[order] / ion.mass) / (2.0 * np.pi)
    q = 2.0 * math.sqrt(2.0) * (2.0 * np.pi * freqs) / layout.drive.omega
    modes = SecularModes(freqs, axes, center, q, hess)
    if modes.unstable:
        warnings.warn(f"stability warning: q = {np.round(q, 3)} exceeds {Q_STABILITY_LIMIT}",
                      StabilityWarning, stacklevel=2)
    return modes


# ---------------------------------------------------------------------------
# layout builders

DEFAULT_VERTICES = 256


def ellipse_vertices(ax: float, ay: float, n: int = DEFAULT_VERTICES,
                     center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """``n`` points on an ellipse, counter-clockwise from the +x axis.

    Points on the coordinate axes are exact so that polygons sharing them
    have identical edges.
    """
    if n % 4:
        raise ValueError("vertex count must be a multiple of 4")
    k = np.arange(n)
    t = 2.0 * np.pi * k / n
    c, s = np.cos(t), np.sin(t)
    quarter = n // 4
    exact = k % quarter == 0
    c[exact] = [1.0, 0.0, -1.0, 0.0]
    s[exact] = [0.0, 1.0, 0.0, -1.0]
    return np.column_stack([center[0] + ax * c, center[1] + ay * s])


def _half_ring(inner: np.ndarray, outer: np.ndarray, upper: bool) -> np.ndarray:
    n = len(inner)
    half = n // 2
    if upper:
        ids = np.arange(0, half + 1)
    else:
        ids = np.r_[np.arange(half, n), 0]
    return np.vstack([outer[ids], inner[ids[::-1]]])


def ring_layout(inner_axes: Sequence[float], outer_axes_upper: Sequence[float],
                outer_axes_lower: Sequence[float] | None = None, *,
                rf_amplitude: float = 150.0, rf_frequency: float = 3.5e6,
                center_voltage: float = 0.0, n_vertices: int = DEFAULT_VERTICES
                ) -> ElectrodeLayout:
    """Ring-shaped rf electrode around a dc centre electrode.

    The rf ring is split along the x axis into two simple polygons so that
    its outer semi-axis along y may differ above (+y) and below (-y) the
    centre.  ``rf_frequency`` is the ordinary drive frequency in Hz.
    """
    if outer_axes_lower is None:
        outer_axes_lower = outer_axes_upper
    if outer_axes_upper[0] != outer_axes_lower[0]:
        raise ValueError("upper and lower halves must share the x semi-axis")
    inner = ellipse_vertices(*inner_axes, n=n_vertices)
    up = ellipse_vertices(*outer_axes_upper, n=n_vertices)
    low = ellipse_vertices(*outer_axes_lower, n=n_vertices)
    rf = (
        ElectrodePolygon(_half_ring(inner, up, upper=True), "rf+y"),
        ElectrodePolygon(_half_ring(inner, low, upper=False), "rf-y"),
    )
    dc = ((ElectrodePolygon(inner, "center"), center_voltage),)
    return ElectrodeLayout(rf, dc, RfDrive(rf_amplitude, 2.0 * np.pi * rf_frequency))


def circular_ring_layout(r_inner: float = 1e-3, r_outer: float = 2e-3, **kwargs):
    return ring_layout((r_inner, r_inner), (r_outer, r_outer), **kwargs)


# Outer rf dimensions are not published; these bracket the centre electrode.
DEFAULT_CENTER_AXES = (0.94e-3, 0.71e-3)
DEFAULT_OUTER_B = 2.0e-3
DEFAULT_OUTER_A = 1.4e-3
DEFAULT_OUTER_A_PRIME = 1.8e-3


def elliptical_trap_layout(center_axes: Sequence[float] = DEFAULT_CENTER_AXES,
                           outer_b: float = DEFAULT_OUTER_B,
                           outer_a: float = DEFAULT_OUTER_A,
                           outer_a_prime: float = DEFAULT_OUTER_A_PRIME,
                           **kwargs) -> ElectrodeLayout:
    """The stretched elliptical ring trap.

    The centre electrode has semi-axes ``center_axes`` (x, y).  The rf outer
    boundary has semimajor axis ``outer_b`` along x and semiminor axes
    ``outer_a`` on the -y side and ``outer_a_prime`` on the +y side.  With the
    wider side at +y the trap centre sits displaced towards -y.
    """
    return ring_layout(center_axes, (outer_b, outer_a_prime), (outer_b, outer_a), **kwargs)
