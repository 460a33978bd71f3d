"""Equilibrium structure of ion crystals in an anisotropic harmonic trap.

The potential energy

    U = sum_i (m/2) sum_a w_a^2 r_ia^2 + sum_{i<j} k e^2 / |r_i - r_j|

is minimised in natural units: lengths in ``l0 = (k e^2 / (m w0^2))^(1/3)``
with ``w0`` the weakest trap frequency, energies in ``k e^2 / l0``.  In these
units all terms are of order one, so a relative force tolerance is
meaningful for any trap strength.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import COULOMB_K
from .trap_model import SR88, Ion


class CrystalError(RuntimeError):
    pass


class NotConvergedError(CrystalError):
    pass


class SaddleError(CrystalError):
    """Every converged restart ended on a saddle point."""


class UnstableConfigurationError(CrystalError):
    pass


@dataclass(frozen=True)
class HarmonicTrap:
    nu_x: float
    nu_y: float
    nu_z: float
    ion: Ion = SR88

    def __post_init__(self):
        for name in ("nu_x", "nu_y", "nu_z"):
            if not getattr(self, name) > 0:
                raise ValueError(f"trap frequency {name} must be positive")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([self.nu_x, self.nu_y, self.nu_z])

    @property
    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies

    def scaled(self, factor: float) -> "HarmonicTrap":
        """All frequencies multiplied by ``factor``."""
        return HarmonicTrap(self.nu_x * factor, self.nu_y * factor, self.nu_z * factor, self.ion)


@dataclass(frozen=True, eq=False)
class IonCrystal:
    positions: np.ndarray       # (N, 3) m
    trap: HarmonicTrap
    energy: float               # J
    residual_force: float       # N, largest per-ion net force
    converged: bool
    restarts_used: int
    best_restart: int = 0

    @property
    def n_ions(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class SpacingReport:
    d_x: float
    d_y: float
    d_mean: float
    z_extent: float


@dataclass(frozen=True, eq=False)
class ModeSpectrum:
    frequencies: np.ndarray     # (3N,) Hz, ascending
    vectors: np.ndarray         # (3N, 3N), column k is mode k


# ---------------------------------------------------------------------------
# natural units


def _units(trap: HarmonicTrap):
    w0 = trap.omegas.min()
    ke2 = COULOMB_K * trap.ion.charge ** 2
    length = (ke2 / (trap.ion.mass * w0 ** 2)) ** (1.0 / 3.0)
    energy = ke2 / length
    w2 = (trap.omegas / w0) ** 2
    return length, energy, w2


def _energy_grad(x, w2):
    r = x.reshape(-1, 3)
    trap_grad = w2 * r
    energy = 0.5 * float(np.sum(trap_grad * r))
    if len(r) > 1:
        diff = r[:, None, :] - r[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.fill_diagonal(dist, np.inf)
        inv = 1.0 / dist
        energy += 0.5 * float(inv.sum())
        coul = -np.einsum("ij,ijk->ik", inv ** 3, diff)
        return energy, (trap_grad + coul).ravel()
    return energy, trap_grad.ravel()


def _hessian(x, w2):
    r = x.reshape(-1, 3)
    n = len(r)
    hess = np.zeros((n, 3, n, 3))
    if n > 1:
        diff = r[:, None, :] - r[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        np.fill_diagonal(dist, np.inf)
        # second derivative of 1/r with respect to the separation vector
        t = (3.0 * diff[..., :, None] * diff[..., None, :] / dist[..., None, None] ** 5
             - np.eye(3) / dist[..., None, None] ** 3)
        hess -= t.transpose(0, 2, 1, 3)
        idx = np.arange(n)
        hess[idx, :, idx, :] = t.sum(axis=1)
    for i in range(n):
        hess[i, :, i, :] += np.diag(w2)
    return hess.reshape(3 * n, 3 * n)


def _max_force(g):
    return float(np.sqrt((g.reshape(-1, 3) ** 2).sum(axis=1)).max())


# ---------------------------------------------------------------------------
# minimiser


class _Budget:
    def __init__(self, limit):
        self.limit = limit
        self.used = 0

    def spend(self, k=1):
        self.used += k
        return self.used <= self.limit


def _bfgs(x, w2, target, budget, c1=1e-4):
    """Quasi-Newton descent with Armijo backtracking; stops at ``target`` max force."""
    energy, g = _energy_grad(x, w2)
    budget.spend()
    n = len(x)
    hinv = np.eye(n) / w2.max()
    first = True
    while _max_force(g) > target and budget.used < budget.limit:
        p = -hinv @ g
        slope = float(g @ p)
        if slope >= 0:
            hinv = np.eye(n) / w2.max()
            p = -g / w2.max()
            slope = float(g @ p)
        # keep the trial step below the typical inter-ion distance
        pmax = np.abs(p).max()
        alpha = min(1.0, 0.5 / pmax) if pmax > 0 else 1.0
        while True:
            x_new = x + alpha * p
            e_new, g_new = _energy_grad(x_new, w2)
            if not budget.spend():
                return x, energy, g
            if np.isfinite(e_new) and e_new <= energy + c1 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-14:
                return x, energy, g
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-300:
            if first:
                hinv = np.eye(n) * (sy / float(y @ y))
                first = False
            rho = 1.0 / sy
            hy = hinv @ y
            hinv += (rho * rho * float(y @ hy) + rho) * np.outer(s, s) \
                - rho * (np.outer(hy, s) + np.outer(s, hy))
        x, energy, g = x_new, e_new, g_new
    return x, energy, g


def _newton_polish(x, w2, target, budget, max_iter=50):
    """Saddle-free Newton steps with the exact Hessian; merit is the force norm."""
    energy, g = _energy_grad(x, w2)
    for _ in range(max_iter):
        if _max_force(g) <= target or budget.used >= budget.limit:
            break
        lam, vec = np.linalg.eigh(_hessian(x, w2))
        budget.spend()
        scale = np.abs(lam).max()
        keep = np.abs(lam) > 1e-10 * scale  # drop symmetry zero modes
        coef = (vec.T @ g)[keep] / np.abs(lam[keep])
        p = -vec[:, keep] @ coef
        gnorm = np.linalg.norm(g)
        alpha = 1.0
        while alpha > 1e-8:
            x_new = x + alpha * p
            e_new, g_new = _energy_grad(x_new, w2)
            budget.spend()
            if np.linalg.norm(g_new) < gnorm:
                break
            alpha *= 0.5
        else:
            break
        x, energy, g = x_new, e_new, g_new
    return x, energy, g


def _lowest_mode(x, w2):
    lam, vec = np.linalg.eigh(_hessian(x, w2))
    return lam, vec


def _is_saddle(lam):
    return lam[0] < -1e-6 * np.abs(lam).max()


def _minimize(x0, w2, target, max_evals, escapes=5):
    budget = _Budget(max_evals)
    x = x0
    for attempt in range(escapes + 1):
        x, energy, g = _bfgs(x, w2, max(target, 1e-6), budget)
        x, energy, g = _newton_polish(x, w2, target, budget)
        converged = _max_force(g) <= target
        lam, vec = _lowest_mode(x, w2)
        saddle = _is_saddle(lam)
        if not (converged and saddle) or attempt == escapes:
            return x, energy, g, converged, saddle
        # step off the saddle along its unstable direction
        x = x + 0.1 * vec[:, 0] * math.sqrt(len(x) / 3)
    return x, energy, g, converged, saddle


def _lattice(n):
    """First ``n`` sites of a triangular lattice, ordered by distance from the origin."""
    m = int(math.ceil(math.sqrt(n))) + 2
    i, j = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1), indexing="ij")
    pts = np.column_stack([(i + 0.5 * j).ravel(), (j * math.sqrt(3) / 2).ravel()])
    key = np.round(np.hypot(pts[:, 0], pts[:, 1]), 9)
    ang = np.round(np.arctan2(pts[:, 1], pts[:, 0]), 9)
    order = np.lexsort((ang, key))
    sites = pts[order[:n]]
    return sites - sites.mean(axis=0)


def _initial_configuration(n, w2, seed, restart, spacing=1.2, jitter=0.15):
    rng = np.random.default_rng([seed, restart])
    plane = np.argsort(w2, kind="stable")
    sites = _lattice(n) * spacing
    if restart:
        t = rng.uniform(0.0, 2.0 * np.pi)
        rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        sites = sites @ rot.T
    x = np.zeros((n, 3))
    for k in range(2):
        axis = plane[k]
        x[:, axis] = sites[:, k] * w2[axis] ** (-1.0 / 3.0)
    x += jitter * spacing * rng.standard_normal((n, 3))
    return x.ravel()


# ---------------------------------------------------------------------------
# public operations


def two_ion_spacing(trap: HarmonicTrap) -> float:
    """Analytic separation (m) of two ions along the weaker in-plane axis.

    When ``nu_x == nu_y`` the orientation is degenerate; only the distance is
    meaningful.
    """
    w = 2.0 * np.pi * min(trap.nu_x, trap.nu_y)
    ke2 = COULOMB_K * trap.ion.charge ** 2
    return (ke2 * 2.0 / (trap.ion.mass * w ** 2)) ** (1.0 / 3.0)


def potential_energy(positions, trap: HarmonicTrap) -> float:
    """Total potential energy (J) of ions at ``positions`` (N x 3, metres)."""
    length, energy, w2 = _units(trap)
    x = np.asarray(positions, dtype=float).ravel() / length
    return _energy_grad(x, w2)[0] * energy


def forces(positions, trap: HarmonicTrap) -> np.ndarray:
    """Net force (N) on each ion, shape (N, 3)."""
    length, energy, w2 = _units(trap)
    x = np.asarray(positions, dtype=float).ravel() / length
    return -_energy_grad(x, w2)[1].reshape(-1, 3) * energy / length


def energy_hessian(positions, trap: HarmonicTrap) -> np.ndarray:
    """Hessian of the potential energy (J/m^2), shape (3N, 3N)."""
    length, energy, w2 = _units(trap)
    x = np.asarray(positions, dtype=float).ravel() / length
    return _hessian(x, w2) * energy / length ** 2


def solve_equilibrium(trap: HarmonicTrap, n_ions: int, seed: int = 0, *,
                      restarts: int = 16, force_rtol: float = 1e-9,
                      force_tol: float | None = None,
                      max_evals: int = 100_000) -> IonCrystal:
    """Minimum-energy configuration of ``n_ions`` ions.

    Each restart starts from a jittered triangular lattice in the plane of
    the two weakest axes (jitter drawn from ``seed`` and the restart index)
    and is minimised to a per-ion force below ``force_tol`` newtons, which
    defaults to ``force_rtol`` times the Coulomb force at the natural length
    scale.  The lowest-energy converged minimum is returned; ties go to the
    earlier restart.

    Raises
    ------
    NotConvergedError
        No restart reached the force tolerance within ``max_evals``.
    SaddleError
        Converged restarts all ended on saddle points.
    """
    if int(n_ions) != n_ions or n_ions < 1:
        raise ValueError("n_ions must be a positive integer")
    n_ions = int(n_ions)
    length, energy_unit, w2 = _units(trap)
    force_unit = energy_unit / length
    tol = force_rtol * force_unit if force_tol is None else force_tol
    target = tol / force_unit

    if n_ions == 1:
        return IonCrystal(np.zeros((1, 3)), trap, 0.0, 0.0, True, 1, 0)

    best = None
    any_converged = False
    for k in range(restarts):
        x0 = _initial_configuration(n_ions, w2, seed, k)
        x, energy, g, converged, saddle = _minimize(x0, w2, target, max_evals)
        any_converged |= converged
        if not converged or saddle:
            continue
        if best is None or energy < best[1]:
            best = (x, energy, g, k)
    if best is None:
        if any_converged:
            raise SaddleError("saddle rejected: no restart reached a local minimum")
        raise NotConvergedError(f"not converged: no restart met the force tolerance {tol:.3e} N")
    x, energy, g, k = best
    return IonCrystal(
        positions=x.reshape(-1, 3) * length,
        trap=trap,
        energy=energy * energy_unit,
        residual_force=_max_force(g) * force_unit,
        converged=True,
        restarts_used=restarts,
        best_restart=k,
    )


def crystal_spacings(crystal: IonCrystal) -> SpacingReport:
    """Extents along x and y, mean nearest-neighbour distance and z extent."""
    r = np.asarray(crystal.positions)
    if len(r) < 2:
        return SpacingReport(0.0, 0.0, 0.0, 0.0)
    diff = r[:, None, :] - r[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    return SpacingReport(
        d_x=float(np.ptp(r[:, 0])),
        d_y=float(np.ptp(r[:, 1])),
        d_mean=float(dist.min(axis=1).mean()),
        z_extent=float(np.ptp(r[:, 2])),
    )


def planarity_threshold(n_ions: int, nu_plane: float) -> float:
    """Smallest axial frequency (Hz) for which ``n_ions`` form a planar crystal.

    Uses ``(70 N / pi^3)^(1/4) * nu_plane``, valid for ``nu_x ~ nu_y``.  For
    anisotropic traps pass ``max(nu_x, nu_y)`` for a conservative bound; the
    solved crystal (:func:`is_planar`) remains the ground truth.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be at least 1")
    if not nu_plane > 0:
        raise ValueError("nu_plane must be positive")
    return (70.0 * n_ions / math.pi ** 3) ** 0.25 * nu_plane


def is_planar(crystal: IonCrystal, eps: float = 1e-3) -> bool:
    """True when the z extent is below ``eps`` times the mean neighbour distance.

    A single ion is planar by convention.
    """
    if crystal.n_ions < 2:
        return True
    rep = crystal_spacings(crystal)
    return rep.z_extent < eps * rep.d_mean


def normal_modes(crystal: IonCrystal) -> ModeSpectrum:
    """Small-oscillation modes about the equilibrium (frequencies in Hz)."""
    hess = energy_hessian(crystal.positions, crystal.trap) / crystal.trap.ion.mass
    lam, vec = np.linalg.eigh(hess)
    if lam[0] < -1e-6 * np.abs(lam).max():
        raise UnstableConfigurationError(
            f"unstable configuration: lowest curvature eigenvalue {lam[0]:.3e}"
        )
    freqs = np.sqrt(np.clip(lam, 0.0, None)) / (2.0 * np.pi)
    return ModeSpectrum(freqs, vec)
