"""Simulated spin-spin coupling rate and its dependence on trap scale.

The rate of an antiferromagnetic two-ion coupling driven by a
state-dependent force ``F`` is

    hbar J = kappa e^2 F^2 / (64 pi^5 eps0 m^2 nu^4 d^3)

with ``nu`` an ordinary frequency in Hz.  :func:`scaling_table` shrinks a
whole trap (electrodes and wires) and reports ``d``, ``F`` and ``J`` per
ion height.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import crystal as _crystal
from . import magnetics, trap_model
from .constants import EPSILON_0, HBAR
from .trap_model import SR88, Ion

FREQUENCY_RULES = ("inverse", "inverse_square")
NU_RULES = ("x", "y", "z", "force")


@dataclass(frozen=True)
class CouplingScenario:
    kappa: float = 1.0
    force: float = 0.0      # N
    nu: float = 1.0         # Hz
    d: float = 1.0          # m
    ion: Ion = SR88

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.force >= 0:
            raise ValueError("force must be non-negative")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.d > 0:
            raise ValueError("d must be positive")


def _prefactor(ion: Ion) -> float:
    return ion.charge ** 2 / (64.0 * math.pi ** 5 * EPSILON_0 * ion.mass ** 2 * HBAR)


def j_rate(sc: CouplingScenario) -> float:
    """Coupling rate J in 1/s."""
    return sc.kappa * _prefactor(sc.ion) * sc.force ** 2 / (sc.nu ** 4 * sc.d ** 3)


def back_solve(sc: CouplingScenario, rate: float, variable: str) -> float:
    """Value of ``variable`` (kappa, force, nu, d or mass) that gives ``rate``.

    The other fields are taken from ``sc``; its own value of ``variable`` is
    ignored.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    ion = sc.ion
    base = _prefactor(ion) * ion.mass ** 2  # mass dependence factored out
    m2 = ion.mass ** 2
    if variable == "kappa":
        return rate * m2 * sc.nu ** 4 * sc.d ** 3 / (base * sc.force ** 2)
    if variable == "force":
        return math.sqrt(rate * m2 * sc.nu ** 4 * sc.d ** 3 / (base * sc.kappa))
    if variable == "nu":
        return (sc.kappa * base * sc.force ** 2 / (rate * m2 * sc.d ** 3)) ** 0.25
    if variable == "d":
        return (sc.kappa * base * sc.force ** 2 / (rate * m2 * sc.nu ** 4)) ** (1.0 / 3.0)
    if variable == "mass":
        return math.sqrt(sc.kappa * base * sc.force ** 2 / (rate * sc.nu ** 4 * sc.d ** 3))
    raise ValueError(f"unknown variable {variable!r}")


@dataclass(frozen=True)
class ScaleRow:
    height: float           # m
    scale: float
    d: float                # m
    force: float            # N
    rate: float             # 1/s


@dataclass(frozen=True)
class CouplingBase:
    """A full-size trap description that the sweep shrinks.

    ``reference_center`` is the trap centre of the full-size trap (its z
    component is the ion height), ``reference_trap`` its secular
    frequencies and ``wires`` its current loops.  ``base_height`` is the ion
    height assigned to ``scale = 1`` of the sweep.
    """

    reference_trap: _crystal.HarmonicTrap
    reference_center: tuple[float, float, float]
    wires: magnetics.WireSet
    moment: magnetics.MagneticMoment = field(default_factory=magnetics.MagneticMoment)
    base_height: float = 10e-6
    n_ions: int = 2
    seed: int = 0
    kappa: float = 1.0
    nu_rule: str = "y"
    frequency_rule: str = "inverse"
    restarts: int = 16

    def __post_init__(self):
        object.__setattr__(self, "reference_center",
                           tuple(float(v) for v in self.reference_center))
        if not self.reference_center[2] > 0:
            raise ValueError("reference trap centre must lie above the plane")
        if not self.base_height > 0:
            raise ValueError("base_height must be positive")
        if self.nu_rule not in NU_RULES:
            raise ValueError(f"nu_rule must be one of {NU_RULES}")
        if self.frequency_rule not in FREQUENCY_RULES:
            raise ValueError(f"frequency_rule must be one of {FREQUENCY_RULES}")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def ion(self) -> Ion:
        return self.reference_trap.ion

    @property
    def base_factor(self) -> float:
        """Geometric factor from the full-size trap to ``scale = 1``."""
        return self.base_height / self.reference_center[2]


def default_base(layout: trap_model.ElectrodeLayout | None = None, ion: Ion = SR88,
                 **kwargs) -> CouplingBase:
    """Base scenario built from an electrode layout and inscribed square loops.

    The trap centre and secular frequencies come from :mod:`trap_model`; the
    three 1 A loops of :func:`magnetics.make_concentric_squares` sit in the
    trap plane under the centre electrode.
    """
    if layout is None:
        layout = trap_model.elliptical_trap_layout()
    modes = trap_model.secular_frequencies(layout, ion)
    trap = _crystal.HarmonicTrap(*modes.frequencies, ion=ion)
    wires = kwargs.pop("wires", None) or magnetics.make_concentric_squares()
    return CouplingBase(trap, tuple(modes.center), wires, **kwargs)


@dataclass(frozen=True, eq=False)
class ScaledScenario:
    scale: float
    height: float
    trap: _crystal.HarmonicTrap
    center: np.ndarray
    wires: magnetics.WireSet
    crystal: _crystal.IonCrystal
    ion_positions: np.ndarray
    forces: np.ndarray
    nu: float
    spacing: _crystal.SpacingReport

    def coupling(self, kappa: float = 1.0) -> CouplingScenario:
        force = float(np.linalg.norm(self.forces, axis=1).mean())
        return CouplingScenario(kappa, force, self.nu, self.spacing.d_mean, self.trap.ion)


def _relevant_nu(trap, rule, mean_force):
    freqs = trap.frequencies
    if rule == "force":
        # axis along which the mean force points
        return float(freqs[int(np.argmax(np.abs(mean_force)))])
    return float(freqs["xyz".index(rule)])


def scaled_scenario(base: CouplingBase, s: float) -> ScaledScenario:
    """The base trap shrunk by ``s`` (``s = 1`` is the base height).

    Geometry scales by ``s``, currents stay fixed, frequencies scale as
    ``1/s`` (``frequency_rule="inverse"``) or ``1/s^2`` (fixed drive,
    ``"inverse_square"``).  The crystal is solved at the scaled frequencies
    and placed at the scaled trap centre; ``F`` is evaluated at each ion.
    """
    if not s > 0:
        raise ValueError("scale must be positive")
    g = base.base_factor * s
    power = 1 if base.frequency_rule == "inverse" else 2
    trap = base.reference_trap.scaled(g ** -power)
    center = np.asarray(base.reference_center) * g
    wires = base.wires.scaled(g)
    cryst = _crystal.solve_equilibrium(trap, base.n_ions, base.seed, restarts=base.restarts)
    positions = cryst.positions + center
    forces = magnetics.spin_force(positions, wires, base.moment)
    nu = _relevant_nu(trap, base.nu_rule, forces.mean(axis=0))
    return ScaledScenario(
        scale=s, height=float(center[2]), trap=trap, center=center, wires=wires,
        crystal=cryst, ion_positions=positions, forces=forces, nu=nu,
        spacing=_crystal.crystal_spacings(cryst),
    )


def scale_row(scenario: ScaledScenario, kappa: float = 1.0) -> ScaleRow:
    sc = scenario.coupling(kappa)
    return ScaleRow(scenario.height, scenario.scale, sc.d, sc.force, j_rate(sc))


def scaling_table(base: CouplingBase, scales: Sequence[float]) -> list[ScaleRow]:
    """One :class:`ScaleRow` per scale; ``F`` is the mean per-ion force magnitude."""
    scales = [float(s) for s in scales]
    if any(not s > 0 for s in scales):
        raise ValueError("scales must be positive")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly ascending")
    return [scale_row(scaled_scenario(base, s), base.kappa) for s in scales]


def with_current_factor(base: CouplingBase, factor: float) -> CouplingBase:
    return replace(base, wires=base.wires.with_current_factor(factor))
