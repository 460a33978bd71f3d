"""Run configuration: ``[section]`` / ``key = value`` text files.

Units are part of the key names (``nu_x_hz``, ``a0_m`` ...).  Parsing fills
in defaults and validates values; :func:`dump` writes the fully resolved
configuration back out so that a run can be reproduced from its sidecar.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import magnetics, trap_model
from .constants import SR88_MASS_AMU


class ConfigError(ValueError):
    """Invalid or incomplete configuration; the message names the key."""


TRAP_MODES = ("harmonic", "geometry")
LAYOUTS = ("elliptical", "circular", "custom")


@dataclass
class RunConfig:
    ion: dict[str, Any] = field(default_factory=dict)
    trap: dict[str, Any] = field(default_factory=dict)
    electrodes: dict[str, dict[str, Any]] = field(default_factory=dict)
    crystal: dict[str, Any] = field(default_factory=dict)
    wires: dict[str, Any] = field(default_factory=dict)
    bfield: dict[str, Any] = field(default_factory=dict)
    sweep: dict[str, Any] = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return self.trap["mode"]

    def ion_obj(self) -> trap_model.Ion:
        return trap_model.Ion.from_units(self.ion["mass_amu"], self.ion["charge_e"])

    def layout(self) -> trap_model.ElectrodeLayout:
        t = self.trap
        common = dict(rf_amplitude=t["rf_amplitude_v"], rf_frequency=t["rf_frequency_hz"])
        if t["layout"] == "custom":
            rf, dc = [], []
            for name, e in self.electrodes.items():
                poly = trap_model.ElectrodePolygon(e["vertices_m"], name)
                if e["role"] == "rf":
                    rf.append(poly)
                else:
                    dc.append((poly, e["voltage_v"]))
            drive = trap_model.RfDrive(t["rf_amplitude_v"], 2 * np.pi * t["rf_frequency_hz"])
            return trap_model.ElectrodeLayout(tuple(rf), tuple(dc), drive)
        common.update(center_voltage=t["center_voltage_v"], n_vertices=t["n_vertices"])
        if t["layout"] == "circular":
            return trap_model.circular_ring_layout(t["r_inner_m"], t["r_outer_m"], **common)
        return trap_model.elliptical_trap_layout(
            (t["center_semi_x_m"], t["center_semi_y_m"]),
            t["outer_b_m"], t["outer_a_m"], t["outer_a_prime_m"], **common,
        )

    def wireset(self) -> magnetics.WireSet:
        w = self.wires
        return magnetics.make_concentric_squares(
            w["n_loops"], w["a0_m"], w["pitch_m"], w["height_m"], w["current_a"],
        )

    def moment(self) -> magnetics.MagneticMoment:
        return magnetics.MagneticMoment.along(self.wires["moment_direction"],
                                              self.wires["moment_bohr"])


# key -> (type, default); a default of ``REQUIRED`` must be given
REQUIRED = object()

_SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "ion": {
        "mass_amu": ("pos", SR88_MASS_AMU),
        "charge_e": ("nonzero", 1.0),
    },
    "crystal": {
        "n_ions": ("count", REQUIRED),
        "seed": ("int", 0),
        "restarts": ("count", 16),
        "force_rtol": ("pos", 1e-9),
        "max_evals": ("count", 100_000),
        "planar_eps": ("pos", 1e-3),
    },
    "wires": {
        "n_loops": ("count", 3),
        "a0_m": ("pos", 0.15e-3),
        "pitch_m": ("pos", 0.15e-3),
        "height_m": ("float", 0.0),
        "current_a": ("float", 1.0),
        "moment_direction": ("vec3", (0.0, 1.0, 0.0)),
        "moment_bohr": ("pos", 1.0),
    },
    "bfield": {
        "x_m": ("grid", (0.0, 0.0, 1)),
        "y_m": ("grid", (0.0, 0.0, 1)),
        "z_m": ("grid", (1e-4, 1e-3, 10)),
        "jacobian": ("bool", False),
    },
    "sweep": {
        "scales": ("scales", (1.0, 5.0, 10.0)),
        "kappa": ("pos", 1.0),
        "nu_rule": ("choice:x,y,z,force", "y"),
        "frequency_rule": ("choice:inverse,inverse_square", "inverse"),
        "base_height_m": ("pos", 10e-6),
        "n_ions": ("count", 2),
    },
}

_HARMONIC = {
    "nu_x_hz": ("pos", REQUIRED),
    "nu_y_hz": ("pos", REQUIRED),
    "nu_z_hz": ("pos", REQUIRED),
    # full-size ion height, used only by coupling-table
    "reference_height_m": ("pos", None),
}

_GEOMETRY = {
    "layout": ("choice:elliptical,circular,custom", "elliptical"),
    "rf_amplitude_v": ("pos", 150.0),
    "rf_frequency_hz": ("pos", 3.5e6),
    "center_voltage_v": ("float", 0.0),
    "n_vertices": ("count", trap_model.DEFAULT_VERTICES),
    "center_semi_x_m": ("pos", trap_model.DEFAULT_CENTER_AXES[0]),
    "center_semi_y_m": ("pos", trap_model.DEFAULT_CENTER_AXES[1]),
    "outer_b_m": ("pos", trap_model.DEFAULT_OUTER_B),
    "outer_a_m": ("pos", trap_model.DEFAULT_OUTER_A),
    "outer_a_prime_m": ("pos", trap_model.DEFAULT_OUTER_A_PRIME),
    "r_inner_m": ("pos", 1e-3),
    "r_outer_m": ("pos", 2e-3),
}

_ELECTRODE = {
    "role": ("choice:rf,dc", REQUIRED),
    "vertices_m": ("polygon", REQUIRED),
    "voltage_v": ("float", 0.0),
}


def _convert(kind: str, raw: str, key: str):
    try:
        if kind == "float":
            return float(raw)
        if kind in ("pos", "nonzero"):
            v = float(raw)
            if kind == "pos" and not v > 0:
                raise ConfigError(f"{key}: must be positive, got {raw!r}")
            if kind == "nonzero" and v == 0:
                raise ConfigError(f"{key}: must be nonzero")
            return v
        if kind in ("int", "count"):
            v = int(raw)
            if kind == "count" and v < 1:
                raise ConfigError(f"{key}: must be a positive integer, got {raw!r}")
            return v
        if kind == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split(",")
            v = raw.strip()
            if v not in options:
                raise ConfigError(f"{key}: expected one of {options}, got {raw!r}")
            return v
        if kind == "vec3":
            v = tuple(float(t) for t in raw.replace(",", " ").split())
            if len(v) != 3 or not any(v):
                raise ConfigError(f"{key}: expected a nonzero 3-vector")
            return v
        if kind == "grid":
            parts = [t for t in raw.replace(",", " ").split()]
            if len(parts) != 3:
                raise ConfigError(f"{key}: expected 'start, stop, count'")
            count = int(parts[2])
            if count < 1:
                raise ConfigError(f"{key}: grid count must be positive")
            return (float(parts[0]), float(parts[1]), count)
        if kind == "scales":
            v = tuple(float(t) for t in raw.replace(",", " ").split())
            if not v or any(not s > 0 for s in v):
                raise ConfigError(f"{key}: scales must be positive numbers")
            if any(b <= a for a, b in zip(v, v[1:])):
                raise ConfigError(f"{key}: scales must be strictly ascending")
            return v
        if kind == "polygon":
            pts = [p.split() for p in raw.replace("\n", " ").split(",") if p.strip()]
            v = tuple((float(p[0]), float(p[1])) for p in pts if len(p) == 2)
            if len(v) != len(pts) or len(v) < 3:
                raise ConfigError(f"{key}: expected at least 3 'x y' pairs separated by commas")
            return v
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None
    raise AssertionError(kind)


def _section(parser, name, schema, needed=True):
    values = {}
    raw = parser[name] if parser.has_section(name) else {}
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown key")
    for key, (kind, default) in schema.items():
        full = f"{name}.{key}"
        if key in raw:
            values[key] = _convert(kind, raw[key], full)
        elif default is REQUIRED:
            if needed:
                raise ConfigError(f"missing required key: {full}")
            values[key] = None
        else:
            values[key] = default
    return values


def parse(text: str, need_crystal: bool = False) -> RunConfig:
    """Parse and validate configuration text."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error: {exc}") from None

    known = {"ion", "trap", "crystal", "wires", "bfield", "sweep"}
    for sec in parser.sections():
        if sec not in known and not sec.startswith("electrode."):
            raise ConfigError(f"{sec}: unknown section")

    if not parser.has_section("trap") or "mode" not in parser["trap"]:
        raise ConfigError("missing required key: trap.mode")
    mode = parser["trap"]["mode"].strip()
    if mode not in TRAP_MODES:
        raise ConfigError(f"trap.mode: expected one of {list(TRAP_MODES)}, got {mode!r}")

    cfg = RunConfig()
    cfg.ion = _section(parser, "ion", _SCHEMA["ion"])
    trap_schema = dict(_HARMONIC if mode == "harmonic" else _GEOMETRY)
    trap_schema["mode"] = ("choice:harmonic,geometry", REQUIRED)
    cfg.trap = _section(parser, "trap", trap_schema)
    cfg.crystal = _section(parser, "crystal", _SCHEMA["crystal"], needed=need_crystal)
    cfg.wires = _section(parser, "wires", _SCHEMA["wires"])
    cfg.bfield = _section(parser, "bfield", _SCHEMA["bfield"])
    cfg.sweep = _section(parser, "sweep", _SCHEMA["sweep"])

    for sec in parser.sections():
        if sec.startswith("electrode."):
            if mode != "geometry":
                raise ConfigError(f"{sec}: electrode sections need trap.mode = geometry")
            cfg.electrodes[sec.split(".", 1)[1]] = _section(parser, sec, _ELECTRODE)
    if mode == "geometry":
        if cfg.electrodes and cfg.trap["layout"] != "custom":
            raise ConfigError("trap.layout: electrode sections given, set layout = custom")
        if cfg.trap["layout"] == "custom":
            if not any(e["role"] == "rf" for e in cfg.electrodes.values()):
                raise ConfigError("trap.layout: custom layout needs an [electrode.*] with role = rf")
    return cfg


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse(text)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(f"{x!r} {y!r}" for x, y in value)
        return ", ".join(_format(v) for v in value)
    return str(value)


def dump(cfg: RunConfig) -> str:
    """Fully resolved configuration text (defaults filled in)."""
    lines = []
    sections = [("ion", cfg.ion), ("trap", cfg.trap)]
    sections += [(f"electrode.{k}", v) for k, v in cfg.electrodes.items()]
    sections += [("crystal", cfg.crystal), ("wires", cfg.wires),
                 ("bfield", cfg.bfield), ("sweep", cfg.sweep)]
    for name, values in sections:
        items = [(k, v) for k, v in values.items() if v is not None]
        if name == "trap":
            items.sort(key=lambda kv: kv[0] != "mode")
        if not items:
            continue
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_format(v)}" for k, v in items)
        lines.append("")
    return "\n".join(lines)
