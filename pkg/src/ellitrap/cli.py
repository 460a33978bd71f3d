"""Command-line batch runner.

    ellitrap <subcommand> --config run.ini --out result.csv [--seed N] [--quiet]

Subcommands: ``frequencies``, ``crystal``, ``bfield``, ``modes``,
``coupling-table``.  Every run writes its resolved configuration next to the
output as ``<out>.config.ini``; ``crystal`` also writes ``<out>.report.csv``.
Files are written only after all computation succeeded.

Exit codes: 0 success, 1 configuration error, 2 solver did not converge,
3 unstable trap, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import io
import os
import sys
import tempfile
import warnings

import numpy as np

from . import config as _config
from . import coupling, crystal, magnetics, trap_model

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_UNSTABLE, EXIT_IO = range(5)

SUBCOMMANDS = ("frequencies", "crystal", "bfield", "modes", "coupling-table")


def _num(v) -> str:
    return f"{float(v):.17e}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(v if isinstance(v, str) else _num(v) for v in row) + "\n")
    return buf.getvalue()


def _secular(cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("error", trap_model.StabilityWarning)
        return trap_model.secular_frequencies(cfg.layout(), cfg.ion_obj())


def _harmonic_trap(cfg) -> crystal.HarmonicTrap:
    ion = cfg.ion_obj()
    if cfg.mode == "harmonic":
        t = cfg.trap
        return crystal.HarmonicTrap(t["nu_x_hz"], t["nu_y_hz"], t["nu_z_hz"], ion)
    return crystal.HarmonicTrap(*(float(f) for f in _secular(cfg).frequencies), ion=ion)


def _solve(cfg):
    c = cfg.crystal
    return crystal.solve_equilibrium(
        _harmonic_trap(cfg), c["n_ions"], c["seed"], restarts=c["restarts"],
        force_rtol=c["force_rtol"], max_evals=c["max_evals"],
    )


def run_frequencies(cfg):
    if cfg.mode != "geometry":
        raise _config.ConfigError("trap.mode: frequencies needs mode = geometry")
    m = _secular(cfg)
    header = ["nu_x_hz", "nu_y_hz", "nu_z_hz", "q_x", "q_y", "q_z",
              "center_x_m", "center_y_m", "center_z_m"]
    return {"": _csv(header, [list(m.frequencies) + list(m.q) + list(m.center)])}, ""


def run_crystal(cfg):
    cr = _solve(cfg)
    rep = crystal.crystal_spacings(cr)
    planar = crystal.is_planar(cr, cfg.crystal["planar_eps"])
    positions = _csv(["ion_index", "x_m", "y_m", "z_m"],
                     ([str(i)] + list(p) for i, p in enumerate(cr.positions)))
    header = ["d_x_m", "d_y_m", "d_mean_m", "z_extent_m", "planar", "energy_j",
              "residual_force_n"]
    row = [rep.d_x, rep.d_y, rep.d_mean, rep.z_extent, "true" if planar else "false",
           cr.energy, cr.residual_force]
    report = _csv(header, [row])
    line = (f"d_x = {rep.d_x * 1e6:.4f} um, d_y = {rep.d_y * 1e6:.4f} um, "
            f"d_mean = {rep.d_mean * 1e6:.4f} um, z_extent = {rep.z_extent:.3e} m, "
            f"planar = {planar}, energy = {cr.energy:.6e} J, "
            f"residual_force = {cr.residual_force:.3e} N")
    return {"": positions, ".report.csv": report}, line


def run_modes(cfg):
    spectrum = crystal.normal_modes(_solve(cfg))
    rows = ([str(i), f] for i, f in enumerate(spectrum.frequencies))
    return {"": _csv(["mode_index", "frequency_hz"], rows)}, ""


def run_bfield(cfg):
    b = cfg.bfield
    axes = [np.linspace(*b[k]) for k in ("x_m", "y_m", "z_m")]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    data = magnetics.field_map(grid, cfg.wireset(), with_jacobian=b["jacobian"])
    header = ["x_m", "y_m", "z_m", "Bx_T", "By_T", "Bz_T"]
    if b["jacobian"]:
        header += [f"dB{a}_d{c}_T_per_m" for a in "xyz" for c in "xyz"]
    return {"": _csv(header, data)}, ""


def _coupling_base(cfg) -> coupling.CouplingBase:
    sw = cfg.sweep
    kwargs = dict(
        moment=cfg.moment(), base_height=sw["base_height_m"], n_ions=sw["n_ions"],
        seed=cfg.crystal["seed"], kappa=sw["kappa"], nu_rule=sw["nu_rule"],
        frequency_rule=sw["frequency_rule"], restarts=cfg.crystal["restarts"],
    )
    if cfg.mode == "geometry":
        return coupling.default_base(cfg.layout(), cfg.ion_obj(), wires=cfg.wireset(), **kwargs)
    height = cfg.trap["reference_height_m"]
    if height is None:
        raise _config.ConfigError("missing required key: trap.reference_height_m")
    return coupling.CouplingBase(_harmonic_trap(cfg), (0.0, 0.0, height), cfg.wireset(), **kwargs)


def run_coupling_table(cfg):
    rows = coupling.scaling_table(_coupling_base(cfg), cfg.sweep["scales"])
    header = ["H_m", "scale", "d_m", "F_N", "J_per_s"]
    return {"": _csv(header, ([r.height, r.scale, r.d, r.force, r.rate] for r in rows))}, ""


_RUNNERS = {
    "frequencies": run_frequencies,
    "crystal": run_crystal,
    "bfield": run_bfield,
    "modes": run_modes,
    "coupling-table": run_coupling_table,
}


def _write_all(files: dict[str, str]):
    """Write every file to a temporary name first, then rename them all."""
    staged = []
    try:
        for path, text in files.items():
            directory = os.path.dirname(os.path.abspath(path))
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ellitrap-", suffix=".tmp")
            staged.append(tmp)
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        for tmp, path in zip(staged, files):
            os.replace(tmp, path)
    finally:
        for tmp in staged:
            if os.path.exists(tmp):
                os.remove(tmp)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ellitrap", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="configuration file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None, help="override crystal.seed")
    p.add_argument("--quiet", action="store_true", help="suppress the stdout summary")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def fail(code, msg):
        print(f"ellitrap: error: {msg}", file=sys.stderr)
        return code

    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        return fail(EXIT_IO, f"cannot read config: {exc}")
    try:
        cfg = _config.parse(text, need_crystal=args.subcommand in ("crystal", "modes"))
        if args.seed is not None:
            cfg.crystal["seed"] = args.seed
        outputs, summary = _RUNNERS[args.subcommand](cfg)
    except _config.ConfigError as exc:
        return fail(EXIT_CONFIG, str(exc))
    except ValueError as exc:
        return fail(EXIT_CONFIG, str(exc))
    except (crystal.NotConvergedError, crystal.SaddleError,
            trap_model.NotConvergedError, trap_model.NullNotFoundError) as exc:
        return fail(EXIT_CONVERGENCE, str(exc))
    except (trap_model.UnstableTrapError, trap_model.StabilityWarning,
            crystal.UnstableConfigurationError) as exc:
        return fail(EXIT_UNSTABLE, str(exc))

    files = {args.out + suffix: text for suffix, text in outputs.items()}
    files[args.out + ".config.ini"] = _config.dump(cfg)
    try:
        _write_all(files)
    except OSError as exc:
        return fail(EXIT_IO, f"cannot write output: {exc}")
    if not args.quiet:
        if summary:
            print(summary)
        print(f"wrote {args.out}")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
