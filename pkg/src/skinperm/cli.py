"""
Command line entry point: ``skinperm {simulate,sweep,mesh,estimate-params}``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure
(mesh, assembly, solver), 4 file system error.
"""
import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.io

from . import __version__
from .analysis import write_json, write_mass_csv
from .assembly import element_concentration
from .chem import PARAM_FIELDS, resolve_params
from .config import parse_config_dict, parse_profile, parse_chemical, slug
from .errors import (AssemblyError, ConfigError, DomainError, MeshError, ParseError,
                     ResolutionError, SkinpermError, SolverError, ValidationError)
from .geometry import generate_mesh, mesh_hierarchy
from .simulation import run_simulation
from .vtk import write_vtk

log = logging.getLogger("skinperm")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
LAYER_NAMES = ("depos", "sc", "ve", "de")
COMPARISON_HEADER = ("chemical", "layer", "m_max", "t_max_hours")


def exit_code(exc):
    if isinstance(exc, (ConfigError, ParseError, ValidationError, ResolutionError)):
        return EXIT_CONFIG
    if isinstance(exc, (SolverError, AssemblyError, MeshError, DomainError)):
        return EXIT_SOLVER
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_SOLVER


STAGES = {EXIT_CONFIG: "config", EXIT_SOLVER: "solver", EXIT_IO: "io"}


def _describe(exc):
    stage = getattr(exc, "stage", None) or STAGES[exit_code(exc)]
    return f"[{stage}] {type(exc).__name__}: {exc}"


# -- config handling ----------------------------------------------------------

def _load_raw(path):
    if path is None:
        return {}, "."
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data, os.path.dirname(os.path.abspath(path))


def build_config(args, **extra):
    """Merge ``--config`` with command line overrides and validate."""
    data, base = _load_raw(args.config)
    data = dict(data)
    overrides = {
        "chemical": getattr(args, "chemical", None),
        "profile": getattr(args, "profile", None),
        "t_end": getattr(args, "t_end", None),
        "refinement_level": getattr(args, "level", None),
        "database": getattr(args, "database", None),
        "output_dir": args.output_dir,
    }
    overrides.update(extra)
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.dump_matrices:
        data["emit"] = list(data.get("emit", ["csv", "summary"])) + ["matrices"]
    return parse_config_dict(data, base_dir=base)


# -- outputs ------------------------------------------------------------------

def _mmwrite(path, matrix):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        scipy.io.mmwrite(fh, matrix.tocoo())
    os.replace(tmp, path)


def params_table(params):
    return [{"field": name, "value": getattr(params, name),
             "provenance": params.provenance[name].value} for name in PARAM_FIELDS]


def write_outputs(result, out_dir):
    """Write the artifacts requested by ``result.config.emit``; returns their names."""
    cfg = result.config
    os.makedirs(out_dir, exist_ok=True)
    artifacts = []

    def path(name):
        artifacts.append(name)
        return os.path.join(out_dir, name)

    if "csv" in cfg.emit:
        write_mass_csv(path(f"{cfg.name}_masses.csv"), result.series)
    if "vtk" in cfg.emit and result.states:
        layers = result.mesh.layers.astype(np.int64)
        for k in range(0, len(result.states), cfg.vtk_stride):
            write_vtk(path(f"{cfg.name}_{k:04d}.vtk"), result.mesh,
                      point_data={"u": result.states[k]},
                      cell_data={"layer": layers, "concentration": element_concentration(
                          result.mesh, result.params, result.states[k])},
                      title=f"{cfg.name} t={result.series.times[k]!r} h")
    if "matrices" in cfg.emit:
        _mmwrite(path(f"{cfg.name}_mass.mtx"), result.system.mass)
        _mmwrite(path(f"{cfg.name}_stiffness.mtx"), result.system.stiffness)
    if "summary" in cfg.emit:
        name = f"{cfg.name}_summary.json"
        artifacts.append(name)
        payload = {
            "version": __version__,
            "config": cfg.to_dict(),
            "params": params_table(result.params),
            "summary": result.summary.to_dict(),
            "steps": result.stats.to_dict(),
            "artifacts": list(artifacts),
        }
        write_json(os.path.join(out_dir, name), payload)
    return artifacts


def summary_line(result):
    peaks = result.summary.peaks
    parts = [f"{layer.upper()} {m:.4g} @ {t / 24:.2f} d" for layer, (m, t) in peaks.items()]
    return f"{result.config.name}: M_max " + ", ".join(parts) + f"; drift {result.drift:.2e}"


def _simulate_one(config):
    result = run_simulation(config, keep_states="vtk" in config.emit)
    artifacts = write_outputs(result, config.output_dir)
    return result, artifacts


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args):
    config = build_config(args)
    result, _ = _simulate_one(config)
    print(summary_line(result))
    return EXIT_OK


def _sweep_job(config):
    """Worker body; returns plain data so it crosses process boundaries."""
    try:
        result, _ = _simulate_one(config)
    except (SkinpermError, OSError) as exc:
        return config.chemical.name, None, _describe(exc), exit_code(exc)
    s = result.series
    rows = {layer: tuple(result.summary.peaks[layer]) for layer in LAYER_NAMES}
    agg = s.sc + s.ve
    k = int(np.argmax(agg))
    rows["sc+ve"] = (float(agg[k]), float(s.times[k]))
    return config.chemical.name, rows, summary_line(result), EXIT_OK


def write_comparison(path, rows):
    """Comparison table sorted by chemical name, one line per layer."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_HEADER)
        for chem in sorted(rows):
            for layer, (m, t) in rows[chem].items():
                writer.writerow([chem, layer, repr(float(m)), repr(float(t))])
    os.replace(tmp, path)


def cmd_sweep(args):
    names = list(args.chemicals)
    if not names:
        print("sweep: at least one chemical name is required", file=sys.stderr)
        return EXIT_CONFIG
    data, _ = _load_raw(args.config)
    out_dir = args.output_dir or data.get("output_dir", "output")
    configs, outcomes = [], []
    for name in sorted(set(names)):
        try:
            cfg = build_config(args, chemical=name)
        except SkinpermError as exc:
            outcomes.append((name, None, _describe(exc), exit_code(exc)))
            continue
        configs.append(cfg.replace(output_dir=os.path.join(out_dir, cfg.name)))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes += list(pool.map(_sweep_job, configs))
    else:
        outcomes += [_sweep_job(cfg) for cfg in configs]

    rows, status = {}, EXIT_OK
    for name, table, message, code in outcomes:
        if table is None:
            print(f"{name}: FAILED {message}", file=sys.stderr)
            status = max(status, code)
        else:
            rows[name] = table
            print(message)
    os.makedirs(out_dir, exist_ok=True)
    write_comparison(os.path.join(out_dir, "comparison.csv"), rows)
    return status


def cmd_mesh(args):
    data, _ = _load_raw(args.config)
    profile = parse_profile(args.profile or data.get("profile", "chest/old"))
    level = args.level if args.level is not None else data.get("refinement_level", 0)
    if not isinstance(level, int) or not 0 <= level <= 6:
        raise ConfigError(f"refinement_level must be an integer in 0..6, got {level!r}")
    mesh = mesh_hierarchy(generate_mesh(profile, data.get("base_resolution", 8)), level)[-1]
    print(f"vertices {mesh.n_vertices}, edges {mesh.n_edges}, triangles {mesh.n_triangles}")
    out_dir = args.output_dir or data.get("output_dir", "output")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"mesh_{slug(profile.region)}_{profile.age}_L{level}.vtk")
    write_vtk(path, mesh, cell_data={"layer": mesh.layers.astype(np.int64)},
              title=f"{profile.region}/{profile.age} level {level}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_estimate_params(args):
    data, base = _load_raw(args.config)
    database = args.database or data.get("database")
    chemical = args.chemical or data.get("chemical")
    if chemical is None:
        raise ConfigError("estimate-params needs a chemical (--chemical or config)")
    record = parse_chemical(chemical, database, base)
    profile = parse_profile(args.profile or data.get("profile", "chest/old"))
    params = resolve_params(record, profile)
    print(f"{record.name} on {profile.region}/{profile.age} (MW {record.chemical.mw:g} Da)")
    print(f"{'field':<8} {'value':>14}  provenance")
    for row in params_table(params):
        print(f"{row['field']:<8} {row['value']:>14.6g}  {row['provenance']}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default,
                        help="JSON run configuration")
    parser.add_argument("--output-dir", metavar="PATH", default=default,
                        help="override the output directory")
    parser.add_argument("--dump-matrices", action="store_true",
                        default=argparse.SUPPRESS if suppress else False,
                        help="also write the mass and stiffness matrices (Matrix Market)")
    parser.add_argument("--log-level", default=argparse.SUPPRESS if suppress else "info",
                        choices=["debug", "info", "warning", "error"],
                        help="stderr log verbosity (default: info)")


def _run_flags(parser, chemical=True):
    if chemical:
        parser.add_argument("--chemical", help="database name of the chemical")
    parser.add_argument("--profile", help="skin preset such as chest/old or outer_forearm/young")
    parser.add_argument("--t-end", type=float, help="simulated time in hours")
    parser.add_argument("--level", type=int, help="refinement level (0-6)")
    parser.add_argument("--database", metavar="PATH", help="chemical database CSV")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skinperm", description="Finite-dose skin permeation simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation")
    _global_flags(p, suppress=True)
    _run_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run several chemicals and compare their peaks")
    _global_flags(p, suppress=True)
    _run_flags(p, chemical=False)
    p.add_argument("chemicals", nargs="*", help="chemical names")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mesh", help="generate a mesh and write it as VTK")
    _global_flags(p, suppress=True)
    p.add_argument("--profile", help="skin preset (default chest/old)")
    p.add_argument("--level", type=int, help="refinement level (default 0)")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("estimate-params", help="show resolved parameters with provenance")
    _global_flags(p, suppress=True)
    p.add_argument("--chemical", help="database name of the chemical")
    p.add_argument("--profile", help="skin preset (default chest/old)")
    p.add_argument("--database", metavar="PATH", help="chemical database CSV")
    p.set_defaults(func=cmd_estimate_params)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=getattr(logging, args.log_level.upper()), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except (SkinpermError, OSError) as exc:
        print(f"skinperm {args.command}: {_describe(exc)}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
