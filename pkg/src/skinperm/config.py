"""
Run configuration: strict JSON schema, defaults and the effective config.

A config file is a JSON object. Only ``chemical`` and ``t_end`` are
required; every other key has a default that is echoed back by
:meth:`RunConfig.to_dict`, so the emitted effective config re-parses to an
identical :class:`RunConfig`.
"""
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .chem import CSV_COLUMNS, ChemicalRecord, PARAM_FIELDS, Provenance, default_database, \
    load_database, lookup, record_from_mapping
from .errors import ConfigError, ParseError, SkinpermError
from .geometry import LayerProfile, layer_preset
from .solver.multigrid import SolverConfig
from .solver.stepping import TimeController

MAX_REFINEMENT = 6
EMIT_KINDS = ("csv", "vtk", "summary", "matrices")
DEFAULT_OUTPUT_COUNT = 97

TOP_KEYS = {"profile", "chemical", "database", "c0", "refinement_level", "base_resolution",
            "t_end", "output_times", "solver", "controller", "output_dir", "emit",
            "vtk_stride", "name"}
PROFILE_KEYS = {f.name for f in fields(LayerProfile)} | {"preset"}
CONTROLLER_KEYS = {"tau_init", "tau_min", "tau_max", "safety", "target_error", "error_floor",
                   "fixed_step"}
SOLVER_KEYS = {f.name for f in fields(SolverConfig)}


@dataclass(frozen=True)
class RunConfig:
    profile: LayerProfile
    chemical: ChemicalRecord
    controller: TimeController
    solver: SolverConfig = field(default_factory=SolverConfig)
    c0: float = 1.0
    refinement_level: int = 3
    base_resolution: int = 8
    output_dir: str = "output"
    emit: tuple = ("csv", "summary")
    vtk_stride: int = 8
    name: str = None
    database: str = None

    def __post_init__(self):
        level = self.refinement_level
        if not _is_int(level) or not 0 <= level <= MAX_REFINEMENT:
            raise ConfigError(f"refinement_level must be an integer in 0..{MAX_REFINEMENT}, "
                              f"got {level!r}")
        if not _is_int(self.base_resolution) or self.base_resolution < 4:
            raise ConfigError(f"base_resolution must be an integer >= 4, "
                              f"got {self.base_resolution!r}")
        if not (_is_number(self.c0) and math.isfinite(self.c0) and self.c0 > 0):
            raise ConfigError(f"c0 must be finite and > 0, got {self.c0!r}")
        if not _is_int(self.vtk_stride) or self.vtk_stride < 1:
            raise ConfigError(f"vtk_stride must be an integer >= 1, got {self.vtk_stride!r}")
        emit = tuple(self.emit)
        bad = [e for e in emit if e not in EMIT_KINDS]
        if bad:
            raise ConfigError(f"emit: unknown kind(s) {bad}; expected a subset of {EMIT_KINDS}")
        object.__setattr__(self, "emit", tuple(k for k in EMIT_KINDS if k in emit))
        if self.name is None:
            object.__setattr__(self, "name", slug(self.chemical.name))

    @property
    def t_end(self):
        return self.controller.t_end

    @property
    def output_times(self):
        return self.controller.output_times

    def to_dict(self):
        """Effective configuration as plain JSON data."""
        ctrl = {k: getattr(self.controller, k) for k in sorted(CONTROLLER_KEYS)}
        return {
            "name": self.name,
            "profile": self.profile.to_dict(),
            "chemical": record_to_mapping(self.chemical),
            "database": self.database,
            "c0": self.c0,
            "refinement_level": self.refinement_level,
            "base_resolution": self.base_resolution,
            "t_end": self.controller.t_end,
            "output_times": list(self.controller.output_times),
            "solver": asdict(self.solver),
            "controller": ctrl,
            "output_dir": self.output_dir,
            "emit": list(self.emit),
            "vtk_stride": self.vtk_stride,
        }

    def replace(self, **changes):
        """Copy with top-level or controller changes (``t_end``, ``output_times``, ...)."""
        data = self.to_dict()
        for key, value in changes.items():
            if key in CONTROLLER_KEYS:
                data["controller"][key] = value
            elif key == "profile" and isinstance(value, LayerProfile):
                data["profile"] = value.to_dict()
            elif key == "chemical" and isinstance(value, ChemicalRecord):
                data["chemical"] = record_to_mapping(value)
            elif key == "solver" and isinstance(value, SolverConfig):
                data["solver"] = asdict(value)
            else:
                data[key] = value
        if "t_end" in changes and "output_times" not in changes:
            data["output_times"] = {"count": len(self.output_times) or DEFAULT_OUTPUT_COUNT}
        if "chemical" in changes and "name" not in changes:
            data["name"] = None
        return parse_config_dict(data)


def slug(text):
    out = "".join(c.lower() if c.isalnum() else "_" for c in text.strip())
    return "_".join(p for p in out.split("_") if p) or "run"


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def record_to_mapping(record):
    """Inline-chemical JSON object holding only database-provenance values."""
    c, p = record.chemical, record.params
    out = {"name": c.name, "mw": c.mw, "log_kow": c.log_kow, "t_lag_h": c.t_lag}
    for name in PARAM_FIELDS:
        keep = p.provenance.get(name) == Provenance.DATABASE
        out[name] = getattr(p, name) if keep else None
    return out


def _number(section, key, value, integer=False):
    if integer:
        if not _is_int(value):
            raise ConfigError(f"{section}{key} must be an integer, got {value!r}")
        return value
    if not _is_number(value):
        raise ConfigError(f"{section}{key} must be a number, got {value!r}")
    return float(value)


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{section or 'config'} must be a JSON object")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section or 'config'}: {', '.join(unknown)}")


def parse_profile(value):
    """``"chest"``, ``"chest/young"`` or an object with ``preset``/``region`` and overrides."""
    if isinstance(value, str):
        region, _, age = value.partition("/")
        return layer_preset(region, age or "old")
    _check_keys("profile", value, PROFILE_KEYS)
    data = dict(value)
    region = data.pop("preset", None) or data.pop("region", None)
    data.pop("region", None)
    if region is None:
        raise ConfigError("profile needs 'preset' or 'region'")
    age = data.pop("age", "old")
    for key, v in data.items():
        _number("profile.", key, v)
    return layer_preset(region, age, **data)


def parse_chemical(value, database=None, base_dir="."):
    """Database name lookup or an inline record using the CSV column names."""
    if isinstance(value, str):
        if database is None:
            records = default_database()
        else:
            path = database if os.path.isabs(database) else os.path.join(base_dir, database)
            records = load_database(path)
        try:
            return lookup(records, value)
        except KeyError:
            raise ConfigError(f"unknown chemical {value!r} (not in the database)") from None
    _check_keys("chemical", value, set(CSV_COLUMNS))
    for key, v in value.items():
        if key != "name" and v is not None:
            _number("chemical.", key, v)
    try:
        return record_from_mapping(value)
    except (ParseError, SkinpermError) as exc:
        raise ConfigError(f"chemical: {exc}") from None


def output_grid(grid, t_end):
    """Resolve an output-time specification to a sorted tuple of hours."""
    if grid is None:
        grid = {"count": DEFAULT_OUTPUT_COUNT}
    if t_end == 0:
        return (0.0,)
    if isinstance(grid, list):
        times = [_number("output_times", f"[{i}]", t) for i, t in enumerate(grid)]
        return tuple(times)
    _check_keys("output_times", grid, {"count", "spacing", "first"})
    count = _number("output_times.", "count", grid.get("count", DEFAULT_OUTPUT_COUNT),
                    integer=True)
    if count < 2:
        raise ConfigError(f"output_times.count must be >= 2, got {count}")
    spacing = grid.get("spacing", "linear")
    if spacing == "linear":
        times = np.linspace(0.0, t_end, count)
    elif spacing == "log":
        first = _number("output_times.", "first", grid.get("first", t_end * 1e-3))
        if not 0 < first < t_end:
            raise ConfigError("output_times.first must lie in (0, t_end)")
        times = np.concatenate([[0.0], np.geomspace(first, t_end, count - 1)])
    else:
        raise ConfigError(f"output_times.spacing must be 'linear' or 'log', got {spacing!r}")
    times[-1] = t_end
    return tuple(float(t) for t in times)


def parse_config_dict(data, base_dir="."):
    """Validate a config mapping and fill in every default."""
    _check_keys("", data, TOP_KEYS)
    for key in ("chemical", "t_end"):
        if key not in data:
            raise ConfigError(f"config is missing required key {key!r}")
    t_end = _number("", "t_end", data["t_end"])
    if not (math.isfinite(t_end) and t_end >= 0):
        raise ConfigError(f"t_end must be finite and >= 0, got {t_end!r}")

    profile = parse_profile(data.get("profile", "chest/old"))
    database = data.get("database")
    if database is not None and not isinstance(database, str):
        raise ConfigError("database must be a path string")
    if database is not None and not os.path.isabs(database) and base_dir != ".":
        database = os.path.normpath(os.path.join(base_dir, database))
    chemical = parse_chemical(data["chemical"], database, base_dir)

    solver_data = data.get("solver", {})
    _check_keys("solver", solver_data, SOLVER_KEYS)
    solver = SolverConfig(**solver_data)

    ctrl_data = data.get("controller", {})
    _check_keys("controller", ctrl_data, CONTROLLER_KEYS)
    for key, v in ctrl_data.items():
        if key == "fixed_step":
            if not isinstance(v, bool):
                raise ConfigError(f"controller.fixed_step must be true or false, got {v!r}")
        else:
            _number("controller.", key, v)
    controller = TimeController(t_end=t_end, output_times=output_grid(data.get("output_times"),
                                                                      t_end), **ctrl_data)

    emit = data.get("emit", ["csv", "summary"])
    if not isinstance(emit, list) or not all(isinstance(e, str) for e in emit):
        raise ConfigError("emit must be a list of strings")
    output_dir = data.get("output_dir", "output")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir must be a path string")
    name = data.get("name")
    if name is not None and (not isinstance(name, str) or not name.strip()):
        raise ConfigError("name must be a non-empty string")
    return RunConfig(
        profile=profile, chemical=chemical, controller=controller, solver=solver,
        c0=data.get("c0", 1.0), refinement_level=data.get("refinement_level", 3),
        base_resolution=data.get("base_resolution", 8), output_dir=output_dir,
        emit=tuple(emit), vtk_stride=data.get("vtk_stride", 8), name=name, database=database,
    )


def parse_config(path):
    """Read and validate a UTF-8 JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
