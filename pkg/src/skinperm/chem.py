"""
Chemical database and per-layer partition/diffusion parameters.

Canonical units: lengths in um, time in hours, diffusivities in um^2/h.
Partition coefficients are dimensionless.
"""
import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources

import numpy as np

from .errors import DomainError, ParseError, ResolutionError, ValidationError
from .geometry import SkinLayer

#: 1 cm^2/s expressed in um^2/h.
CM2_PER_S_TO_UM2_PER_H = 1e8 * 3600.0

CSV_COLUMNS = ("name", "mw", "log_kow", "t_lag_h", "k_depos", "k_sc", "k_ve", "k_de",
               "d_depos", "d_sc", "d_ve", "d_de")
K_FIELDS = ("k_depos", "k_sc", "k_ve", "k_de")
D_FIELDS = ("d_depos", "d_sc", "d_ve", "d_de")
PARAM_FIELDS = K_FIELDS + D_FIELDS


class Provenance(str, Enum):
    DATABASE = "database"
    ESTIMATED_DFREE = "estimated_dfree"
    ESTIMATED_DSC = "estimated_dsc"
    DEFAULT = "default"


def d_free(mw):
    """Free-solution diffusivity estimate in cm^2/s from molecular weight (Da).

    ``10 ** (-4.15 - 0.6555 * log10(mw))``
    """
    if not (np.all(np.isfinite(mw)) and np.all(np.asarray(mw) > 0)):
        raise DomainError(f"molecular weight must be finite and > 0, got {mw!r}")
    return 10.0 ** (-4.15 - 0.6555 * np.log10(mw))


def d_sc(h_sc, t_lag):
    """Stratum corneum diffusivity (um^2/h) from its thickness (um) and the
    permeation lag time (h): ``h_sc**2 / (6 t_lag)``."""
    if not (h_sc > 0 and t_lag > 0 and math.isfinite(h_sc) and math.isfinite(t_lag)):
        raise DomainError(f"h_sc and t_lag must be finite and > 0, got {h_sc!r}, {t_lag!r}")
    return h_sc * h_sc / (6.0 * t_lag)


def convert_diffusivity(d):
    """cm^2/s -> um^2/h."""
    if np.any(np.asarray(d) < 0) or not np.all(np.isfinite(d)):
        raise DomainError(f"diffusivity must be finite and >= 0, got {d!r}")
    return d * CM2_PER_S_TO_UM2_PER_H


@dataclass(frozen=True)
class Chemical:
    name: str
    mw: float
    log_kow: float = None
    t_lag: float = None

    def __post_init__(self):
        if not self.name or not self.name.strip():
            raise ValidationError("chemical name must be non-empty")
        if self.mw is None:
            raise ValidationError(f"{self.name}: molecular weight is mandatory")
        if not (math.isfinite(self.mw) and self.mw > 0):
            raise ValidationError(f"{self.name}: mw must be > 0, got {self.mw!r}")
        if self.t_lag is not None and not (math.isfinite(self.t_lag) and self.t_lag > 0):
            raise ValidationError(f"{self.name}: t_lag must be > 0, got {self.t_lag!r}")


@dataclass(frozen=True)
class LayerParams:
    """Partition coefficients and diffusivities (um^2/h) of the four layers.

    Fields may be ``None`` before :func:`resolve_params`; ``provenance``
    maps every present field name to a :class:`Provenance`.
    """

    k_depos: float = None
    k_sc: float = None
    k_ve: float = None
    k_de: float = None
    d_depos: float = None
    d_sc: float = None
    d_ve: float = None
    d_de: float = None
    provenance: dict = field(default_factory=dict, compare=True)

    def __post_init__(self):
        for name in PARAM_FIELDS:
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ValidationError(f"{name} must be finite and > 0, got {value!r}")
            if value is not None and name not in self.provenance:
                raise ValidationError(f"{name} has no provenance")

    @property
    def is_resolved(self):
        return all(getattr(self, f) is not None for f in PARAM_FIELDS)

    def missing(self):
        return [f for f in PARAM_FIELDS if getattr(self, f) is None]

    def partition(self):
        """K per :class:`SkinLayer` index as an array of length 4."""
        self._require_resolved()
        return np.array([getattr(self, f) for f in K_FIELDS])

    def diffusivity(self):
        """D per :class:`SkinLayer` index as an array of length 4."""
        self._require_resolved()
        return np.array([getattr(self, f) for f in D_FIELDS])

    def _require_resolved(self):
        if not self.is_resolved:
            raise ResolutionError(f"unresolved parameters: {', '.join(self.missing())}",
                                  field=self.missing()[0])

    def table(self):
        """Rows ``(field, value, unit, provenance)`` for display."""
        rows = []
        for name in PARAM_FIELDS:
            value = getattr(self, name)
            unit = "-" if name.startswith("k_") else "um^2/h"
            prov = self.provenance.get(name)
            rows.append((name, value, unit, prov.value if prov is not None else "missing"))
        return rows

    def to_dict(self):
        out = {name: getattr(self, name) for name in PARAM_FIELDS}
        out["provenance"] = {k: Provenance(v).value for k, v in sorted(self.provenance.items())}
        return out


@dataclass(frozen=True)
class ChemicalRecord:
    chemical: Chemical
    params: LayerParams

    @property
    def name(self):
        return self.chemical.name


def record_from_mapping(values, row=None):
    """Build a record from a mapping of CSV column names to strings or numbers.

    Empty strings and ``None`` mean "missing".
    """
    def number(key):
        raw = values.get(key)
        if raw is None or (isinstance(raw, str) and raw.strip() == ""):
            return None
        try:
            out = float(raw)
        except (TypeError, ValueError):
            raise ParseError(f"column {key!r}: cannot parse {raw!r} as a number", row) from None
        return out

    unknown = set(values) - set(CSV_COLUMNS)
    if unknown:
        raise ParseError(f"unknown field(s): {', '.join(sorted(unknown))}", row)
    name = (values.get("name") or "").strip()
    try:
        chem = Chemical(name=name, mw=number("mw"), log_kow=number("log_kow"),
                        t_lag=number("t_lag_h"))
        present = {k: number(k) for k in PARAM_FIELDS}
        prov = {k: Provenance.DATABASE for k, v in present.items() if v is not None}
        params = LayerParams(**present, provenance=prov)
    except ValidationError as exc:
        if row is not None:
            raise ValidationError(f"row {row}: {exc}") from None
        raise
    return ChemicalRecord(chem, params)


def load_database(path):
    """Parse and validate a chemical CSV database.

    The header must be exactly ``name,mw,log_kow,t_lag_h,k_depos,k_sc,k_ve,
    k_de,d_depos,d_sc,d_ve,d_de``; diffusivities are in um^2/h and an empty
    cell means "missing".
    """
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_rows(csv.reader(fh))


def _parse_rows(reader):
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file, expected a header row", 1) from None
    if tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise ParseError(f"header must be {','.join(CSV_COLUMNS)}", 1)
    records, seen = [], {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_COLUMNS):
            raise ParseError(f"expected {len(CSV_COLUMNS)} columns, found {len(row)}", lineno)
        rec = record_from_mapping(dict(zip(CSV_COLUMNS, row)), row=lineno)
        key = rec.name.lower()
        if key in seen:
            raise ValidationError(
                f"row {lineno}: duplicate chemical {rec.name!r} (first seen in row {seen[key]})")
        seen[key] = lineno
        records.append(rec)
    return records


def write_database(records, path):
    """Write records in the database CSV format (inverse of :func:`load_database`).

    Only values with ``database`` provenance are written, so resolved
    estimates do not masquerade as measured data.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            c, p = rec.chemical, rec.params
            row = [c.name, _cell(c.mw), _cell(c.log_kow), _cell(c.t_lag)]
            for name in PARAM_FIELDS:
                keep = p.provenance.get(name) == Provenance.DATABASE
                row.append(_cell(getattr(p, name) if keep else None))
            writer.writerow(row)


def _cell(value):
    return "" if value is None else repr(float(value))


def default_database_path():
    return resources.files("skinperm") / "data" / "chemicals.csv"


def default_database():
    """Records of the shipped database."""
    with resources.as_file(default_database_path()) as path:
        return load_database(path)


def lookup(records, name):
    """Case-insensitive lookup by chemical name; raises ``KeyError``."""
    key = name.strip().lower()
    for rec in records:
        if rec.name.lower() == key:
            return rec
    raise KeyError(f"chemical {name!r} not found in database")


def resolve_params(record, profile):
    """Fill every missing parameter of ``record`` for the given profile.

    * D_VE, D_DE: free-diffusivity estimate from MW (``estimated_dfree``).
    * D_SC: lag-time formula with ``profile.h_sc`` (``estimated_dsc``).
    * D_DEPOS: copy of the resolved D_VE (``default``).
    * Any K: 1 (``default``).

    Present values and their provenance are kept, so resolving twice is a
    no-op.
    """
    p = record.params
    values = {name: getattr(p, name) for name in PARAM_FIELDS}
    prov = dict(p.provenance)
    for name in ("d_ve", "d_de"):
        if values[name] is None:
            values[name] = float(convert_diffusivity(d_free(record.chemical.mw)))
            prov[name] = Provenance.ESTIMATED_DFREE
    if values["d_sc"] is None:
        if record.chemical.t_lag is None:
            raise ResolutionError(
                f"{record.name}: d_sc is unresolvable (no database value and no t_lag)",
                field="d_sc")
        values["d_sc"] = d_sc(profile.h_sc, record.chemical.t_lag)
        prov["d_sc"] = Provenance.ESTIMATED_DSC
    if values["d_depos"] is None:
        values["d_depos"] = values["d_ve"]
        prov["d_depos"] = Provenance.DEFAULT
    for name in K_FIELDS:
        if values[name] is None:
            values[name] = 1.0
            prov[name] = Provenance.DEFAULT
    return LayerParams(**values, provenance=prov)


def uniform_params(k=1.0, d=1.0):
    """Identical K and D in every layer (test and oracle setups)."""
    values = {name: float(k) for name in K_FIELDS}
    values.update({name: float(d) for name in D_FIELDS})
    return LayerParams(**values, provenance={n: Provenance.DEFAULT for n in PARAM_FIELDS})


def params_with(params, **changes):
    """Copy of resolved ``params`` with some values replaced (provenance ``default``)."""
    prov = dict(params.provenance)
    prov.update({k: Provenance.DEFAULT for k in changes})
    return replace(params, **changes, provenance=prov)


def layer_values(params, layer):
    """``(K, D)`` of one layer."""
    layer = SkinLayer(layer)
    return params.partition()[layer], params.diffusivity()[layer]


__all__ = [
    "Chemical", "ChemicalRecord", "LayerParams", "Provenance", "convert_diffusivity",
    "d_free", "d_sc", "default_database", "default_database_path", "load_database", "lookup",
    "params_with", "record_from_mapping", "resolve_params", "uniform_params", "write_database",
]
