"""
Mass balances and summary statistics of a simulation.

All masses are per unit width of the cross-section, i.e. the discrete
integral of ``c = K u`` over a layer divided by the domain width, in
ug/um^2 for ``u`` in ug/um^3.
"""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .assembly import element_coefficients
from .errors import DomainError
from .geometry import BoundaryTag, SkinLayer

LAYER_NAMES = {SkinLayer.DEPOS: "depos", SkinLayer.SC: "sc", SkinLayer.VE: "ve",
               SkinLayer.DE: "de"}
CSV_HEADER = ("t_hours", "m_depos", "m_sc", "m_ve", "m_de", "m_released", "m_total", "flux_bot")
CURVES = ("depos", "sc", "ve", "de", "released", "total")


def layer_masses(u, mesh, boxes, params):
    """Mass per unit width of all four layers, indexed by :class:`SkinLayer`."""
    k_el, _ = element_coefficients(mesh, params)
    per_tri = k_el * boxes.fragment_area * u[mesh.triangles].sum(axis=1)
    return np.bincount(mesh.layers, weights=per_tri, minlength=4)[:4] / mesh.width


def layer_mass(state, mesh, boxes, params, layer):
    """Discrete integral of ``K u`` over one layer, per unit width.

    Dual-box fragments are assigned to the layer of the triangle they lie
    in, so boxes straddling an interface split their mass between layers.
    """
    try:
        layer = SkinLayer[layer.upper()] if isinstance(layer, str) else SkinLayer(layer)
    except (KeyError, ValueError):
        raise DomainError(f"unknown layer {layer!r}") from None
    return float(layer_masses(state.u, mesh, boxes, params)[layer])


def sink_flux(u, stiffness, bottom, width):
    """Outflow through the sink per unit width: ``-sum_{i in BOT} (A u)_i / W``."""
    return float(-(stiffness[bottom] @ u).sum() / width)


def boundary_flux(state, sys, mesh, params=None):
    """Mass flow through the BOT boundary per unit width (ug/(um^2 h)).

    Evaluated as the residual of the unconstrained stiffness rows of the
    sink vertices, which is the flux the discrete scheme actually removes.
    ``params`` is accepted for symmetry with :func:`layer_mass`; the
    coefficients are already inside ``sys.stiffness``.
    """
    bottom = mesh.boundary_vertices(BoundaryTag.BOT)
    return sink_flux(state.u, sys.stiffness, bottom, mesh.width)


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise DomainError("times must be one-dimensional")
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be sorted in increasing order")
    return times


def released_mass(times, flux):
    """Cumulative trapezoidal integral of the sink flux.

    ``m(t_k) = sum_{i<=k} (f_i + f_{i-1}) / 2 * (t_i - t_{i-1})`` with
    ``m(t_0) = 0``.
    """
    times = _check_times(times)
    flux = np.asarray(flux, dtype=float)
    if flux.shape != times.shape:
        raise DomainError("times and flux must have the same length")
    out = np.zeros_like(times)
    if len(times) > 1:
        out[1:] = np.cumsum(0.5 * (flux[1:] + flux[:-1]) * np.diff(times))
    return out


@dataclass
class MassSeries:
    """Per-layer masses, released mass and sink flux over time."""

    times: np.ndarray
    depos: np.ndarray
    sc: np.ndarray
    ve: np.ndarray
    de: np.ndarray
    released: np.ndarray
    flux: np.ndarray

    def __post_init__(self):
        self.times = _check_times(self.times)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("mass series times must be strictly increasing")
        for name in ("depos", "sc", "ve", "de", "released", "flux"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
            if getattr(self, name).shape != self.times.shape:
                raise DomainError(f"series {name!r} does not match the time grid")

    @property
    def total(self):
        return self.depos + self.sc + self.ve + self.de + self.released

    def curve(self, name):
        if name not in CURVES:
            raise DomainError(f"unknown curve {name!r}; expected one of {CURVES}")
        return getattr(self, name)

    def __len__(self):
        return len(self.times)


def conservation_audit(series):
    """Largest relative drift ``|total_k - total_0| / total_0``."""
    total = series.total
    if len(total) == 0 or total[0] == 0:
        raise DomainError("initial total mass is zero; drift is undefined")
    return float(np.max(np.abs(total - total[0])) / abs(total[0]))


def find_mmax_tmax(times, values=None):
    """Peak value and its time (earliest on ties).

    Accepts either ``(times, values)`` arrays or ``(series, curve_name)``.
    """
    if isinstance(times, MassSeries):
        times, values = times.times, times.curve(values)
    times, values = np.asarray(times, dtype=float), np.asarray(values, dtype=float)
    if values.size == 0:
        raise DomainError("cannot take the maximum of an empty series")
    k = int(np.argmax(values))
    return float(values[k]), float(times[k])


def find_intersections(times, a, b=None):
    """Crossings of two sampled curves by linear interpolation.

    Accepts ``(times, a, b)`` arrays or ``(series, name_a, name_b)``.
    A sign change of ``a - b`` between consecutive samples gives one
    crossing strictly inside that interval; a run of exact zeros between
    opposite signs gives a single crossing at the first zero. Identical
    curves give no crossings.
    """
    if isinstance(times, MassSeries):
        times, a, b = times.times, times.curve(a), times.curve(b)
    times = np.asarray(times, dtype=float)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if not (a.shape == b.shape == times.shape):
        raise DomainError("curves must be sampled on the same time grid")
    d = a - b
    out = []
    nz = np.flatnonzero(d != 0)
    for i, j in zip(nz[:-1], nz[1:]):
        if np.sign(d[i]) == np.sign(d[j]):
            continue
        if j == i + 1:
            theta = d[i] / (d[i] - d[j])
            t = times[i] + theta * (times[j] - times[i])
            m = a[i] + theta * (a[j] - a[i])
        else:
            t, m = times[i + 1], a[i + 1]
        out.append((float(t), float(m)))
    return out


def diffusion_time_estimate(length, diffusivity):
    """Characteristic diffusion time ``L**2 / D``."""
    if not (length > 0 and diffusivity > 0):
        raise DomainError(f"length and diffusivity must be > 0, got {length!r}, {diffusivity!r}")
    return length * length / diffusivity


@dataclass
class SummaryStats:
    peaks: dict
    intersections: list = field(default_factory=list)
    drift: float = 0.0

    def to_dict(self):
        return {
            "layers": {k: {"m_max": v[0], "t_max_hours": v[1]} for k, v in self.peaks.items()},
            "intersections": [
                {"curves": list(pair), "t_hours": t, "t_days": t / 24.0, "mass": m}
                for pair, t, m in self.intersections
            ],
            "conservation_drift": self.drift,
        }


def summarize(series, pairs=None):
    """Peaks of every layer curve, pairwise intersections and the drift."""
    peaks = {name: find_mmax_tmax(series, name) for name in ("depos", "sc", "ve", "de")}
    if pairs is None:
        names = ("depos", "sc", "ve", "de", "released")
        pairs = [(p, q) for k, p in enumerate(names) for q in names[k + 1:]]
    inter = [((p, q), t, m) for p, q in pairs for t, m in find_intersections(series, p, q)]
    drift = conservation_audit(series) if len(series) and series.total[0] != 0 else 0.0
    return SummaryStats(peaks=peaks, intersections=inter, drift=drift)


def _atomic_open(path):
    return open(f"{path}.tmp", "w", newline="", encoding="utf-8")


def write_mass_csv(path, series):
    """One row per output time with the columns of :data:`CSV_HEADER`."""
    with _atomic_open(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        cols = (series.times, series.depos, series.sc, series.ve, series.de,
                series.released, series.total, series.flux)
        for row in zip(*cols):
            writer.writerow([repr(float(v)) for v in row])
    os.replace(f"{path}.tmp", path)


def read_mass_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CSV_HEADER:
        raise DomainError(f"{path}: unexpected header {rows[0]}")
    data = np.array(rows[1:], dtype=float).reshape(-1, len(CSV_HEADER))
    return MassSeries(times=data[:, 0], depos=data[:, 1], sc=data[:, 2], ve=data[:, 3],
                      de=data[:, 4], released=data[:, 5], flux=data[:, 7])


def write_json(path, payload):
    with _atomic_open(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(f"{path}.tmp", path)
