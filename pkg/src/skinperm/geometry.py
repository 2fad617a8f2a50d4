"""
Layered skin geometry: papillae interface functions, layer profiles,
triangular meshes, uniform red refinement and the vertex-centred dual
(box) control volumes.

Coordinates are in micrometres. ``y = 0`` is the bottom of the dermis
(where the sink sits) and ``y`` grows towards the skin surface, so the
stack from bottom to top reads DE, VE, SC, DEPOS.
"""
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError, MeshError


class SkinLayer(IntEnum):
    DEPOS = 0
    SC = 1
    VE = 2
    DE = 3


class BoundaryTag(IntEnum):
    TOP = 1
    BOT = 2
    LATERAL = 3


REGIONS = ("chest", "abdomen", "outer_forearm", "custom")
AGES = ("young", "old")

#: Deposition layer (patch) thickness, identical for every preset.
DEPOS_THICKNESS = 50.0

#: Papillae period by age group.
AGE_PERIOD = {"old": 200.0, "young": 150.0}

#: Number of papillae periods spanned by the preset domains.
PRESET_PERIODS = 2

# Thicknesses in um; amplitude is the papillae height h.
REGION_PRESETS = {
    "chest": {"h_sc": 20.0, "h_ve": 80.0, "h_de": 1500.0, "papillae_amplitude": 100.0},
    "abdomen": {"h_sc": 15.0, "h_ve": 70.0, "h_de": 1400.0, "papillae_amplitude": 100.0},
    "outer_forearm": {"h_sc": 40.0, "h_ve": 70.0, "h_de": 1200.0, "papillae_amplitude": 100.0},
}

# Element rows per band at level 0. Halvings count how often a vertex line
# is coarsened relative to the interface resolution; dermis entries run
# from the interface downwards.
ROWS_DEPOS = 2
ROWS_SC = 2
VE_HALVINGS = (0, 0)
ROWS_VE = len(VE_HALVINGS)
DE_HALVINGS = (0, 1, 2, 3, 3, 3, 3, 3, 3, 3)
DE_GRADING = 1.3
DE_FADE = 0.5


def _check_period(a):
    if not (np.all(np.isfinite(a)) and np.all(np.asarray(a) > 0)):
        raise DomainError(f"papillae period must be finite and positive, got {a!r}")


def papilla_height(x, h, a):
    """Height of the papillae surface above its trough.

    ``f(x) = h/2 * sin(2 pi x / a - pi/2) + h/2``, so ``f(0) = 0`` and the
    peak ``f(a/2) = h``. Accepts scalars or arrays.
    """
    _check_period(a)
    if np.any(np.asarray(h) < 0):
        raise DomainError(f"papillae amplitude must be non-negative, got {h!r}")
    return 0.5 * h * np.sin(2.0 * np.pi * np.asarray(x) / a - 0.5 * np.pi) + 0.5 * h


def papilla_height_3d(x, y, h, a):
    """Three-dimensional papillae surface ``f(x) * g(y)`` with ``g = f / h``."""
    fx = papilla_height(x, h, a)
    if h == 0:
        return np.zeros_like(fx) if np.ndim(fx) else 0.0
    return fx * papilla_height(y, h, a) / h


@dataclass(frozen=True)
class LayerProfile:
    """Geometric description of one skin configuration (all lengths in um)."""

    region: str
    age: str
    h_depos: float
    h_sc: float
    h_ve: float
    h_de: float
    papillae_amplitude: float
    papillae_period: float
    domain_width: float

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ConfigError(f"unknown region {self.region!r}; expected one of {REGIONS}")
        if self.age not in AGES:
            raise ConfigError(f"unknown age {self.age!r}; expected one of {AGES}")
        for name in ("h_depos", "h_sc", "h_ve", "h_de", "papillae_period", "domain_width"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
        h = self.papillae_amplitude
        if not (math.isfinite(h) and h >= 0):
            raise ConfigError(f"papillae_amplitude must be finite and >= 0, got {h!r}")
        if h >= self.h_de:
            raise ConfigError(
                f"papillae_amplitude ({h}) must be smaller than h_de ({self.h_de})")
        periods = self.domain_width / self.papillae_period
        if abs(periods - round(periods)) > 1e-9 * max(1.0, periods) or round(periods) < 1:
            raise ConfigError(
                f"domain_width ({self.domain_width}) must be an integer multiple of "
                f"papillae_period ({self.papillae_period})")

    @property
    def periods(self):
        return int(round(self.domain_width / self.papillae_period))

    @property
    def y_sc_ve(self):
        return self.h_de + self.h_ve

    @property
    def y_depos_sc(self):
        return self.h_de + self.h_ve + self.h_sc

    @property
    def height(self):
        return self.h_de + self.h_ve + self.h_sc + self.h_depos

    def ve_de_interface(self, x):
        """Height of the VE/DE interface; papillae peaks reach ``h_de``."""
        return self.h_de - self.papillae_amplitude + papilla_height(
            x, self.papillae_amplitude, self.papillae_period)

    def layer_areas(self):
        """Exact cross-section area of every layer (um^2)."""
        w = self.domain_width
        de = w * (self.h_de - 0.5 * self.papillae_amplitude)
        return {
            SkinLayer.DEPOS: w * self.h_depos,
            SkinLayer.SC: w * self.h_sc,
            SkinLayer.VE: w * (self.h_ve + self.h_de) - de,
            SkinLayer.DE: de,
        }

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def layer_preset(region, age="old", **overrides):
    """Return the layer profile of a named body region and age group.

    ``region='custom'`` requires ``h_sc``, ``h_ve``, ``h_de`` and
    ``papillae_amplitude`` in ``overrides``; any preset value may also be
    overridden for the named regions.
    """
    if region not in REGIONS:
        raise ConfigError(f"unknown region {region!r}; expected one of {REGIONS}")
    if age not in AGES:
        raise ConfigError(f"unknown age {age!r}; expected one of {AGES}")
    period = AGE_PERIOD[age]
    values = {
        "h_depos": DEPOS_THICKNESS,
        "papillae_period": period,
        "domain_width": PRESET_PERIODS * period,
    }
    if region == "custom":
        missing = [k for k in ("h_sc", "h_ve", "h_de", "papillae_amplitude") if k not in overrides]
        if missing:
            raise ConfigError(f"custom profile is missing {', '.join(missing)}")
    else:
        values.update(REGION_PRESETS[region])
    unknown = set(overrides) - set(LayerProfile.__dataclass_fields__) - {"region", "age"}
    if unknown:
        raise ConfigError(f"unknown profile field(s): {', '.join(sorted(unknown))}")
    values.update({k: float(v) for k, v in overrides.items()})
    if "papillae_period" in overrides and "domain_width" not in overrides:
        values["domain_width"] = PRESET_PERIODS * values["papillae_period"]
    return LayerProfile(region=region, age=age, **values)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with layer and boundary tags.

    Attributes
    ----------
    vertices : (n, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    layers : (T,) int array of :class:`SkinLayer` values
    boundary_edges : (B, 2) int array
    boundary_tags : (B,) int array of :class:`BoundaryTag` values
    refinement_level : int
    profile : LayerProfile or None
        Used to snap new VE/DE interface vertices onto the analytic curve.
    parent_edges : (n - n_coarse, 2) int array or None
        Coarse-mesh endpoints of every vertex created by the last refinement
        (vertex ``n_coarse + e`` is the midpoint of coarse edge ``e``).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    layers: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    refinement_level: int = 0
    profile: LayerProfile = None
    parent_edges: np.ndarray = field(default=None, repr=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def _edge_data(self):
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        edges, inverse = np.unique(np.sort(local, axis=1), axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self):
        """Edge index of the local edges (v0,v1), (v1,v2), (v2,v0)."""
        return self._edge_data[1]

    @cached_property
    def edge_triangles(self):
        """(E, 2) adjacent triangles per edge, -1 where there is none."""
        te = self.triangle_edges.ravel()
        owner = np.repeat(np.arange(self.n_triangles), 3)
        counts = np.bincount(te, minlength=self.n_edges)
        if counts.max() > 2:
            raise MeshError("non-manifold mesh: an edge is shared by more than two triangles")
        out = np.full((self.n_edges, 2), -1, dtype=np.int64)
        order = np.argsort(te, kind="stable")
        te_sorted, owner_sorted = te[order], owner[order]
        first = np.ones(len(te_sorted), dtype=bool)
        first[1:] = te_sorted[1:] != te_sorted[:-1]
        out[te_sorted[first], 0] = owner_sorted[first]
        out[te_sorted[~first], 1] = owner_sorted[~first]
        return out

    @cached_property
    def triangle_areas(self):
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self):
        return float(self.triangle_areas.sum())

    @property
    def width(self):
        return float(self.vertices[:, 0].max() - self.vertices[:, 0].min())

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def layer_area(self, layer):
        return float(self.triangle_areas[self.layers == layer].sum())

    def boundary_vertices(self, tag):
        """Sorted unique vertex indices on boundary edges with ``tag``."""
        return np.unique(self.boundary_edges[self.boundary_tags == tag])

    def interface_edges(self, lower=SkinLayer.DE, upper=SkinLayer.VE):
        """Indices of edges separating a ``lower`` and an ``upper`` triangle."""
        et = self.edge_triangles
        inner = et[:, 1] >= 0
        la = np.where(inner, self.layers[et[:, 0]], -1)
        lb = np.where(inner, self.layers[np.maximum(et[:, 1], 0)], -1)
        hit = inner & (((la == lower) & (lb == upper)) | ((la == upper) & (lb == lower)))
        return np.flatnonzero(hit)

    def validate(self):
        """Check conformity, orientation, tags and boundary consistency."""
        if np.any(self.triangle_areas <= 0):
            raise MeshError("mesh has non-positively oriented or degenerate triangles")
        if not np.all(np.isin(self.layers, [int(s) for s in SkinLayer])):
            raise MeshError("mesh has triangles with an unknown layer tag")
        et = self.edge_triangles
        boundary = {tuple(e) for e in self.edges[et[:, 1] < 0]}
        tagged = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if boundary != tagged or len(tagged) != len(self.boundary_edges):
            raise MeshError("boundary edge list does not match the single-triangle edges")
        used = np.zeros(self.n_vertices, dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise MeshError("mesh has vertices that belong to no triangle")


def _strip_triangles(lower, upper, alternate=True, coords=None):
    """Triangulate the strip between two vertex lines (index arrays).

    Line lengths (in segments) must be equal or differ by a factor of two.
    Output is counter-clockwise when ``upper`` lies above ``lower``. With
    ``coords`` given, quads are split along their shorter diagonal (ties
    alternate), which avoids needle-like obtuse triangles on sloped bands.
    """
    nl, nu = len(lower) - 1, len(upper) - 1
    tris = []
    if nl == nu:
        for j in range(nl):
            l0, l1, u0, u1 = lower[j], lower[j + 1], upper[j], upper[j + 1]
            rising = j % 2 == 0 or not alternate
            if coords is not None and alternate:
                d_rise = np.linalg.norm(coords[u1] - coords[l0])
                d_fall = np.linalg.norm(coords[u0] - coords[l1])
                if abs(d_rise - d_fall) > 1e-9 * (d_rise + d_fall):
                    rising = d_rise < d_fall
            if rising:
                tris += [(l0, l1, u1), (l0, u1, u0)]
            else:
                tris += [(l0, l1, u0), (l1, u1, u0)]
    elif nu == 2 * nl:
        for j in range(nl):
            c0, c1 = lower[j], lower[j + 1]
            f0, f1, f2 = upper[2 * j], upper[2 * j + 1], upper[2 * j + 2]
            tris += [(c0, c1, f1), (c0, f1, f0), (c1, f2, f1)]
    elif nl == 2 * nu:
        for j in range(nu):
            f0, f1, f2 = lower[2 * j], lower[2 * j + 1], lower[2 * j + 2]
            c0, c1 = upper[j], upper[j + 1]
            tris += [(f0, f1, c0), (f1, c1, c0), (f1, f2, c1)]
    else:
        raise MeshError(f"cannot join vertex lines with {nl} and {nu} segments")
    return tris


def _stack_mesh(lines, band_tags, profile=None, alternate=True):
    """Build a mesh from vertex lines ordered bottom to top.

    ``lines`` is a list of ``(x, y)`` coordinate arrays; ``band_tags[k]`` is
    the layer of the strip between line ``k`` and ``k + 1``.
    """
    offsets = np.cumsum([0] + [len(x) for x, _ in lines])
    vertices = np.concatenate([np.column_stack([x, y]) for x, y in lines])
    index = [np.arange(offsets[k], offsets[k + 1]) for k in range(len(lines))]
    tris, tags = [], []
    for k, tag in enumerate(band_tags):
        strip = _strip_triangles(index[k], index[k + 1], alternate, vertices)
        tris += strip
        tags += [int(tag)] * len(strip)
    bnd, btag = [], []
    for line, tag in ((index[0], BoundaryTag.BOT), (index[-1], BoundaryTag.TOP)):
        bnd += list(zip(line[:-1], line[1:]))
        btag += [int(tag)] * (len(line) - 1)
    for k in range(len(lines) - 1):
        bnd += [(index[k][0], index[k + 1][0]), (index[k][-1], index[k + 1][-1])]
        btag += [int(BoundaryTag.LATERAL)] * 2
    mesh = Mesh(
        vertices=vertices,
        triangles=np.asarray(tris, dtype=np.int64),
        layers=np.asarray(tags, dtype=np.int64),
        boundary_edges=np.asarray(bnd, dtype=np.int64),
        boundary_tags=np.asarray(btag, dtype=np.int64),
        profile=profile,
    )
    if np.any(mesh.triangle_areas <= 1e-12):
        raise MeshError("mesh generation produced an inverted or degenerate triangle")
    return mesh


def generate_mesh(profile, base_resolution=8):
    """Triangulate the layered skin cross-section.

    Parameters
    ----------
    profile : LayerProfile
    base_resolution : int
        Segments per papillae period along the upper vertex lines. Must be
        at least 4.

    Notes
    -----
    The DEPOS, SC and VE bands get two element rows each on a uniform
    column layout. Below the papillae interface the dermis has ten graded
    rows whose vertex lines coarsen by halving (see ``DE_HALVINGS``) and
    whose wave shape fades by ``DE_FADE`` per row, so the first rows follow
    the papillae without producing flat slivers. Quads are split along
    their shorter diagonal. With the preset two-period domain and
    ``base_resolution=8`` this yields 171 vertices, 460 edges and 290
    triangles.
    """
    if int(base_resolution) != base_resolution or base_resolution < 4:
        raise MeshError(
            f"base_resolution must be an integer >= 4 segments per papillae period, "
            f"got {base_resolution!r}")
    p = profile
    nseg = p.periods * int(base_resolution)
    x_fine = np.linspace(0.0, p.domain_width, nseg + 1)

    def line_x(halvings):
        segs = nseg
        for _ in range(halvings):
            if segs % 2 == 0 and segs // 2 >= p.periods:
                segs //= 2
        return np.linspace(0.0, p.domain_width, segs + 1)

    weights = DE_GRADING ** np.arange(len(DE_HALVINGS))
    depth = np.concatenate([[0.0], np.cumsum(weights) / weights.sum()])
    lines = []
    # dermis lines from the bottom up to (excluding) the interface
    for j in range(len(DE_HALVINGS), 0, -1):
        x = line_x(DE_HALVINGS[j - 1])
        frac = 1.0 - depth[j]
        # undulation fades quickly below the papillae to keep elements shape-regular
        fade = DE_FADE ** j
        base = (p.h_de - p.papillae_amplitude) * frac
        lines.append((x, base + papilla_height(x, p.papillae_amplitude, p.papillae_period) * fade))
    lines[0] = (lines[0][0], np.zeros_like(lines[0][0]))
    tags = [SkinLayer.DE] * len(DE_HALVINGS)

    for r in range(ROWS_VE):
        x = line_x(VE_HALVINGS[r])
        bottom = p.ve_de_interface(x)
        lines.append((x, bottom + (p.y_sc_ve - bottom) * r / ROWS_VE))
    tags += [SkinLayer.VE] * ROWS_VE
    for base, h, rows, tag in ((p.y_sc_ve, p.h_sc, ROWS_SC, SkinLayer.SC),
                               (p.y_depos_sc, p.h_depos, ROWS_DEPOS, SkinLayer.DEPOS)):
        for r in range(rows):
            lines.append((x_fine, np.full_like(x_fine, base + h * r / rows)))
        tags += [tag] * rows
    lines.append((x_fine, np.full_like(x_fine, p.height)))
    return _stack_mesh(lines, tags, profile=p)


def strip_mesh(width, bands, columns, alternate=False):
    """Structured rectangle with flat layer bands (bottom to top).

    ``bands`` is a sequence of ``(layer, thickness, rows)``. With
    ``alternate=False`` every quad is split along the same diagonal, giving
    right triangles only (a non-obtuse mesh).
    """
    if columns < 1 or not bands:
        raise MeshError("strip_mesh needs at least one column and one band")
    x = np.linspace(0.0, width, columns + 1)
    lines, tags, y0 = [], [], 0.0
    for layer, thickness, rows in bands:
        if thickness <= 0 or rows < 1:
            raise MeshError("strip bands need positive thickness and at least one row")
        for r in range(rows):
            lines.append((x, np.full_like(x, y0 + thickness * r / rows)))
        tags += [SkinLayer(layer)] * rows
        y0 += thickness
    lines.append((x, np.full_like(x, y0)))
    return _stack_mesh(lines, tags, alternate=alternate)


def refine(mesh):
    """One step of red refinement.

    Every triangle is split into four through its edge midpoints. Midpoints
    of VE/DE interface edges are moved onto the analytic papillae curve
    when the mesh carries a profile with non-zero amplitude.
    """
    n = mesh.n_vertices
    edges, te = mesh.edges, mesh.triangle_edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    if mesh.profile is not None and mesh.profile.papillae_amplitude > 0:
        curve = mesh.interface_edges(SkinLayer.DE, SkinLayer.VE)
        mids[curve, 1] = mesh.profile.ve_de_interface(mids[curve, 0])
    v0, v1, v2 = mesh.triangles.T
    m0, m1, m2 = (n + te).T
    children = np.stack([
        np.column_stack([v0, m0, m2]),
        np.column_stack([m0, v1, m1]),
        np.column_stack([m2, m1, v2]),
        np.column_stack([m0, m1, m2]),
    ], axis=1).reshape(-1, 3)

    lookup = {tuple(e): i for i, e in enumerate(edges.tolist())}
    be = mesh.boundary_edges
    bmid = n + np.array([lookup[tuple(sorted(e))] for e in be.tolist()], dtype=np.int64)
    new_boundary = np.stack([np.column_stack([be[:, 0], bmid]),
                             np.column_stack([bmid, be[:, 1]])], axis=1).reshape(-1, 2)
    fine = Mesh(
        vertices=np.vstack([mesh.vertices, mids]),
        triangles=children,
        layers=np.repeat(mesh.layers, 4),
        boundary_edges=new_boundary,
        boundary_tags=np.repeat(mesh.boundary_tags, 2),
        refinement_level=mesh.refinement_level + 1,
        profile=mesh.profile,
        parent_edges=edges.copy(),
    )
    if np.any(fine.triangle_areas <= 1e-12):
        raise MeshError("refinement produced an inverted triangle; the coarse mesh is too coarse")
    return fine


def mesh_hierarchy(mesh, levels):
    """Return ``[mesh, refine(mesh), ...]`` with ``levels + 1`` entries."""
    out = [mesh]
    for _ in range(levels):
        out.append(refine(out[-1]))
    return out


@dataclass(frozen=True, eq=False)
class DualBoxes:
    """Vertex-centred control volumes from the midpoint-barycentre dual.

    Each triangle contributes three sub-edges, each running from an edge
    midpoint to the barycentre and separating the boxes of that edge's two
    endpoints. Arrays are indexed by ``3 * triangle + local_edge``.

    Attributes
    ----------
    box_area : (n,) area of every box
    fragment_area : (T,) area each vertex of a triangle owns inside it
        (one third of the triangle for this dual)
    subedge_pair : (S, 2) the two vertices whose boxes the sub-edge separates
    subedge_triangle : (S,) owning triangle
    subedge_start, subedge_end : (S, 2) edge midpoint and barycentre
    subedge_normal : (S, 2) unit normal pointing from box ``pair[0]`` into
        box ``pair[1]``
    subedge_length : (S,)
    """

    box_area: np.ndarray
    fragment_area: np.ndarray
    subedge_pair: np.ndarray
    subedge_triangle: np.ndarray
    subedge_start: np.ndarray
    subedge_end: np.ndarray
    subedge_normal: np.ndarray
    subedge_length: np.ndarray

    def subedges_of(self, vertex):
        """Sub-edges bounding one box, with normals pointing out of it.

        Returns ``(indices, outward_normals)``.
        """
        first = np.flatnonzero(self.subedge_pair[:, 0] == vertex)
        second = np.flatnonzero(self.subedge_pair[:, 1] == vertex)
        idx = np.concatenate([first, second])
        normals = np.vstack([self.subedge_normal[first], -self.subedge_normal[second]])
        return idx, normals


def build_dual_boxes(mesh):
    """Construct the box control volumes of a conforming triangle mesh."""
    area = mesh.triangle_areas
    if np.any(np.abs(area) < 1e-12):
        raise MeshError("degenerate triangle (area below 1e-12 um^2)")
    if np.any(area < 0):
        raise MeshError("negatively oriented triangle")
    tri = mesh.triangles
    p = mesh.vertices[tri]
    bary = p.mean(axis=1)
    local = np.array([[0, 1], [1, 2], [2, 0]])
    pair = tri[:, local].reshape(-1, 2)
    pa = p[:, local[:, 0]].reshape(-1, 2)
    pb = p[:, local[:, 1]].reshape(-1, 2)
    start = 0.5 * (pa + pb)
    end = np.repeat(bary, 3, axis=0)
    seg = end - start
    length = np.hypot(seg[:, 0], seg[:, 1])
    normal = np.column_stack([seg[:, 1], -seg[:, 0]]) / length[:, None]
    flip = np.einsum("ij,ij->i", normal, pb - pa) < 0
    normal[flip] *= -1.0
    frag = area / 3.0
    box = np.bincount(tri.ravel(), weights=np.repeat(frag, 3), minlength=mesh.n_vertices)
    return DualBoxes(
        box_area=box,
        fragment_area=frag,
        subedge_pair=pair,
        subedge_triangle=np.repeat(np.arange(mesh.n_triangles), 3),
        subedge_start=start,
        subedge_end=end,
        subedge_normal=normal,
        subedge_length=length,
    )


def with_profile(mesh, profile):
    """Return a copy of ``mesh`` that refines against ``profile``."""
    return replace(mesh, profile=profile)
