"""Legacy ASCII VTK writer for triangle meshes."""
import os

import numpy as np

VTK_TRIANGLE = 5


def _format(values):
    return "\n".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                     for v in values)


def write_vtk(path, mesh, point_data=None, cell_data=None, title="skinperm"):
    """Write ``mesh`` as a legacy ASCII UNSTRUCTURED_GRID file.

    ``point_data`` and ``cell_data`` map field names to 1-D arrays. Integer
    arrays are written as ``int``, everything else as ``double``. The file
    is written to a temporary name and renamed into place.
    """
    v, t = mesh.vertices, mesh.triangles
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(v)} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in v.tolist()]
    lines.append(f"CELLS {len(t)} {4 * len(t)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in t.tolist()]
    lines.append(f"CELL_TYPES {len(t)}")
    lines += [str(VTK_TRIANGLE)] * len(t)
    for section, data, count in (("CELL_DATA", cell_data, len(t)),
                                 ("POINT_DATA", point_data, len(v))):
        if not data:
            continue
        lines.append(f"{section} {count}")
        for name, values in data.items():
            values = np.asarray(values)
            if len(values) != count:
                raise ValueError(f"{section} field {name!r} has {len(values)} entries, "
                                 f"expected {count}")
            kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
            lines += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default", _format(values.tolist())]
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def read_vtk_counts(path):
    """Return ``(n_points, n_cells)`` from a legacy VTK file header."""
    n_points = n_cells = None
    with open(path, encoding="ascii") as fh:
        for line in fh:
            if line.startswith("POINTS"):
                n_points = int(line.split()[1])
            elif line.startswith("CELLS"):
                n_cells = int(line.split()[1])
    return n_points, n_cells
