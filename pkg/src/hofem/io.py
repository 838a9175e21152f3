"""Writers: legacy VTK, MatrixMarket and CSV."""

import csv

import numpy as np

from .basis import gll_nodes
from .mesh import lattice_shape, map_reference, sample_lattice
from .tensor import tensor_points

VTK_QUAD = 9
VTK_HEXAHEDRON = 12

# corners of a lattice cell in VTK order, as (dx, dy, dz) offsets
_QUAD_CORNERS = [(0, 0), (1, 0), (1, 1), (0, 1)]
_HEX_CORNERS = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]


def fmt(x):
    """Shortest round-trip-safe text for a number (``%.17g`` for floats)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def lattice_cells(shape):
    """Linear cells of a structured lattice, ``(ncells, 2**dim)`` point ids."""
    dim = len(shape)
    corners = _QUAD_CORNERS if dim == 2 else _HEX_CORNERS
    counts = [s - 1 for s in shape]
    base = tensor_points(np.arange(max(counts)), dim).astype(int)
    base = base[np.all(base < np.array(counts), axis=1)]
    strides = np.cumprod((1,) + tuple(shape[:-1]))
    return np.stack([((base + np.array(c)) * strides).sum(axis=1) for c in corners], axis=1)


def write_vtk_grid(path, points, cells, point_data=None, title="hofem"):
    """Write an ASCII legacy VTK UNSTRUCTURED_GRID of quads or hexahedra."""
    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    ctype = VTK_QUAD if cells.shape[1] == 4 else VTK_HEXAHEDRON
    pts3 = np.zeros((points.shape[0], 3))
    pts3[:, :dim] = points
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts3)} double"]
    lines += [" ".join(fmt(v) for v in p) for p in pts3]
    n = cells.shape[1]
    lines.append(f"CELLS {len(cells)} {len(cells) * (n + 1)}")
    lines += [" ".join([str(n)] + [str(int(i)) for i in c]) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(ctype)] * len(cells)
    if point_data:
        lines.append(f"POINT_DATA {len(pts3)}")
        for name, vals in point_data.items():
            vals = np.asarray(vals, dtype=float)
            if vals.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [fmt(v) for v in vals]
            else:
                v3 = np.zeros((vals.shape[0], 3))
                v3[:, :vals.shape[1]] = vals
                lines.append(f"VECTORS {name} double")
                lines += [" ".join(fmt(v) for v in row) for row in v3]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_vtk(path, mesh, order=None, point_data=None):
    """Mesh (and H1 lattice fields) split into linear cells at GLL points.

    ``point_data`` values must be given on the non-periodic degree-``order``
    lattice (``order`` defaults to the geometry order); use
    :func:`h1_to_lattice` to expand a periodic-space vector.
    """
    order = order or mesh.geom_order
    pts = sample_lattice(mesh, order)
    cells = lattice_cells(lattice_shape(mesh.counts, order))
    write_vtk_grid(path, pts, cells, point_data)


def h1_to_lattice(fes, u):
    """Expand an H1 L-vector to the full (unfolded) lattice of its degree."""
    u = np.asarray(u).reshape(fes.nscalar, fes.vdim)
    out = u[fes.lattice_to_dof]
    return out[:, 0] if fes.vdim == 1 else out


def write_vtk_dg(path, fes, u):
    """Discontinuous field: every element written with its own points."""
    mesh, p, dim = fes.mesh, fes.p, fes.dim
    xi = tensor_points(gll_nodes(p), dim)
    X, _ = map_reference(mesh, xi)
    pts = X.reshape(-1, dim)
    local = lattice_cells((p + 1,) * dim)
    nloc = (p + 1) ** dim
    cells = np.concatenate([local + e * nloc for e in range(mesh.num_elements)])
    vals = np.asarray(u).reshape(-1, fes.vdim)
    data = {f"u{c}": vals[:, c] for c in range(fes.vdim)}
    write_vtk_grid(path, pts, cells, data)


def write_matrix_market(path, A):
    """Coordinate-format MatrixMarket file with every stored entry listed."""
    A = A.tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k] + 1} {A.col[k] + 1} {'%.17g' % A.data[k]}\n")


def read_matrix_market(path):
    import scipy.io
    return scipy.io.mmread(path).tocsr()


def write_csv(path_or_file, header, rows):
    """Write rows (dicts or sequences) with numbers formatted by :func:`fmt`."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row[h] for h in header]
            w.writerow([fmt(v) for v in row])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


__all__ = ["VTK_QUAD", "VTK_HEXAHEDRON", "write_vtk", "write_vtk_dg", "write_vtk_grid",
           "write_matrix_market", "read_matrix_market", "write_csv", "h1_to_lattice",
           "fmt"]
