"""
Triangulations of the unit disk and friends.

The built-in mesher places ring k (k = 1..M) at radius k/M with 6k
equally spaced vertices, so the outer ring lies exactly on the unit
circle.  Refinement is uniform red refinement; the midpoints of boundary
edges are projected back onto the curved boundary so that every boundary
vertex stays on Gamma.
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry


class MeshError(Exception):
    pass


class TopologyError(MeshError):
    """The triangulation violates one of the mesh invariants."""


class QualityDegradation(MeshError):
    """Refinement produced a triangle below the shape-regularity floor."""


class ParseError(MeshError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _edge_table(triangles):
    """Unique undirected edges and the triangle-to-edge map (local edge i opposite vertex i)."""
    local = np.array([[1, 2], [2, 0], [0, 1]])
    directed = triangles[:, local].reshape(-1, 2)
    key = np.sort(directed, axis=1)
    edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return edges, inverse.reshape(-1, 3), counts, directed


@dataclass(frozen=True, eq=False)
class Mesh:
    """Planar triangulation with boundary bookkeeping.

    ``boundary_edges`` is an (nb, 2) array of vertex pairs oriented so that
    the mesh lies to the left, hence the outward normal of edge (a, b) is
    the tangent b - a rotated clockwise.  ``boundary_triangle`` holds the
    index of the adjacent triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = field(init=False)
    boundary_triangle: np.ndarray = field(init=False)
    is_boundary_vertex: np.ndarray = field(init=False)
    edges: np.ndarray = field(init=False, repr=False)
    triangle_edges: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2 or t.ndim != 2 or t.shape[1] != 3:
            raise TopologyError("vertices must be (n, 2) and triangles (m, 3)")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise TopologyError("triangle references a nonexistent vertex")
        v.setflags(write=False)
        t.setflags(write=False)
        edges, tri_edges, counts, directed = _edge_table(t)
        if np.any(counts > 2):
            raise TopologyError("an edge is shared by more than two triangles")
        flat = np.nonzero(counts[tri_edges.ravel()] == 1)[0]
        bedges = directed[flat]
        btri = flat // 3
        isb = np.zeros(len(v), dtype=bool)
        isb[bedges.ravel()] = True
        lengths = np.linalg.norm(v[edges[:, 1]] - v[edges[:, 0]], axis=1)
        for name, val in [("vertices", v), ("triangles", t), ("boundary_edges", bedges),
                          ("boundary_triangle", btri), ("is_boundary_vertex", isb),
                          ("edges", edges), ("triangle_edges", tri_edges),
                          ("h", float(lengths.max()) if len(lengths) else 0.0)]:
            object.__setattr__(self, name, val)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        return _signed_areas(self.vertices, self.triangles)

    def boundary_loop(self):
        """Boundary vertex indices in counterclockwise traversal order."""
        nxt = dict(zip(self.boundary_edges[:, 0].tolist(), self.boundary_edges[:, 1].tolist()))
        if len(nxt) != len(self.boundary_edges):
            raise TopologyError("boundary is not a simple closed loop")
        start = int(self.boundary_edges[0, 0])
        loop = [start]
        cur = nxt[start]
        while cur != start:
            loop.append(cur)
            cur = nxt[cur]
            if len(loop) > len(nxt):
                raise TopologyError("boundary is not a simple closed loop")
        if len(loop) != len(nxt):
            raise TopologyError("boundary has more than one component")
        return np.array(loop)


def triangle_quality(vertices, triangles):
    """Inradius over diameter for every triangle."""
    p = vertices[triangles]
    la = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    lb = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    lc = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = np.abs(_signed_areas(vertices, triangles))
    inradius = 2 * area / (la + lb + lc)
    return inradius / np.maximum(np.maximum(la, lb), lc)


def validate(mesh, domain=None, snap_tol=1e-12):
    """Assert the mesh invariants; raise TopologyError on the first violation."""
    area = mesh.areas()
    if np.any(area <= 0):
        raise TopologyError(f"{np.count_nonzero(area <= 0)} triangle(s) with nonpositive area")
    n_edges = len(mesh.edges)
    euler = mesh.n_vertices - n_edges + mesh.n_triangles
    if euler != 1:
        raise TopologyError(f"Euler characteristic V - E + F = {euler}, expected 1")
    used = np.zeros(mesh.n_vertices, dtype=bool)
    used[mesh.triangles.ravel()] = True
    if not used.all():
        raise TopologyError("mesh has isolated vertices")
    mesh.boundary_loop()
    if domain is not None:
        d = np.abs(domain.signed_distance(mesh.vertices[mesh.is_boundary_vertex]))
        if d.max() > snap_tol:
            raise TopologyError(f"boundary vertex off Gamma by {d.max():.3g}")
    return mesh


def build_disk_mesh(rings):
    """Concentric-ring triangulation of the unit disk with M = ``rings`` rings."""
    M = int(rings)
    if M < 1:
        raise ValueError("rings must be >= 1")
    pts = [np.zeros((1, 2))]
    offset = [0, 1]
    for k in range(1, M + 1):
        th = 2 * np.pi * np.arange(6 * k) / (6 * k)
        r = k / M
        ring = np.column_stack([np.cos(th), np.sin(th)])
        pts.append(ring if k == M else r * ring)
        offset.append(offset[-1] + 6 * k)
    vertices = np.vstack(pts)
    tris = []
    for k in range(1, M + 1):
        n_in, n_out = max(6 * (k - 1), 1), 6 * k
        o_in, o_out = offset[k - 1], offset[k]

        def inner(j):
            return o_in + (j % n_in) if k > 1 else 0

        def outer(j):
            return o_out + (j % n_out)

        for s in range(6):
            for i in range(k):
                tris.append((outer(s * k + i), outer(s * k + i + 1), inner(s * (k - 1) + i)))
            for i in range(k - 1):
                tris.append((inner(s * (k - 1) + i), outer(s * k + i + 1), inner(s * (k - 1) + i + 1)))
    tris = np.array(tris, dtype=np.int64)
    area = _signed_areas(vertices, tris)
    tris[area < 0] = tris[area < 0][:, [0, 2, 1]]
    mesh = Mesh(vertices, tris)
    return validate(mesh, geometry.UnitDisk(), snap_tol=1e-14)


def build_ellipse_mesh(rings, a, b):
    """Disk mesh stretched by diag(a, b); boundary vertices land on the ellipse."""
    disk = build_disk_mesh(rings)
    mesh = Mesh(disk.vertices * np.array([a, b], dtype=float), disk.triangles)
    return validate(mesh, geometry.ellipse(a, b), snap_tol=1e-12)


def refine(mesh, domain, min_quality=0.10):
    """Red refinement; new boundary midpoints are projected onto Gamma."""
    nv = mesh.n_vertices
    e = mesh.edges
    mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    key = np.sort(mesh.boundary_edges, axis=1)
    bidx = _find_rows(e, key)
    mid[bidx] = geometry.project(domain, mid[bidx]).foot
    vertices = np.vstack([mesh.vertices, mid])
    t = mesh.triangles
    m = nv + mesh.triangle_edges          # m[:, i] is the midpoint opposite vertex i
    tris = np.concatenate([
        np.column_stack([t[:, 0], m[:, 2], m[:, 1]]),
        np.column_stack([m[:, 2], t[:, 1], m[:, 0]]),
        np.column_stack([m[:, 1], m[:, 0], t[:, 2]]),
        np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
    ])
    fine = Mesh(vertices, tris)
    validate(fine, domain)
    q = triangle_quality(fine.vertices, fine.triangles).min()
    if q < min_quality:
        raise QualityDegradation(f"minimum quality {q:.3f} < {min_quality}")
    return fine


def _find_rows(table, rows):
    # table rows are lexicographically sorted and unique (np.unique output)
    n = int(table.max()) + 1
    tk = table[:, 0] * n + table[:, 1]
    rk = rows[:, 0] * n + rows[:, 1]
    idx = np.searchsorted(tk, rk)
    if np.any(tk[np.minimum(idx, len(tk) - 1)] != rk):
        raise TopologyError("boundary edge missing from the edge table")
    return idx


def refine_n(mesh, domain, times):
    for _ in range(times):
        mesh = refine(mesh, domain)
    return mesh


def snap_boundary(mesh, domain):
    """Project boundary vertices onto Gamma; interior vertices are untouched."""
    v = mesh.vertices.copy()
    b = mesh.is_boundary_vertex
    v[b] = geometry.project(domain, v[b]).foot
    return Mesh(v, mesh.triangles)


def mesh_stats(mesh):
    """Mesh size, shape regularity and DOF previews for the element pairs."""
    nb = len(mesh.boundary_edges)
    blen = np.linalg.norm(mesh.vertices[mesh.boundary_edges[:, 1]]
                          - mesh.vertices[mesh.boundary_edges[:, 0]], axis=1)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    return {
        "h": mesh.h,
        "min_quality": float(triangle_quality(mesh.vertices, mesh.triangles).min()),
        "boundary_edge_max": float(blen.max()) if nb else 0.0,
        "n_vertices": nv,
        "n_triangles": nt,
        "n_boundary_edges": nb,
        "n_dof_preview": {"P1": 3 * nv, "P1b": 3 * nv + 2 * nt},
    }


# --- Triangle-format I/O ----------------------------------------------------

def export_triangle(mesh, prefix):
    """Write PREFIX.node and PREFIX.ele (1-based, one boundary marker)."""
    node, ele = Path(f"{prefix}.node"), Path(f"{prefix}.ele")
    with open(node, "w") as fh:
        fh.write(f"{mesh.n_vertices} 2 0 1\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i + 1} {float(x)!r} {float(y)!r} {int(mesh.is_boundary_vertex[i])}\n")
    with open(ele, "w") as fh:
        fh.write(f"{mesh.n_triangles} 3 0\n")
        for i, (a, b, c) in enumerate(mesh.triangles):
            fh.write(f"{i + 1} {a + 1} {b + 1} {c + 1}\n")
    return node, ele


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].split()
            if line:
                yield lineno, line


def _parse_table(path, ncols_for):
    it = _data_lines(path)
    try:
        lineno, header = next(it)
    except StopIteration:
        raise ParseError(path, 0, "empty file") from None
    try:
        hdr = [int(x) for x in header]
    except ValueError:
        raise ParseError(path, lineno, "malformed header") from None
    count, width = ncols_for(hdr, lineno)
    rows, ids = [], []
    for lineno, line in it:
        if len(line) != width:
            raise ParseError(path, lineno, f"expected {width} fields, got {len(line)}")
        try:
            ids.append(int(line[0]))
            rows.append([float(x) for x in line[1:]])
        except ValueError:
            raise ParseError(path, lineno, "non-numeric field") from None
    if len(rows) != count:
        raise ParseError(path, lineno if rows else 1, f"expected {count} records, got {len(rows)}")
    return np.array(ids), np.array(rows).reshape(count, width - 1)


def import_triangle(node_path, ele_path, domain=None):
    """Read a Triangle-format mesh; raises ParseError or TopologyError."""
    node_path, ele_path = Path(node_path), Path(ele_path)

    def node_cols(hdr, lineno):
        if len(hdr) != 4 or hdr[1] != 2:
            raise ParseError(node_path, lineno, "node header must be 'count 2 nattr nmarker'")
        return hdr[0], 3 + hdr[2] + hdr[3]

    def ele_cols(hdr, lineno):
        if len(hdr) != 3 or hdr[1] != 3:
            raise ParseError(ele_path, lineno, "ele header must be 'count 3 nattr'")
        return hdr[0], 4 + hdr[2]

    nid, nodes = _parse_table(node_path, node_cols)
    eid, eles = _parse_table(ele_path, ele_cols)
    base = int(nid.min()) if len(nid) else 1
    if not np.array_equal(np.sort(nid), np.arange(base, base + len(nid))):
        raise ParseError(node_path, 1, "node indices are not contiguous")
    order = np.argsort(nid)
    vertices = nodes[order, :2]
    tris = eles[:, :3]
    if np.any(tris != np.round(tris)):
        raise ParseError(ele_path, 1, "non-integer vertex index")
    tris = tris.astype(np.int64) - base
    mesh = Mesh(vertices, tris)
    validate(mesh, domain)
    return mesh
