"""Triangulated surfaces: loading, validation, queries.

A :class:`TriMesh` is an immutable vertex/face container with the
connectivity guarantees the rest of the toolkit relies on: indices in
range, no degenerate triangles, every edge shared by at most two faces,
and a consistent orientation across shared edges. Coordinates are
millimeters throughout; loaders never rescale.

Meshes may contain several connected components (e.g. two cortical
hemispheres). Per-vertex hemisphere labels are ``"L"``/``"R"`` for
multi-component meshes (from a sidecar file when given, else by the sign
of each component's centroid x-coordinate) and ``"S"`` for
single-component meshes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import FormatError, GeometryError, LimitError, ParseError, ShapeError, TopologyError
from .validation import check_index

DEGENERATE_AREA_MM2 = 1e-12
MAX_ICOSPHERE_SUBDIVISIONS = 7


@dataclass(frozen=True)
class TriMesh:
    """Immutable triangle mesh with validated topology.

    Parameters
    ----------
    vertices : (N, 3) float array
        Coordinates in millimeters.
    faces : (F, 3) int array
        Vertex-index triples. Shared edges must be traversed in opposite
        directions by their two faces (consistent orientation).
    hemisphere : length-N array of {"L", "R", "S"}, optional
        Per-vertex hemisphere labels; derived automatically when omitted.
    """

    vertices: np.ndarray
    faces: np.ndarray
    hemisphere: np.ndarray | None = field(default=None)

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ShapeError(f"vertices: expected (N, 3), got {verts.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ShapeError(f"faces: expected (F, 3), got {faces.shape}")
        if not np.all(np.isfinite(verts)):
            raise ShapeError("vertices: contains non-finite coordinates")
        _validate_topology(verts, faces)
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        hemi = self.hemisphere
        if hemi is not None:
            hemi = np.asarray(hemi, dtype="<U1")
            if hemi.shape != (verts.shape[0],):
                raise ShapeError("hemisphere: one label per vertex required")
            bad = set(np.unique(hemi)) - {"L", "R", "S"}
            if bad:
                raise ParseError(f"hemisphere: unknown labels {sorted(bad)}")
            hemi.setflags(write=False)
        else:
            hemi = _auto_hemisphere(verts, *_components(verts, faces))
            hemi.setflags(write=False)
        object.__setattr__(self, "hemisphere", hemi)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @cached_property
    def edges(self) -> np.ndarray:
        """(E, 2) unique undirected edges, each row sorted, lexicographic order."""
        e = np.vstack([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    @cached_property
    def _component_info(self):
        n, labels = _components(self.vertices, self.faces)
        return n, labels

    @property
    def n_components(self) -> int:
        return self._component_info[0]

    @property
    def component_labels(self) -> np.ndarray:
        return self._component_info[1]

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _face_areas(self.vertices, self.faces)

    @cached_property
    def face_normals(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norms = np.linalg.norm(cross, axis=1)
        return cross / norms[:, None]

    @cached_property
    def vertex_normals(self) -> np.ndarray:
        """Area-weighted average of incident face normals, unit length."""
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        acc = np.zeros_like(v)
        for c in range(3):
            np.add.at(acc, f[:, c], cross)
        norms = np.linalg.norm(acc, axis=1)
        # isolated or perfectly cancelling vertices keep a zero normal
        safe = norms > 0
        acc[safe] /= norms[safe, None]
        return acc

    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def bounding_radius(self) -> float:
        """Radius of the centroid-centered sphere enclosing all vertices."""
        return float(np.linalg.norm(self.vertices - self.centroid(), axis=1).max())

    @cached_property
    def edge_graph(self) -> sparse.csr_matrix:
        """Symmetric sparse adjacency weighted by Euclidean edge length."""
        e = self.edges
        w = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        i = np.concatenate([e[:, 0], e[:, 1]])
        j = np.concatenate([e[:, 1], e[:, 0]])
        n = self.n_vertices
        return sparse.csr_matrix((np.concatenate([w, w]), (i, j)), shape=(n, n))

    def fingerprint(self) -> str:
        """Short content hash binding derived artifacts to this mesh."""
        import hashlib

        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        return h.hexdigest()[:16]


def _face_areas(verts, faces):
    cross = np.cross(
        verts[faces[:, 1]] - verts[faces[:, 0]],
        verts[faces[:, 2]] - verts[faces[:, 0]],
    )
    return 0.5 * np.linalg.norm(cross, axis=1)


def _validate_topology(verts, faces):
    n = verts.shape[0]
    if faces.size and (faces.min() < 0 or faces.max() >= n):
        bad = faces[(faces < 0) | (faces >= n)][0]
        raise TopologyError(f"face index {bad} out of range for {n} vertices")
    same = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 2] == faces[:, 0])
    )
    if np.any(same):
        raise TopologyError(f"face {int(np.flatnonzero(same)[0])} has repeated vertices")
    areas = _face_areas(verts, faces)
    if np.any(areas <= DEGENERATE_AREA_MM2):
        idx = int(np.argmin(areas))
        raise TopologyError(
            f"face {idx} is degenerate (area {areas[idx]:.3e} mm^2)"
        )
    if faces.size == 0:
        return
    # Edge-manifold: each undirected edge in <= 2 faces. Consistent
    # orientation: no directed edge appears twice.
    directed = np.vstack([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    d_unique, d_counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(d_counts > 1):
        i, j = d_unique[np.argmax(d_counts > 1)]
        raise TopologyError(
            f"edge ({i}, {j}) traversed twice in the same direction "
            "(non-manifold or inconsistently oriented)"
        )
    undirected = np.sort(directed, axis=1)
    _, u_counts = np.unique(undirected, axis=0, return_counts=True)
    if np.any(u_counts > 2):
        raise TopologyError("non-manifold edge shared by more than two faces")


def _components(verts, faces):
    n = verts.shape[0]
    if faces.size == 0:
        return n, np.arange(n)
    i = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    j = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    adj = sparse.csr_matrix((np.ones_like(i), (i, j)), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    return n_comp, labels


def _auto_hemisphere(verts, n_comp, labels):
    if n_comp <= 1:
        return np.full(verts.shape[0], "S", dtype="<U1")
    hemi = np.empty(verts.shape[0], dtype="<U1")
    for comp in range(n_comp):
        mask = labels == comp
        hemi[mask] = "L" if verts[mask, 0].mean() < 0 else "R"
    return hemi


def load_hemisphere_labels(path, n_vertices):
    """Read a sidecar file of one {L, R} label per vertex line."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line not in ("L", "R"):
                raise ParseError(f"{path}: expected L or R, got {line!r}", line=lineno)
            labels.append(line)
    if len(labels) != n_vertices:
        raise ShapeError(
            f"{path}: {len(labels)} labels for {n_vertices} vertices"
        )
    return np.asarray(labels, dtype="<U1")


# ---------------------------------------------------------------------------
# File formats


def load_mesh(path, fmt=None, hemisphere_path=None):
    """Load an OFF-ascii or PLY-ascii surface.

    ``fmt`` is ``"off"`` or ``"ply"``; default is inferred from the file
    suffix. Vertex order is preserved exactly as in the file.
    """
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt not in ("off", "ply"):
        raise FormatError(f"{path}: unknown mesh format {fmt!r}")
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        text = fh.read()
    if fmt == "off":
        verts, faces = _parse_off(text, str(path))
    else:
        verts, faces = _parse_ply(text, str(path))
    hemi = None
    if hemisphere_path is not None:
        hemi = load_hemisphere_labels(hemisphere_path, verts.shape[0])
    return TriMesh(verts, faces, hemisphere=hemi)


def save_mesh(mesh, path, fmt=None):
    """Write OFF-ascii or PLY-ascii. Coordinates round-trip exactly."""
    path = Path(path)
    if fmt is None:
        fmt = path.suffix.lstrip(".").lower()
    if fmt == "off":
        lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
        lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
        lines += [f"3 {f[0]} {f[1]} {f[2]}" for f in mesh.faces]
    elif fmt == "ply":
        lines = [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.n_vertices}",
            "property double x",
            "property double y",
            "property double z",
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
        lines += [f"3 {f[0]} {f[1]} {f[2]}" for f in mesh.faces]
    else:
        raise FormatError(f"{path}: unknown mesh format {fmt!r}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _content_lines(text):
    """Yield (lineno, stripped line) with comments and blanks removed."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_off(text, origin):
    lines = _content_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise ParseError(f"{origin}: empty file") from None
    if header != "OFF":
        raise ParseError(f"{origin}: expected OFF header, got {header!r}", line=lineno)
    try:
        lineno, counts = next(lines)
    except StopIteration:
        raise ParseError(f"{origin}: missing counts line") from None
    parts = counts.split()
    if len(parts) != 3:
        raise ParseError(f"{origin}: expected 'V F E' counts", line=lineno)
    try:
        n_verts, n_faces = int(parts[0]), int(parts[1])
        int(parts[2])
    except ValueError:
        raise ParseError(f"{origin}: non-integer counts {counts!r}", line=lineno) from None
    verts = np.empty((n_verts, 3), dtype=np.float64)
    for i in range(n_verts):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseError(f"{origin}: expected {n_verts} vertices, file ended") from None
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"{origin}: expected 'x y z'", line=lineno)
        try:
            verts[i] = [float(f) for f in fields]
        except ValueError:
            raise ParseError(f"{origin}: malformed coordinate", line=lineno) from None
    faces = _parse_face_lines(lines, n_faces, origin)
    return verts, faces


def _parse_face_lines(lines, n_faces, origin):
    faces = np.empty((n_faces, 3), dtype=np.int64)
    for i in range(n_faces):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseError(f"{origin}: expected {n_faces} faces, file ended") from None
        fields = line.split()
        if not fields or fields[0] != "3" or len(fields) != 4:
            raise ParseError(
                f"{origin}: expected '3 i j k' (triangles only)", line=lineno
            )
        try:
            faces[i] = [int(f) for f in fields[1:]]
        except ValueError:
            raise ParseError(f"{origin}: malformed face index", line=lineno) from None
    return faces


def _parse_ply(text, origin):
    lines = _content_lines(text)
    try:
        lineno, magic = next(lines)
    except StopIteration:
        raise ParseError(f"{origin}: empty file") from None
    if magic != "ply":
        raise ParseError(f"{origin}: expected 'ply' header", line=lineno)
    n_verts = n_faces = None
    vertex_props = []
    current = None
    for lineno, line in lines:
        fields = line.split()
        if fields[0] == "format":
            if len(fields) < 2 or fields[1] != "ascii":
                raise FormatError(f"{origin}: only ascii PLY is supported", line=lineno)
        elif fields[0] == "element":
            if len(fields) != 3:
                raise ParseError(f"{origin}: malformed element line", line=lineno)
            current = fields[1]
            try:
                count = int(fields[2])
            except ValueError:
                raise ParseError(f"{origin}: non-integer element count", line=lineno) from None
            if current == "vertex":
                n_verts = count
            elif current == "face":
                n_faces = count
            else:
                raise ParseError(f"{origin}: unsupported element {current!r}", line=lineno)
        elif fields[0] == "property":
            if current == "vertex":
                if fields[1] == "list":
                    raise ParseError(f"{origin}: list property on vertices", line=lineno)
                vertex_props.append(fields[-1])
        elif fields[0] == "end_header":
            break
        elif fields[0] in ("comment", "obj_info"):
            continue
        else:
            raise ParseError(f"{origin}: unexpected header line {line!r}", line=lineno)
    else:
        raise ParseError(f"{origin}: missing end_header")
    if n_verts is None or n_faces is None:
        raise ParseError(f"{origin}: PLY must declare vertex and face elements")
    try:
        cols = [vertex_props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise ParseError(f"{origin}: vertex element lacks x/y/z properties") from None
    verts = np.empty((n_verts, 3), dtype=np.float64)
    for i in range(n_verts):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise ParseError(f"{origin}: expected {n_verts} vertices, file ended") from None
        fields = line.split()
        if len(fields) < len(vertex_props):
            raise ParseError(f"{origin}: short vertex line", line=lineno)
        try:
            verts[i] = [float(fields[c]) for c in cols]
        except ValueError:
            raise ParseError(f"{origin}: malformed coordinate", line=lineno) from None
    faces = _parse_face_lines(lines, n_faces, origin)
    return verts, faces


# ---------------------------------------------------------------------------
# Synthetic fixtures


def make_icosphere(subdivisions, radius=1.0):
    """Icosahedron subdivided ``subdivisions`` times, projected to ``radius``.

    Vertex/face counts follow N = 10 * 4**k + 2, F = 20 * 4**k.
    """
    if subdivisions < 0:
        raise LimitError("subdivisions must be non-negative")
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS:
        raise LimitError(
            f"subdivisions {subdivisions} exceeds limit {MAX_ICOSPHERE_SUBDIVISIONS}"
        )
    if radius <= 0:
        raise GeometryError("radius must be positive")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        verts, faces = _subdivide_unit(verts, faces)
    verts = verts * radius
    return TriMesh(verts, faces)


def _subdivide_unit(verts, faces):
    verts = list(verts)
    cache = {}

    def midpoint(a, b):
        key = (a, b) if a < b else (b, a)
        idx = cache.get(key)
        if idx is None:
            mid = verts[a] + verts[b]
            mid /= np.linalg.norm(mid)
            verts.append(mid)
            idx = len(verts) - 1
            cache[key] = idx
        return idx

    new_faces = []
    for a, b, c in faces:
        ab = midpoint(a, b)
        bc = midpoint(b, c)
        ca = midpoint(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.asarray(verts), np.asarray(new_faces, dtype=np.int64)


def merge_meshes(*meshes):
    """Concatenate meshes into one multi-component TriMesh (offset indices)."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += m.n_vertices
    return TriMesh(np.vstack(verts), np.vstack(faces))


# ---------------------------------------------------------------------------
# Geodesics


def geodesic_distances(mesh, source_vertex):
    """Dijkstra shortest-path distance along mesh edges, in millimeters.

    Distances to vertices in other connected components are ``np.inf``.
    """
    source_vertex = check_index(source_vertex, mesh.n_vertices, name="source_vertex")
    dist = dijkstra(mesh.edge_graph, directed=False, indices=source_vertex)
    return np.asarray(dist, dtype=np.float64)


def nearest_set_distances(mesh, target_vertices):
    """Per-vertex distance to the nearest vertex of ``target_vertices``."""
    idx = np.atleast_1d(np.asarray(target_vertices, dtype=np.int64))
    if idx.size == 0:
        raise ShapeError("target_vertices is empty")
    for v in idx:
        check_index(v, mesh.n_vertices, name="target vertex")
    dist = dijkstra(mesh.edge_graph, directed=False, indices=idx, min_only=True)
    return np.asarray(dist, dtype=np.float64)
