"""Triangle meshes, graph geodesics and Gaussian-filtered distance fields."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import MeshParseError, ParameterError, TopologyError

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with optional per-vertex left/right labels.

    Parameters
    ----------
    vertices : (n, 3) float array
    faces : (f, 3) int array of vertex indices
    side_labels : (n,) int array of 0/1 flags, optional
    """

    vertices: np.ndarray
    faces: np.ndarray
    side_labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshParseError("face index out of range")
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.side_labels is not None:
            labels = np.asarray(self.side_labels, dtype=np.int64).ravel()
            if labels.shape != (len(v),):
                raise MeshParseError(
                    f"side labels have {labels.size} entries for {len(v)} vertices"
                )
            if not np.isin(labels, (0, 1)).all():
                raise MeshParseError("side labels must be 0 or 1")
            labels.setflags(write=False)
            object.__setattr__(self, "side_labels", labels)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (e, 2) array with i < j."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def count_components(self) -> int:
        e = self.edges()
        adj = sparse.coo_matrix(
            (np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.n, self.n)
        )
        ncomp, _ = csgraph.connected_components(adj, directed=False)
        return int(ncomp)

    def relabeled(self, order) -> "Mesh":
        """Copy whose vertex ``i`` is this mesh's vertex ``order[i]``."""
        order = np.asarray(order, dtype=np.int64)
        inv = np.empty_like(order)
        inv[order] = np.arange(len(order))
        labels = None if self.side_labels is None else self.side_labels[order]
        return Mesh(self.vertices[order], inv[self.faces], labels)


@dataclass(frozen=True, eq=False)
class GeodesicField:
    dist: np.ndarray
    diameter: float

    @property
    def n(self) -> int:
        return self.dist.shape[0]


@dataclass(frozen=True, eq=False)
class KernelField:
    values: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(eq=False)
class Shape:
    """A mesh bundled with its geodesic field and a small kernel cache."""

    mesh: Mesh
    geodesics: GeodesicField
    _kernels: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_mesh(cls, mesh: Mesh) -> "Shape":
        return cls(mesh, geodesic_all_pairs(mesh))

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def diameter(self) -> float:
        return self.geodesics.diameter

    def kernel(self, rho: float) -> KernelField:
        kf = self._kernels.get(rho)
        if kf is None:
            # only the most recent bandwidth is reused by the schedule
            self._kernels.clear()
            kf = self._kernels[rho] = gaussian_field(self.geodesics, rho)
        return kf


# ---------------------------------------------------------------- file io


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _parse_off(text: str):
    lines = _data_lines(text)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise MeshParseError("empty OFF file") from None
    tokens = header.split()
    if tokens[0].upper() != "OFF":
        raise MeshParseError(f"line {lineno}: expected 'OFF' header, got {tokens[0]!r}")
    counts = tokens[1:]
    try:
        if not counts:
            lineno, line = next(lines)
            counts = line.split()
        nv, nf = int(counts[0]), int(counts[1])
    except (StopIteration, IndexError, ValueError):
        raise MeshParseError("OFF: malformed counts line") from None

    verts = np.empty((nv, 3))
    faces = np.empty((nf, 3), dtype=np.int64)
    try:
        for i in range(nv):
            lineno, line = next(lines)
            verts[i] = [float(t) for t in line.split()[:3]]
        for i in range(nf):
            lineno, line = next(lines)
            tok = line.split()
            if int(tok[0]) != 3:
                raise MeshParseError(f"line {lineno}: only triangular faces are supported")
            faces[i] = [int(t) for t in tok[1:4]]
    except StopIteration:
        raise MeshParseError("OFF: unexpected end of file") from None
    except ValueError as exc:
        if isinstance(exc, MeshParseError):
            raise
        raise MeshParseError(f"line {lineno}: {exc}") from None
    return verts, faces


def _parse_ply(text: str):
    raw_lines = text.splitlines()
    if not raw_lines or raw_lines[0].strip() != "ply":
        raise MeshParseError("PLY: missing 'ply' magic")
    elements = []  # [name, count, [(prop_name, is_list)]]
    body_start = None
    for i, line in enumerate(raw_lines[1:], start=1):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise MeshParseError(f"PLY: unsupported format {tok[1]!r}, only ascii")
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise MeshParseError(f"line {i + 1}: property before element")
            if tok[1] == "list":
                elements[-1][2].append((tok[4], True))
            else:
                elements[-1][2].append((tok[2], False))
        elif tok[0] == "end_header":
            body_start = i + 1
            break
        else:
            raise MeshParseError(f"line {i + 1}: unknown header keyword {tok[0]!r}")
    if body_start is None:
        raise MeshParseError("PLY: missing end_header")

    body = [ln for ln in raw_lines[body_start:] if ln.strip()]
    pos = 0
    verts = faces = None
    for name, count, props in elements:
        chunk = body[pos:pos + count]
        if len(chunk) < count:
            raise MeshParseError(f"PLY: element {name!r} truncated")
        pos += count
        if name == "vertex":
            names = [p for p, _ in props]
            try:
                cols = [names.index(c) for c in ("x", "y", "z")]
                verts = np.array(
                    [[float(ln.split()[c]) for c in cols] for ln in chunk]
                ).reshape(-1, 3)
            except (ValueError, IndexError) as exc:
                raise MeshParseError(f"PLY: bad vertex data ({exc})") from None
        elif name == "face":
            out = []
            for ln in chunk:
                tok = ln.split()
                if int(tok[0]) != 3:
                    raise MeshParseError("PLY: only triangular faces are supported")
                out.append([int(t) for t in tok[1:4]])
            faces = np.array(out, dtype=np.int64).reshape(-1, 3)
    if verts is None or faces is None:
        raise MeshParseError("PLY: needs both vertex and face elements")
    return verts, faces


def load_side_labels(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return np.array([int(t) for t in text.split()], dtype=np.int64)
    except ValueError as exc:
        raise MeshParseError(f"{path}: {exc}") from None


def load_mesh(path, format: str | None = None, side_labels=None) -> Mesh:
    """Read an ASCII OFF or PLY triangle mesh.

    Vertices not referenced by any face are dropped (surviving vertices keep
    their relative order). ``side_labels`` may be an array or a path to a
    label file indexed like the file's vertices. Raises ``TopologyError`` if
    the edge graph has more than one component.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text(encoding="utf-8")
    if fmt == "off":
        verts, faces = _parse_off(text)
    elif fmt in ("ply", "ply-ascii"):
        verts, faces = _parse_ply(text)
    else:
        raise MeshParseError(f"unknown mesh format {fmt!r}")
    if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
        raise MeshParseError(f"{path}: face index out of range")

    labels = None
    if side_labels is not None:
        labels = side_labels if isinstance(side_labels, np.ndarray) else load_side_labels(side_labels)
        if len(labels) != len(verts):
            raise MeshParseError(
                f"side labels have {len(labels)} entries for {len(verts)} vertices"
            )

    used = np.zeros(len(verts), dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        logger.info("%s: pruning %d isolated vertices", path, int((~used).sum()))
        remap = np.cumsum(used) - 1
        verts, faces = verts[used], remap[faces]
        if labels is not None:
            labels = labels[used]

    mesh = Mesh(verts, faces, labels)
    ncomp = mesh.count_components()
    if ncomp != 1:
        raise TopologyError(f"{path}: edge graph is disconnected ({ncomp} components)")
    return mesh


def save_mesh(mesh: Mesh, path) -> None:
    path = Path(path)
    fmt = path.suffix.lstrip(".").lower()
    lines = []
    if fmt == "off":
        lines.append("OFF")
        lines.append(f"{mesh.n} {len(mesh.faces)} 0")
    elif fmt == "ply":
        lines += [
            "ply", "format ascii 1.0",
            f"element vertex {mesh.n}",
            "property float x", "property float y", "property float z",
            f"element face {len(mesh.faces)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
    else:
        raise MeshParseError(f"unknown mesh format {fmt!r}")
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- fields


def geodesic_all_pairs(mesh: Mesh) -> GeodesicField:
    """All-pairs shortest paths over the mesh edge graph.

    Edge weights are Euclidean edge lengths, so this approximates the true
    surface geodesic from above.
    """
    e = mesh.edges()
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    # csgraph drops zero weights; keep coincident vertices connected
    lengths = np.maximum(lengths, np.finfo(float).tiny)
    graph = sparse.coo_matrix((lengths, (e[:, 0], e[:, 1])), shape=(mesh.n, mesh.n)).tocsr()
    dist = csgraph.dijkstra(graph, directed=False)
    if not np.isfinite(dist).all():
        raise TopologyError(f"edge graph is disconnected ({mesh.count_components()} components)")
    # Dijkstra from each source is exact, but rounding can differ by direction
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    dist.setflags(write=False)
    return GeodesicField(dist, float(dist.max()))


def gaussian_field(geo: GeodesicField, rho: float) -> KernelField:
    """Gaussian density of the geodesic distances with bandwidth ``rho``."""
    if not rho > 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    values = np.exp(-0.5 * (geo.dist / rho) ** 2) / (rho * SQRT_2PI)
    values.setflags(write=False)
    return KernelField(values, float(rho))


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Unit vertex normals, averaging incident face normals weighted by corner angle."""
    v, f = mesh.vertices, mesh.faces
    p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    fn = np.cross(p1 - p0, p2 - p0)
    fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-300)

    def corner_angle(a, b, c):
        e1, e2 = b - a, c - a
        cos = np.einsum("ij,ij->i", e1, e2) / np.maximum(
            np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1), 1e-300
        )
        return np.arccos(np.clip(cos, -1.0, 1.0))

    normals = np.zeros_like(v)
    for corner, (a, b, c) in enumerate([(p0, p1, p2), (p1, p2, p0), (p2, p0, p1)]):
        np.add.at(normals, f[:, corner], corner_angle(a, b, c)[:, None] * fn)
    return normals / np.maximum(np.linalg.norm(normals, axis=1, keepdims=True), 1e-300)


def perturb_along_normals(mesh: Mesh, sigma2: float, seed: int) -> Mesh:
    """Offset every vertex along its normal by a N(0, sigma2) amount."""
    if sigma2 < 0:
        raise ParameterError(f"sigma2 must be non-negative, got {sigma2}")
    if sigma2 == 0:
        return Mesh(mesh.vertices.copy(), mesh.faces.copy(), mesh.side_labels)
    rng = np.random.default_rng(seed)
    offsets = rng.normal(0.0, math.sqrt(sigma2), size=mesh.n)
    moved = mesh.vertices + offsets[:, None] * vertex_normals(mesh)
    return Mesh(moved, mesh.faces.copy(), mesh.side_labels)
