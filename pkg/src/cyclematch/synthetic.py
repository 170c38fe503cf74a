"""Small synthetic meshes for fixtures and desk experiments."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .mesh import Mesh


def _outward(vertices, faces):
    # ConvexHull simplices are unoriented; flip faces whose normal points inward
    centre = vertices.mean(axis=0)
    p0, p1, p2 = (vertices[faces[:, i]] for i in range(3))
    normal = np.cross(p1 - p0, p2 - p0)
    flip = np.einsum("ij,ij->i", normal, p0 - centre) < 0
    faces = faces.copy()
    faces[flip] = faces[flip][:, ::-1]
    return faces


def icosphere(subdivisions: int = 2) -> Mesh:
    """Unit icosphere; 12, 42, 162, 642, ... vertices."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        midpoint = {}
        new_faces = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in midpoint:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return Mesh(np.array(verts), np.array(faces))


def bumpy_sphere(n: int, seed: int = 0, amplitude: float = 0.35) -> Mesh:
    """Closed genus-0 mesh with ``n`` vertices and no intrinsic symmetry.

    Points on a Fibonacci sphere are triangulated by their convex hull and
    then pushed radially by a few random smooth bumps.
    """
    rng = np.random.default_rng(seed)
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    pts = np.column_stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)]
    )
    faces = ConvexHull(pts).simplices.astype(np.int64)
    faces = _outward(pts, faces)

    centres = rng.normal(size=(5, 3))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    heights = rng.uniform(0.3, 1.0, size=5) * amplitude
    widths = rng.uniform(0.3, 0.8, size=5)
    cosang = pts @ centres.T
    radius = 1.0 + (heights * np.exp((cosang - 1) / widths ** 2)).sum(axis=1)
    # mild anisotropic stretch removes any leftover reflective symmetry
    scale = np.array([1.3, 1.0, 0.8])
    return Mesh(pts * radius[:, None] * scale, faces)


def isometric_copies(mesh: Mesh, count: int, seed: int = 0, shuffle_first: bool = False):
    """Vertex-relabelled copies of ``mesh``.

    Returns ``(meshes, orders)`` where vertex ``v`` of copy ``c`` is vertex
    ``orders[c][v]`` of the input. Use :func:`ground_truth` to get the
    correspondence between two copies.
    """
    rng = np.random.default_rng(seed)
    meshes, orders = [], []
    for c in range(count):
        if c == 0 and not shuffle_first:
            order = np.arange(mesh.n)
        else:
            order = rng.permutation(mesh.n)
        meshes.append(mesh.relabeled(order))
        orders.append(order)
    return meshes, orders


def ground_truth(order_i, order_j) -> np.ndarray:
    """Map from copy ``i`` vertices to the matching copy ``j`` vertices."""
    inv_j = np.empty_like(order_j)
    inv_j[order_j] = np.arange(len(order_j))
    return inv_j[order_i]
