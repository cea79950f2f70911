"""Slow, obviously-correct reference computations used to check the library."""

from collections import Counter, defaultdict

import numpy as np

from assetforge import primitives
from assetforge.mesh import TriangleMesh


def weld_map(vertices):
    first = {}
    out = []
    for v in map(tuple, np.asarray(vertices).tolist()):
        out.append(first.setdefault(v, len(first)))
    return out


def edge_multiset(mesh):
    """Brute-force topology: (watertight, manifold, boundary_edge_count)."""
    weld = weld_map(mesh.vertices)
    faces = [tuple(weld[i] for i in f) for f in mesh.faces.tolist()]
    directed = Counter()
    undirected = Counter()
    for a, b, c in faces:
        for u, v in ((a, b), (b, c), (c, a)):
            directed[(u, v)] += 1
            undirected[frozenset((u, v))] += 1
    boundary = sum(1 for n in undirected.values() if n == 1)
    watertight = bool(faces) and all(n == 2 for n in undirected.values())
    if watertight:
        for (u, v), n in directed.items():
            if n != 1 or directed.get((v, u), 0) != 1:
                watertight = False
                break
    manifold = watertight and all(n == 1 for n in _fan_counts(faces).values())
    return watertight, manifold, boundary


def _fan_counts(faces):
    incident = defaultdict(list)
    for fi, f in enumerate(faces):
        for v in f:
            incident[v].append(fi)
    counts = {}
    for v, fs in incident.items():
        remaining = set(fs)
        groups = 0
        while remaining:
            groups += 1
            stack = [remaining.pop()]
            while stack:
                f = stack.pop()
                others = set(faces[f]) - {v}
                for g in list(remaining):
                    if others & (set(faces[g]) - {v}):
                        remaining.discard(g)
                        stack.append(g)
        counts[v] = groups
    return counts


def box_inertia(mass, size):
    a, b, c = size
    return np.diag([mass * (b * b + c * c) / 12, mass * (a * a + c * c) / 12, mass * (a * a + b * b) / 12])


def monte_carlo_inertia(hull_equations, lo, hi, mass, n=1_000_000, seed=0):
    """Inertia about the center of mass by uniform sampling of a convex region.

    ``hull_equations`` rows are (normal, offset) with normal.x + offset <= 0 inside.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n, 3))
    inside = np.all(pts @ hull_equations[:, :3].T + hull_equations[:, 3] <= 0, axis=1)
    p = pts[inside]
    com = p.mean(axis=0)
    d = p - com
    cov = d.T @ d / len(p)
    return mass * (np.trace(cov) * np.eye(3) - cov), com


def psnr(a, b):
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    return float("inf") if mse == 0 else 10 * np.log10(1.0 / mse)


def checker(n_cells, cell):
    """n_cells x n_cells black/white checkerboard, ``cell`` texels per cell, HxWx3."""
    board = (np.indices((n_cells, n_cells)).sum(axis=0) % 2).astype(np.float64)
    return np.repeat(np.repeat(board, cell, axis=0), cell, axis=1)[..., None].repeat(3, axis=2)


def pinhole(point, camera):
    """Pixel coordinates of a world point, derived from the camera's stated convention."""
    eye = camera.radius * np.array([
        np.cos(np.radians(camera.elevation)) * np.cos(np.radians(camera.azimuth)),
        np.cos(np.radians(camera.elevation)) * np.sin(np.radians(camera.azimuth)),
        np.sin(np.radians(camera.elevation)),
    ])
    fwd = -eye / np.linalg.norm(eye)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, fwd)
    d = np.asarray(point, dtype=float) - eye
    z = d @ fwd
    f = 0.5 * camera.height / np.tan(np.radians(camera.fov_y) / 2)
    return np.array([camera.width / 2 + f * (d @ right) / z, camera.height / 2 - f * (d @ true_up) / z])


def point_reflected(m, i=0):
    """Copy of a closed convex mesh reflected through its own vertex ``i``; touches it only there."""
    p = m.vertices[i]
    return TriangleMesh(2 * p - m.vertices, m.faces[:, ::-1])


TOPOLOGY_KINDS = ("closed", "holes", "fin", "duplicate", "flipped", "pinch")


def topology_case(rng, kind):
    """Random convex hull, then damaged according to ``kind``."""
    pts = rng.normal(size=(int(rng.integers(6, 40)), 3))
    closed = primitives.convex_hull(pts)
    if kind == "closed":
        return closed
    if kind == "holes":
        k = int(rng.integers(1, 4))
        return primitives.drop_faces(closed, rng.choice(closed.n_faces, size=k, replace=False))
    if kind == "fin":
        # a third face on an existing edge
        a, b, _ = closed.faces[int(rng.integers(closed.n_faces))]
        v = np.vstack([closed.vertices, closed.vertices[a] + rng.normal(size=3)])
        return TriangleMesh(v, np.vstack([closed.faces, [[a, b, len(v) - 1]]]))
    if kind == "duplicate":
        f = closed.faces[int(rng.integers(closed.n_faces))]
        return TriangleMesh(closed.vertices, np.vstack([closed.faces, [f]]))
    if kind == "flipped":
        faces = closed.faces.copy()
        i = int(rng.integers(len(faces)))
        faces[i] = faces[i][::-1]
        return TriangleMesh(closed.vertices, faces)
    # two hulls sharing one vertex
    return primitives.concatenate([closed, point_reflected(closed, int(rng.integers(closed.n_vertices)))])
