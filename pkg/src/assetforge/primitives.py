"""Procedural meshes used as fixtures by the CLI, the tests and the docs."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh

# (normal, u axis, v axis) for each cube side; u x v = normal keeps CCW winding
_CUBE_SIDES = [
    ((1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),
    ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
    ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    ((0, 0, 1), (1, 0, 0), (0, 1, 0)),
    ((0, 0, -1), (-1, 0, 0), (0, 1, 0)),
]


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0), uv_margin=0.02):
    """Axis-aligned box with split per-side vertices, flat normals and a 3x2 UV atlas."""
    half = np.asarray(size, dtype=np.float64) / 2.0
    center = np.asarray(center, dtype=np.float64)
    verts, normals, uvs, faces = [], [], [], []
    for side, (n, u, v) in enumerate(_CUBE_SIDES):
        n, u, v = (np.asarray(x, dtype=np.float64) for x in (n, u, v))
        col, row = side % 3, side // 3
        u0, v0 = col / 3.0 + uv_margin, row / 2.0 + uv_margin
        du, dv = 1 / 3.0 - 2 * uv_margin, 0.5 - 2 * uv_margin
        base = len(verts)
        for su, sv in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
            verts.append(center + half * (n + su * u + sv * v))
            normals.append(n)
            uvs.append((u0 + du * (su + 1) / 2, v0 + dv * (sv + 1) / 2))
        faces += [(base, base + 1, base + 2), (base, base + 2, base + 3)]
    return TriangleMesh(np.array(verts), np.array(faces), np.array(uvs), np.array(normals))


def cube(edge=1.0, center=(0.0, 0.0, 0.0)):
    return box((edge, edge, edge), center)


def quad(width=1.0, height=1.0):
    """Two-triangle rectangle in the XY plane facing +Z, UVs spanning [0,1]^2."""
    w, h = width / 2.0, height / 2.0
    verts = np.array([[-w, -h, 0.0], [w, -h, 0.0], [w, h, 0.0], [-w, h, 0.0]])
    uvs = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    normals = np.tile([0.0, 0.0, 1.0], (4, 1))
    return TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]), uvs, normals)


def tetrahedron():
    verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(verts, faces)


def uv_sphere(radius=0.5, n_lat=50, n_lon=100):
    """Latitude/longitude sphere with a duplicated seam column and per-segment pole vertices."""
    theta = np.linspace(0.0, np.pi, n_lat + 1)
    phi = np.linspace(0.0, 2 * np.pi, n_lon + 1)
    st, ct = np.sin(theta), np.cos(theta)
    st[0] = st[-1] = 0.0
    ct[0], ct[-1] = 1.0, -1.0
    sp, cp = np.sin(phi), np.cos(phi)
    sp[-1], cp[-1] = sp[0], cp[0]

    normals = np.stack(
        [np.outer(st, cp), np.outer(st, sp), np.repeat(ct[:, None], n_lon + 1, axis=1)], axis=-1
    ).reshape(-1, 3)
    uu, vv = np.meshgrid(np.arange(n_lon + 1) / n_lon, 1.0 - np.arange(n_lat + 1) / n_lat)
    uvs = np.stack([uu, vv], axis=-1).reshape(-1, 2)

    idx = np.arange((n_lat + 1) * (n_lon + 1)).reshape(n_lat + 1, n_lon + 1)
    faces = []
    for i in range(n_lat):
        a, b = idx[i, :-1], idx[i + 1, :-1]
        c, d = idx[i + 1, 1:], idx[i, 1:]
        if i != n_lat - 1:
            faces.append(np.stack([a, b, c], axis=1))
        if i != 0:
            faces.append(np.stack([a, c, d], axis=1))
    return TriangleMesh(normals * radius, np.concatenate(faces), uvs, normals)


def convex_hull(points):
    """Outward-oriented triangle hull of a point cloud."""
    from scipy.spatial import ConvexHull

    points = np.asarray(points, dtype=np.float64)
    hull = ConvexHull(points)
    faces = hull.simplices.copy()
    tri = points[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", n, hull.equations[:, :3]) < 0
    faces[flip] = faces[flip][:, ::-1]
    used, remap = np.unique(faces, return_inverse=True)
    return TriangleMesh(points[used], remap.reshape(-1, 3))


def rotation_matrix(axis, degrees):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    t = np.radians(degrees)
    K = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(t) * K + (1 - np.cos(t)) * K @ K


def transformed(mesh, rotation=None, translation=(0.0, 0.0, 0.0)):
    """Rigidly move a mesh, rotating its normals along."""
    R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
    verts = mesh.vertices @ R.T + np.asarray(translation, dtype=np.float64)
    normals = None
    if mesh.vertex_normals is not None:
        normals = mesh.vertex_normals @ R.T
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return TriangleMesh(verts, mesh.faces, mesh.uvs, normals)


def concatenate(meshes):
    verts, faces, uvs, normals = [], [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        uvs.append(m.uvs)
        normals.append(m.vertex_normals)
        offset += m.n_vertices
    uv = None if any(u is None for u in uvs) else np.concatenate(uvs)
    nrm = None if any(n is None for n in normals) else np.concatenate(normals)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces), uv, nrm)


def drop_faces(mesh, face_ids):
    keep = np.setdiff1d(np.arange(mesh.n_faces), np.atleast_1d(face_ids))
    return TriangleMesh(mesh.vertices, mesh.faces[keep], mesh.uvs, mesh.vertex_normals)
