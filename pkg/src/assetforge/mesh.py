"""Triangle mesh representation, topology validation and mass properties."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import MeshError

DEGENERATE_AREA = 1e-12
NORMAL_TOL = 1e-6


def _frozen(arr, dtype, width, name):
    if arr is None:
        return None
    out = np.array(arr, dtype=dtype, copy=True)
    if out.size == 0:
        out = out.reshape(0, width)
    if out.ndim != 2 or out.shape[1] != width:
        raise MeshError(f"{name} must have shape (n, {width}), got {out.shape}")
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle geometry in meters.

    Arrays are copied and made read-only on construction. ``uvs`` and
    ``vertex_normals`` are optional but, when given, carry one entry per
    vertex. Front faces wind counter-clockwise seen from outside.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        verts = _frozen(self.vertices, np.float64, 3, "vertices")
        faces = _frozen(self.faces, np.int64, 3, "faces")
        uvs = _frozen(self.uvs, np.float64, 2, "uvs")
        normals = _frozen(self.vertex_normals, np.float64, 3, "vertex_normals")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "uvs", uvs)
        object.__setattr__(self, "vertex_normals", normals)

        n = len(verts)
        if not np.all(np.isfinite(verts)):
            raise MeshError("vertex coordinates must be finite")
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            raise MeshError("face index out of range")
        if uvs is not None:
            if len(uvs) != n:
                raise MeshError(f"expected {n} uvs, got {len(uvs)}")
            if not np.all(np.isfinite(uvs)) or uvs.min(initial=0) < 0 or uvs.max(initial=0) > 1:
                raise MeshError("uv components must lie in [0, 1]")
        if normals is not None:
            if len(normals) != n:
                raise MeshError(f"expected {n} vertex normals, got {len(normals)}")
            lengths = np.linalg.norm(normals, axis=1)
            if not np.all(np.abs(lengths - 1.0) <= NORMAL_TOL):
                raise MeshError("vertex normals must have unit length")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def face_normals(self):
        """Unnormalized face normals (length = twice the triangle area)."""
        tri = self.vertices[self.faces]
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(), axis=1)

    def with_vertices(self, vertices):
        return replace(self, vertices=vertices)


@dataclass(frozen=True)
class ValidationReport:
    watertight: bool
    manifold: bool
    connected_components: int
    degenerate_face_fraction: float
    boundary_edge_count: int
    nonmanifold_edge_count: int = 0

    def to_dict(self):
        return {
            "watertight": self.watertight,
            "manifold": self.manifold,
            "connected_components": self.connected_components,
            "degenerate_face_fraction": self.degenerate_face_fraction,
            "boundary_edge_count": self.boundary_edge_count,
            "nonmanifold_edge_count": self.nonmanifold_edge_count,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class InertiaTensor:
    mass: float
    center_of_mass: tuple
    moments: tuple = field(repr=False)  # 3x3 nested tuple, kg*m^2

    @property
    def matrix(self):
        return np.array(self.moments, dtype=np.float64)

    def unique_entries(self):
        """The six URDF entries (ixx, ixy, ixz, iyy, iyz, izz)."""
        m = self.moments
        return {
            "ixx": m[0][0], "ixy": m[0][1], "ixz": m[0][2],
            "iyy": m[1][1], "iyz": m[1][2], "izz": m[2][2],
        }

    def to_dict(self):
        return {
            "mass": self.mass,
            "center_of_mass": list(self.center_of_mass),
            "moments": [list(row) for row in self.moments],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mass=float(d["mass"]),
            center_of_mass=tuple(float(x) for x in d["center_of_mass"]),
            moments=tuple(tuple(float(x) for x in row) for row in d["moments"]),
        )


def welded_faces(mesh):
    """Face indices remapped so that vertices at identical positions coincide.

    UV seams and split normals duplicate vertices; topology questions are
    asked about the surface, not the attribute layout.
    """
    if mesh.n_vertices == 0:
        return mesh.faces.copy()
    _, canon = np.unique(mesh.vertices, axis=0, return_inverse=True)
    return canon.reshape(-1)[mesh.faces]


def _directed_edges(faces):
    a = faces.reshape(-1)
    b = np.roll(faces, -1, axis=1).reshape(-1)
    return a, b


def validate_mesh(mesh):
    """Report watertightness, manifoldness and related topology statistics.

    Watertight means every edge is used by exactly two faces in opposite
    directions. Manifold additionally requires that the faces around each
    vertex form a single fan. Vertices at identical coordinates are welded
    before the edge analysis.
    """
    n_faces = mesh.n_faces
    if n_faces == 0:
        return ValidationReport(False, False, 0, 0.0, 0, 0)

    degenerate = float(np.count_nonzero(mesh.face_areas() < DEGENERATE_AREA)) / n_faces

    faces = welded_faces(mesh)
    nv = int(faces.max()) + 1
    a, b = _directed_edges(faces)
    directed = a * nv + b
    undirected = np.minimum(a, b) * nv + np.maximum(a, b)

    ukeys, ucount = np.unique(undirected, return_counts=True)
    boundary = int(np.count_nonzero(ucount == 1))
    nonmanifold = int(np.count_nonzero(ucount > 2))

    dkeys, dcount = np.unique(directed, return_counts=True)
    watertight = bool(np.all(ucount == 2)) and bool(np.all(dcount == 1))
    if watertight:
        # each directed edge must have its reverse
        reverse = b * nv + a
        watertight = bool(np.all(np.isin(reverse, dkeys, assume_unique=False)))

    manifold = watertight and _single_fan_per_vertex(faces, directed, nv)

    used = np.unique(faces)
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(nv, nv))
    _, labels = connected_components(graph, directed=False)
    components = len(np.unique(labels[used]))

    return ValidationReport(
        watertight=watertight,
        manifold=manifold,
        connected_components=int(components),
        degenerate_face_fraction=degenerate,
        boundary_edge_count=boundary,
        nonmanifold_edge_count=nonmanifold,
    )


def _single_fan_per_vertex(faces, directed, nv):
    # Corner c = (face f, slot i) at vertex v. Walking across the edge
    # (v, next) lands in the face owning the reverse edge (next, v); its
    # corner at v is the successor. One cycle per vertex <=> one fan.
    n_corners = faces.size
    v = faces.reshape(-1)
    nxt = np.roll(faces, -1, axis=1).reshape(-1)
    order = np.argsort(directed)
    sorted_keys = directed[order]
    pos = np.searchsorted(sorted_keys, nxt * nv + v)
    # the reverse edge (nxt, v) sits in the slot holding ``nxt``; v follows it
    edge_slot = order[pos]
    f_other = edge_slot // 3
    slot_other = (edge_slot % 3 + 1) % 3
    succ = f_other * 3 + slot_other
    graph = coo_matrix((np.ones(n_corners), (np.arange(n_corners), succ)), shape=(n_corners, n_corners))
    _, labels = connected_components(graph, directed=False)
    fans = np.unique(np.stack([v, labels], axis=1), axis=0)
    return len(fans) == len(np.unique(v))


def bounding_box(mesh):
    if mesh.n_vertices == 0:
        raise MeshError("empty geometry")
    return mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)


def extents(mesh):
    lo, hi = bounding_box(mesh)
    return hi - lo


def scale_uniform(mesh, factor):
    """Scale about the origin. Faces, uvs and normals are untouched."""
    factor = float(factor)
    if not math.isfinite(factor) or factor <= 0:
        raise MeshError(f"scale factor must be positive and finite, got {factor}")
    return mesh.with_vertices(mesh.vertices * factor)


# integral of x x^T over the unit tetrahedron (0, e1, e2, e3)
_CANONICAL_COVARIANCE = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 120.0


def signed_volume(mesh):
    tri = mesh.vertices[mesh.faces]
    return float(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0)


def compute_inertia(mesh, mass, report=None):
    """Uniform-density inertia about the center of mass.

    Exact integration over the signed tetrahedra spanned by the origin and
    each face. ``report`` may be passed to skip re-validating.
    """
    mass = float(mass)
    if not math.isfinite(mass) or mass <= 0:
        raise MeshError(f"mass must be positive, got {mass}")
    report = report or validate_mesh(mesh)
    if not report.watertight:
        raise MeshError("inertia requires watertight geometry")

    tri = mesh.vertices[mesh.faces]
    p0, p1, p2 = tri[:, 0], tri[:, 1], tri[:, 2]
    det = np.einsum("ij,ij->i", p0, np.cross(p1, p2))
    volume = det.sum() / 6.0
    if not volume > 0:
        raise MeshError(f"enclosed volume must be positive, got {volume:.6g}")

    centroid = (det[:, None] * (p0 + p1 + p2)).sum(axis=0) / 24.0 / volume

    # A has the tetra edge vectors as columns: covariance = det * A C A^T
    A = np.stack([p0, p1, p2], axis=2)
    cov = np.einsum("n,nij,jk,nlk->il", det, A, _CANONICAL_COVARIANCE, A)
    cov = cov - volume * np.outer(centroid, centroid)
    density = mass / volume
    moments = density * (np.trace(cov) * np.eye(3) - cov)
    moments = 0.5 * (moments + moments.T)

    return InertiaTensor(
        mass=mass,
        center_of_mass=tuple(float(x) for x in centroid),
        moments=tuple(tuple(float(x) for x in row) for row in moments),
    )
