"""Perspective cameras and a vectorized z-buffer rasterizer.

Pixel centers sit at half-integer coordinates and a pixel is covered when
its center lies inside (or on the edge of) a front-facing triangle. Depth
ties are broken by the lower face index, so output never depends on how
the work is chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, MeshError

DEFAULT_RADIUS = 2.0
DEFAULT_FOV_Y = 40.0
NEAR = 1e-4
# relative depth spread below which a view counts as one flat depth
DEPTH_FLAT = 1e-9
_CHUNK = 1 << 21


@dataclass(frozen=True)
class Camera:
    elevation: float
    azimuth: float
    radius: float
    fov_y: float
    resolution: tuple  # (width, height)

    def __post_init__(self):
        w, h = self.resolution
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InputError(f"camera radius must be positive, got {self.radius}")
        if not 0 < self.fov_y < 180:
            raise InputError(f"fov_y must lie in (0, 180), got {self.fov_y}")
        if not -90 <= self.elevation <= 90:
            raise InputError(f"elevation must lie in [-90, 90], got {self.elevation}")
        if int(w) < 1 or int(h) < 1:
            raise InputError(f"resolution must be at least 1x1, got {self.resolution}")
        object.__setattr__(self, "resolution", (int(w), int(h)))

    @property
    def width(self):
        return self.resolution[0]

    @property
    def height(self):
        return self.resolution[1]

    @property
    def position(self):
        el, az = math.radians(self.elevation), math.radians(self.azimuth)
        return self.radius * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
        )

    def basis(self):
        """(right, up, forward) unit vectors in world space."""
        forward = -self.position / self.radius
        up = np.array([1.0, 0.0, 0.0]) if abs(self.elevation) == 90 else np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up)
        right /= np.linalg.norm(right)
        true_up = np.cross(right, forward)
        return right, true_up, forward

    def rotation(self):
        """World-to-view rotation; view space looks down -Z with +Y up."""
        right, up, forward = self.basis()
        return np.stack([right, up, -forward])

    @property
    def focal(self):
        return 0.5 * self.height / math.tan(math.radians(self.fov_y) / 2)

    def with_resolution(self, resolution):
        return Camera(self.elevation, self.azimuth, self.radius, self.fov_y, tuple(resolution))

    def to_view(self, points):
        return (np.asarray(points, dtype=np.float64) - self.position) @ self.rotation().T

    def project(self, points):
        """World points -> (pixel xy, view depth). Depth is the distance along the view axis."""
        pv = self.to_view(points)
        depth = -pv[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = 0.5 * self.width + self.focal * pv[:, 0] / depth
            y = 0.5 * self.height - self.focal * pv[:, 1] / depth
        return np.stack([x, y], axis=1), depth


def make_camera(elevation, azimuth, radius=DEFAULT_RADIUS, fov_y=DEFAULT_FOV_Y, resolution=(512, 512)):
    return Camera(float(elevation), float(azimuth), float(radius), float(fov_y), tuple(resolution))


def default_view_set(radius=DEFAULT_RADIUS, fov_y=DEFAULT_FOV_Y, resolution=(512, 512)):
    """Six views around the object: azimuths 0..300 in 60 degree steps, elevations alternating 20 / -10."""
    return [
        make_camera(20.0 if i % 2 == 0 else -10.0, 60.0 * i, radius, fov_y, resolution)
        for i in range(6)
    ]


def orthogonal_view_set(radius=DEFAULT_RADIUS, fov_y=DEFAULT_FOV_Y, resolution=(512, 512)):
    return [make_camera(0.0, az, radius, fov_y, resolution) for az in (0.0, 90.0, 180.0, 270.0)]


def framing_radius(mesh, fov_y=DEFAULT_FOV_Y, margin=1.1):
    """Camera distance at which the mesh's bounding sphere about the origin fits the view."""
    if mesh.n_vertices == 0:
        return DEFAULT_RADIUS
    r = float(np.linalg.norm(mesh.vertices, axis=1).max())
    if r == 0:
        return DEFAULT_RADIUS
    return margin * r / math.sin(math.radians(fov_y) / 2)


@dataclass
class Fragments:
    """Per-pixel rasterization result: -1 face id marks background."""

    face_id: np.ndarray  # H x W int64
    bary: np.ndarray  # H x W x 3, perspective-correct
    depth: np.ndarray  # H x W view depth, inf on background

    @property
    def mask(self):
        return self.face_id >= 0

    def interpolate(self, faces, attribute):
        """Barycentric interpolation of a per-vertex attribute over covered pixels."""
        attribute = np.asarray(attribute, dtype=np.float64)
        h, w = self.face_id.shape
        out = np.zeros((h, w, attribute.shape[1]))
        m = self.mask
        corners = attribute[faces[self.face_id[m]]]
        out[m] = np.einsum("nk,nkc->nc", self.bary[m], corners)
        return out


def rasterize(mesh, camera):
    """Z-buffered coverage of ``mesh`` from ``camera``.

    Triangles with any vertex behind the near plane are dropped rather than
    clipped; back faces (clockwise on screen) are culled.
    """
    W, H = camera.resolution
    face_id = np.full((H, W), -1, dtype=np.int64)
    zbuf = np.full((H, W), np.inf)
    bary = np.zeros((H, W, 3))
    if mesh.n_faces == 0:
        return Fragments(face_id, bary, zbuf)

    xy, depth = camera.project(mesh.vertices)
    faces = mesh.faces
    fd = depth[faces]
    sx = xy[faces, 0]
    sy = xy[faces, 1]
    # signed area with y pointing down: negative for counter-clockwise in view
    area = (sx[:, 1] - sx[:, 0]) * (sy[:, 2] - sy[:, 0]) - (sx[:, 2] - sx[:, 0]) * (sy[:, 1] - sy[:, 0])
    front = np.all(fd > NEAR, axis=1) & (area < 0) & np.isfinite(area)

    x0 = np.ceil(sx.min(axis=1) - 0.5)
    x1 = np.floor(sx.max(axis=1) - 0.5)
    y0 = np.ceil(sy.min(axis=1) - 0.5)
    y1 = np.floor(sy.max(axis=1) - 0.5)
    x0 = np.nan_to_num(np.maximum(x0, 0), nan=0.0)
    y0 = np.nan_to_num(np.maximum(y0, 0), nan=0.0)
    x1 = np.nan_to_num(np.minimum(x1, W - 1), nan=-1.0, neginf=-1.0)
    y1 = np.nan_to_num(np.minimum(y1, H - 1), nan=-1.0, neginf=-1.0)
    bw = np.where(front, np.maximum(x1 - x0 + 1, 0), 0).astype(np.int64)
    bh = np.where(front, np.maximum(y1 - y0 + 1, 0), 0).astype(np.int64)
    counts = bw * bh
    ids = np.flatnonzero(counts)
    if len(ids) == 0:
        return Fragments(face_id, bary, zbuf)

    x0 = np.minimum(x0, W).astype(np.int64)
    y0 = np.minimum(y0, H).astype(np.int64)
    inv_area = 1.0 / area
    flat_z = zbuf.reshape(-1)
    flat_f = face_id.reshape(-1)
    flat_b = bary.reshape(-1, 3)

    cum = np.cumsum(counts[ids])
    start = 0
    while start < len(ids):
        stop = int(np.searchsorted(cum, (cum[start - 1] if start else 0) + _CHUNK, side="right"))
        stop = max(stop, start + 1)
        chunk = ids[start:stop]
        _raster_chunk(chunk, counts, bw, x0, y0, sx, sy, fd, inv_area, W, flat_z, flat_f, flat_b)
        start = stop
    return Fragments(face_id, bary, zbuf)


def _raster_chunk(tris, counts, bw, x0, y0, sx, sy, fd, inv_area, W, flat_z, flat_f, flat_b):
    n = counts[tris]
    tri = np.repeat(tris, n)
    offsets = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
    width = bw[tri]
    px = x0[tri] + offsets % width
    py = y0[tri] + offsets // width
    cx = px + 0.5
    cy = py + 0.5

    ax, ay = sx[tri, 0], sy[tri, 0]
    bx, by = sx[tri, 1], sy[tri, 1]
    qx, qy = sx[tri, 2], sy[tri, 2]
    ia = inv_area[tri]
    l0 = ((bx - cx) * (qy - cy) - (qx - cx) * (by - cy)) * ia
    l1 = ((qx - cx) * (ay - cy) - (ax - cx) * (qy - cy)) * ia
    l2 = 1.0 - l0 - l1
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    if not inside.any():
        return
    tri, px, py = tri[inside], px[inside], py[inside]
    lam = np.stack([l0[inside], l1[inside], l2[inside]], axis=1)

    # perspective-correct weights: screen barycentrics divided by view depth
    w = lam / fd[tri]
    inv_z = w.sum(axis=1)
    z = 1.0 / inv_z
    b = w * z[:, None]

    pix = py * W + px
    order = np.lexsort((tri, z, pix))
    pix_sorted = pix[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win = order[first]
    p = pix[win]
    zw, tw = z[win], tri[win]
    better = (zw < flat_z[p]) | ((zw == flat_z[p]) & (tw < flat_f[p]))
    p = p[better]
    flat_z[p] = zw[better]
    flat_f[p] = tw[better]
    flat_b[p] = b[win][better]


@dataclass
class GeometryBuffers:
    """Per-view mask, normalized depth, view-space normals and UVs.

    ``depth_min``/``depth_max`` record the view-depth range that was mapped
    to [0, 1], so that world points can be compared against the buffer.
    """

    mask: np.ndarray  # H x W bool
    depth: np.ndarray  # H x W in [0, 1]
    normals: np.ndarray  # H x W x 3
    uv: np.ndarray  # H x W x 2
    depth_min: float = 0.0
    depth_max: float = 0.0

    @property
    def shape(self):
        return self.mask.shape

    def normalize_depth(self, view_depth):
        span = self.depth_max - self.depth_min
        if span <= 0:
            return np.zeros_like(np.asarray(view_depth, dtype=np.float64))
        return (np.asarray(view_depth) - self.depth_min) / span


def _require(mesh, *attrs):
    missing = [a for a in attrs if getattr(mesh, a) is None]
    if missing:
        raise MeshError("mesh is missing required attribute(s): " + ", ".join(missing))


def render_geometry_buffers(mesh, camera, fragments=None):
    _require(mesh, "uvs", "vertex_normals")
    frags = fragments if fragments is not None else rasterize(mesh, camera)
    m = frags.mask
    H, W = m.shape

    normals = frags.interpolate(mesh.faces, mesh.vertex_normals)
    lengths = np.linalg.norm(normals[m], axis=1, keepdims=True)
    world_n = normals[m] / np.where(lengths > 0, lengths, 1.0)
    view_n = np.zeros((H, W, 3))
    view_n[m] = world_n @ camera.rotation().T
    # rotation preserves length; renormalize to keep 1 +- 1e-12 after roundoff
    view_n[m] /= np.linalg.norm(view_n[m], axis=1, keepdims=True)

    uv = np.clip(frags.interpolate(mesh.faces, mesh.uvs), 0.0, 1.0)
    uv[~m] = 0.0

    depth = np.zeros((H, W))
    dmin = dmax = 0.0
    if m.any():
        z = frags.depth[m]
        dmin, dmax = float(z.min()), float(z.max())
        if dmax - dmin <= DEPTH_FLAT * dmax:
            dmin = dmax
        else:
            depth[m] = (z - dmin) / (dmax - dmin)
    return GeometryBuffers(m.copy(), depth, view_n, uv, dmin, dmax)


def texel_index(uv, size):
    """UV in [0,1]^2 -> integer (row, col) of the texel containing it.

    Row 0 is the top of the image, i.e. v = 1.
    """
    W, H = size
    col = np.clip(np.floor(uv[..., 0] * W), 0, W - 1).astype(np.int64)
    row = np.clip(np.floor((1.0 - uv[..., 1]) * H), 0, H - 1).astype(np.int64)
    return row, col


def render_color(mesh, camera, texture, fragments=None):
    """Unlit render with nearest-texel lookup; background is black."""
    texture = np.asarray(texture, dtype=np.float64)
    W, H = camera.resolution
    out = np.zeros((H, W, 3))
    if mesh.n_faces == 0:
        return out
    _require(mesh, "uvs")
    frags = fragments if fragments is not None else rasterize(mesh, camera)
    m = frags.mask
    uv = frags.interpolate(mesh.faces, mesh.uvs)[m]
    row, col = texel_index(uv, (texture.shape[1], texture.shape[0]))
    out[m] = texture[row, col, :3]
    return out


def render_shaded(mesh, camera, fragments=None):
    """Grey headlight shading from face normals; works without uvs or normals."""
    frags = fragments if fragments is not None else rasterize(mesh, camera)
    W, H = camera.resolution
    out = np.zeros((H, W, 3))
    m = frags.mask
    if not m.any():
        return out
    fn = mesh.face_normals()[frags.face_id[m]]
    fn /= np.maximum(np.linalg.norm(fn, axis=1, keepdims=True), 1e-300)
    shade = np.clip((fn @ camera.rotation().T)[:, 2], 0.0, 1.0)
    out[m] = (0.2 + 0.8 * shade)[:, None]
    return out


def geometry_condition(mesh, cameras, grid=(2, 3)):
    """Stack of (normal, object-space position, mask) for several views.

    Each attribute is tiled spatially into a ``rows x cols`` grid of views
    and the attributes are concatenated along channels: H x W x 7.
    Normals are view-space and mapped from [-1, 1] to [0, 1].
    """
    rows, cols = grid
    if rows * cols != len(cameras):
        raise InputError(f"grid {rows}x{cols} does not hold {len(cameras)} views")
    tiles = []
    for cam in cameras:
        frags = rasterize(mesh, cam)
        buf = render_geometry_buffers(mesh, cam, frags)
        pos = frags.interpolate(mesh.faces, mesh.vertices)
        normal = np.where(buf.mask[..., None], 0.5 * (buf.normals + 1.0), 0.0)
        tiles.append(np.concatenate([normal, pos, buf.mask[..., None].astype(np.float64)], axis=2))
    h, w = tiles[0].shape[:2]
    if any(t.shape[:2] != (h, w) for t in tiles):
        raise InputError("all views must share one resolution")
    return np.concatenate(
        [np.concatenate(tiles[r * cols:(r + 1) * cols], axis=1) for r in range(rows)], axis=0
    )
