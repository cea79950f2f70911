"""OBJ and PNG readers/writers."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InputError, MeshError
from .mesh import TriangleMesh, signed_volume, validate_mesh


def _resolve(idx, count, kind, lineno):
    i = int(idx)
    i = i - 1 if i > 0 else count + i
    if not 0 <= i < count:
        raise InputError(f"line {lineno}: {kind} index {idx} out of range")
    return i


def parse_obj(text, check_winding=True):
    """Parse OBJ text into a TriangleMesh.

    Corners with distinct (v, vt, vn) triples become distinct vertices.
    Faces must be triangles.
    """
    positions, texcoords, normals = [], [], []
    corners = {}
    faces = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        try:
            if tag == "v":
                positions.append([float(x) for x in rest[:3]])
            elif tag == "vt":
                texcoords.append([float(x) for x in rest[:2]])
            elif tag == "vn":
                normals.append([float(x) for x in rest[:3]])
            elif tag == "f":
                if len(rest) != 3:
                    raise InputError(
                        f"line {lineno}: face has {len(rest)} vertices; only triangles are supported"
                    )
                tri = []
                for token in rest:
                    parts = token.split("/")
                    v = _resolve(parts[0], len(positions), "vertex", lineno)
                    vt = _resolve(parts[1], len(texcoords), "texcoord", lineno) if len(parts) > 1 and parts[1] else None
                    vn = _resolve(parts[2], len(normals), "normal", lineno) if len(parts) > 2 and parts[2] else None
                    key = (v, vt, vn)
                    if key not in corners:
                        corners[key] = len(corners)
                    tri.append(corners[key])
                faces.append(tri)
        except ValueError as exc:
            raise InputError(f"line {lineno}: cannot parse {raw!r}: {exc}") from None

    keys = list(corners)
    pos = np.array(positions, dtype=np.float64).reshape(-1, 3)
    verts = pos[[k[0] for k in keys]] if keys else pos
    has_vt = {k[1] is not None for k in keys}
    has_vn = {k[2] is not None for k in keys}
    if len(has_vt) > 1 or len(has_vn) > 1:
        raise InputError("faces mix corners with and without vt/vn references")
    uvs = nrm = None
    if keys and has_vt == {True}:
        uvs = np.array(texcoords, dtype=np.float64)[[k[1] for k in keys]]
    if keys and has_vn == {True}:
        nrm = np.array(normals, dtype=np.float64)[[k[2] for k in keys]]
        lengths = np.linalg.norm(nrm, axis=1, keepdims=True)
        if np.any(lengths == 0):
            raise MeshError("zero-length vertex normal")
        nrm = nrm / lengths
    if not keys:
        # vertices without faces
        verts = pos

    mesh = TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3), uvs, nrm)
    if check_winding and mesh.n_faces and validate_mesh(mesh).watertight and signed_volume(mesh) < 0:
        raise MeshError("closed mesh has inward-facing winding (expected counter-clockwise, outward normals)")
    return mesh


def load_obj(path, check_winding=True):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read mesh {path}: {exc}") from None
    return parse_obj(text, check_winding=check_winding)


def format_obj(mesh, mtllib=None, material=None):
    out = ["# assetforge"]
    if mtllib:
        out.append(f"mtllib {mtllib}")
    for v in mesh.vertices:
        out.append("v %r %r %r" % tuple(float(x) for x in v))
    if mesh.uvs is not None:
        for t in mesh.uvs:
            out.append("vt %r %r" % tuple(float(x) for x in t))
    if mesh.vertex_normals is not None:
        for n in mesh.vertex_normals:
            out.append("vn %r %r %r" % tuple(float(x) for x in n))
    if material:
        out.append(f"usemtl {material}")
    has_t, has_n = mesh.uvs is not None, mesh.vertex_normals is not None
    for f in mesh.faces + 1:
        if has_t and has_n:
            out.append("f " + " ".join(f"{i}/{i}/{i}" for i in f))
        elif has_t:
            out.append("f " + " ".join(f"{i}/{i}" for i in f))
        elif has_n:
            out.append("f " + " ".join(f"{i}//{i}" for i in f))
        else:
            out.append("f %d %d %d" % tuple(f))
    return "\n".join(out) + "\n"


def save_obj(mesh, path, mtllib=None, material=None):
    Path(path).write_text(format_obj(mesh, mtllib, material))


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_png(image):
    """Float image in [0,1] (HxW, HxWx3 or HxWx4) -> PNG bytes."""
    buf = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data, keep_alpha=False):
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise InputError(f"not a decodable image: {exc}") from None
    return _to_float(img, keep_alpha)


def _to_float(img, keep_alpha):
    has_alpha = img.mode in ("RGBA", "LA") or (img.mode == "P" and "transparency" in img.info)
    mode = "RGBA" if keep_alpha and has_alpha else "RGB"
    return np.asarray(img.convert(mode), dtype=np.float64) / 255.0


def read_png(path, keep_alpha=False):
    try:
        with Image.open(path) as img:
            img.load()
            return _to_float(img, keep_alpha)
    except OSError as exc:
        raise InputError(f"cannot read image {path}: {exc}") from None


def write_png(path, image):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_png(image))
