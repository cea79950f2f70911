"""URDF emission and on-disk asset bundles.

Bundle layout (paths relative to the bundle root)::

    asset.urdf
    metadata.json
    meshes/asset.obj
    meshes/asset.mtl
    textures/albedo.png
"""

from __future__ import annotations

import json
import math
import os
import shutil
import tempfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, MeshError
from .fileio import format_obj, write_png
from .inspection import CheckReport
from .mesh import InertiaTensor, ValidationReport, validate_mesh
from .physics import PhysicalProperties

MESH_PATH = "meshes/asset.obj"
MTL_PATH = "meshes/asset.mtl"
TEXTURE_PATH = "textures/albedo.png"
URDF_PATH = "asset.urdf"
METADATA_PATH = "metadata.json"
BUNDLE_FORMAT = "assetforge-bundle/1"


@dataclass
class AssetBundle:
    mesh_path: str
    texture_path: str
    urdf_path: str
    metadata_path: str
    properties: PhysicalProperties
    inertia: InertiaTensor
    validation: ValidationReport
    reports: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        for p in (self.mesh_path, self.texture_path, self.urdf_path, self.metadata_path):
            if Path(p).is_absolute() or ".." in Path(p).parts:
                raise InputError(f"bundle paths must be relative to the bundle root: {p}")


def _num(x):
    x = float(x)
    if not math.isfinite(x):
        raise InputError(f"non-finite value {x} cannot go into URDF")
    return repr(x)


def _vec(v):
    return " ".join(_num(x) for x in v)


def emit_urdf(bundle, robot_name="asset"):
    """Single-link URDF; inertia attributes are exact reprs of the computed values."""
    if not bundle.validation.watertight:
        raise MeshError("refusing to emit URDF for non-watertight geometry")
    if not bundle.inertia.mass > 0:
        raise InputError("refusing to emit URDF with non-positive mass")

    robot = ET.Element("robot", name=robot_name)
    link = ET.SubElement(robot, "link", name="base_link")
    contact = ET.SubElement(link, "contact")
    ET.SubElement(contact, "lateral_friction", value=_num(bundle.properties.friction))

    inertial = ET.SubElement(link, "inertial")
    ET.SubElement(inertial, "origin", xyz=_vec(bundle.inertia.center_of_mass), rpy="0 0 0")
    ET.SubElement(inertial, "mass", value=_num(bundle.inertia.mass))
    ET.SubElement(inertial, "inertia", {k: _num(v) for k, v in bundle.inertia.unique_entries().items()})

    for tag in ("visual", "collision"):
        el = ET.SubElement(link, tag)
        ET.SubElement(el, "origin", xyz="0 0 0", rpy="0 0 0")
        geom = ET.SubElement(el, "geometry")
        ET.SubElement(geom, "mesh", filename=bundle.mesh_path, scale="1 1 1")

    ET.indent(robot, space="  ")
    return '<?xml version="1.0"?>\n' + ET.tostring(robot, encoding="unicode") + "\n"


def _metadata(bundle, timestamp):
    prov = dict(bundle.provenance)
    prov.setdefault("tool", "assetforge")
    prov.setdefault("tool_version", __version__)
    if timestamp:
        prov["created_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return {
        "format": BUNDLE_FORMAT,
        "files": {
            "mesh": bundle.mesh_path,
            "texture": bundle.texture_path,
            "urdf": bundle.urdf_path,
            "metadata": bundle.metadata_path,
        },
        "properties": bundle.properties.to_dict(),
        "inertia": bundle.inertia.to_dict(),
        "validation": bundle.validation.to_dict(),
        "reports": [r.to_dict() for r in bundle.reports],
        "provenance": prov,
        # separate convex collision geometry is not generated; collision reuses the visual mesh
        "collision": {"mesh": bundle.mesh_path, "decomposition": None},
    }


def write_bundle(mesh, texture, properties, inertia, reports, out_dir, validation=None,
                 provenance=None, overwrite=False, timestamp=True):
    """Write a complete bundle atomically (temp dir + rename) and return its record."""
    if texture is None:
        raise InputError("texture required")
    pixels = getattr(texture, "pixels", texture)
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[2] < 3:
        raise InputError(f"texture must be H x W x 3, got {pixels.shape}")
    if mesh.uvs is None:
        raise InputError("mesh needs uvs to carry a texture")
    validation = validation or validate_mesh(mesh)

    bundle = AssetBundle(
        MESH_PATH, TEXTURE_PATH, URDF_PATH, METADATA_PATH,
        properties, inertia, validation, list(reports or []), dict(provenance or {}),
    )
    urdf = emit_urdf(bundle)

    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        raise InputError(f"{out_dir} exists and is not empty; pass overwrite to replace it")
    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".bundle-", dir=out_dir.parent))
    except OSError as exc:
        raise InputError(f"cannot write bundle under {out_dir.parent}: {exc}") from None
    try:
        (tmp / "meshes").mkdir()
        (tmp / MESH_PATH).write_text(format_obj(mesh, mtllib=Path(MTL_PATH).name, material="albedo"))
        rel_tex = os.path.relpath(TEXTURE_PATH, Path(MTL_PATH).parent)
        (tmp / MTL_PATH).write_text(f"newmtl albedo\nKa 1 1 1\nKd 1 1 1\nmap_Kd {rel_tex}\n")
        write_png(tmp / TEXTURE_PATH, pixels[..., :3])
        (tmp / URDF_PATH).write_text(urdf)
        meta = _metadata(bundle, timestamp)
        (tmp / METADATA_PATH).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        if out_dir.exists():
            old = out_dir.with_name(out_dir.name + ".old-" + tmp.name[-8:])
            out_dir.rename(old)
            tmp.rename(out_dir)
            shutil.rmtree(old)
        else:
            tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    bundle.provenance = meta["provenance"]
    bundle.root = out_dir
    return bundle


def read_bundle(root):
    root = Path(root)
    try:
        meta = json.loads((root / METADATA_PATH).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read bundle metadata in {root}: {exc}") from None
    if meta.get("format") != BUNDLE_FORMAT:
        raise InputError(f"{root}: unknown bundle format {meta.get('format')!r}")
    files = meta["files"]
    for key in ("mesh", "texture", "urdf", "metadata"):
        if not (root / files[key]).is_file():
            raise InputError(f"{root}: referenced {key} file {files[key]} is missing")
    return AssetBundle(
        files["mesh"], files["texture"], files["urdf"], files["metadata"],
        PhysicalProperties.from_dict(meta["properties"]),
        InertiaTensor.from_dict(meta["inertia"]),
        ValidationReport.from_dict(meta["validation"]),
        [CheckReport.from_dict(r) for r in meta["reports"]],
        meta.get("provenance", {}),
        root=root,
    )
