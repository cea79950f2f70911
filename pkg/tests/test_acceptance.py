"""Numbered acceptance criteria; the terminal summary lists PASS/FAIL per criterion.

Everything runs offline with identity services or local stubs.
"""

import json
import math
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from assetforge import primitives
from assetforge.bundle import write_bundle
from assetforge.cli import main
from assetforge.config import load_config
from assetforge.consistency_loss import (
    CorrespondenceSet,
    NoisePair,
    ldm_loss,
    ldm_loss_grad,
    spatial_loss,
    spatial_loss_grad,
    total_loss,
)
from assetforge.inspection import CheckReport, evaluate_checkers
from assetforge.mesh import TriangleMesh, compute_inertia, extents, validate_mesh
from assetforge.physics import PhysicalProperties, restore_scale
from assetforge.pipeline import run_asset
from assetforge.rasterizer import default_view_set, make_camera, render_color, render_geometry_buffers
from assetforge.texture_bake import BakeParams, bake_texture, compute_view_confidence
from conftest import write_asset_fixture
from oracles import TOPOLOGY_KINDS, checker, edge_multiset, monte_carlo_inertia, psnr, topology_case

pytestmark = pytest.mark.acceptance


def solid(color, size=64):
    return np.tile(np.asarray(color, float), (size, size, 1))


# 1 -------------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.criterion(1, "checker sphere round trip at 2048x2048: PSNR >= 30 dB on non-hole texels, < 60 s")
def test_round_trip_bake_fidelity():
    sphere = primitives.uv_sphere()
    assert sphere.n_faces >= 5000
    tex = checker(8, 64)  # 512 x 512
    cams = default_view_set(resolution=(1024, 1024))
    views = [render_color(sphere, c, tex) for c in cams]

    start = time.perf_counter()
    baked = bake_texture(sphere, views, cams, BakeParams(texture_size=(2048, 2048), jobs=1))
    elapsed = time.perf_counter() - start

    truth = np.repeat(np.repeat(tex, 4, axis=0), 4, axis=1)
    ok = ~baked.hole_mask
    score = psnr(baked.pixels[ok], truth[ok])
    print(f"round trip: PSNR {score:.2f} dB over {ok.sum()} texels, bake {elapsed:.1f} s")
    assert ok.sum() > 0.1 * ok.size
    assert score >= 30.0
    assert elapsed < 60.0


# 2 -------------------------------------------------------------------------

@pytest.mark.criterion(2, "single-view identity: camera-facing quad reproduces its color within 1/255 + 1e-6")
@pytest.mark.parametrize("color", [(0.3, 0.6, 0.9), (1.0, 0.0, 0.5), (0.0, 0.0, 0.0)])
def test_single_view_identity(color):
    cam = make_camera(90, 0, 2.0, 40, (128, 128))
    baked = bake_texture(primitives.quad(), [solid(color, 128)], [cam], BakeParams(texture_size=(64, 64)))
    covered = ~baked.hole_mask
    assert covered.sum() > 0.9 * covered.size
    assert np.abs(baked.pixels[covered] - color).max() <= 1 / 255 + 1e-6


# 3 -------------------------------------------------------------------------

def ring(elevation, size=96):
    return [make_camera(elevation, az, 2.0, 40, (size, size)) for az in range(0, 360, 60)]


@pytest.mark.criterion(3, "angle threshold: 75 degree inclination gives only holes, 60 degrees contributes")
def test_angle_threshold():
    quad = primitives.quad()
    params = BakeParams(texture_size=(32, 32))

    # views 15 degrees above the quad's plane: 75 degrees off its normal
    steep = bake_texture(quad, [solid((1, 0, 0), 96)] * 6, ring(15), params)
    assert steep.hole_mask.all()
    assert all(v.contributing_pixels == 0 for v in steep.views)
    assert all(v.visible_pixels > 0 for v in steep.views)

    shallow = bake_texture(quad, [solid((1, 0, 0), 96)] * 6, ring(30), params)
    assert all(v.contributing_pixels > 0 for v in shallow.views)
    assert not shallow.hole_mask.all()

    # confidence is exactly cos(angle) on visible pixels, or exactly zero
    for el, expected in ((15, 0.0), (30, math.cos(math.radians(60)))):
        buf = render_geometry_buffers(quad, make_camera(el, 0, 2.0, 40, (96, 96)))
        conf = compute_view_confidence(buf, params, 1.0, np.zeros(buf.mask.shape, bool))
        assert np.allclose(conf[buf.mask], expected, rtol=0, atol=1e-12)
        assert np.all(conf[~buf.mask] == 0)


# 4 -------------------------------------------------------------------------

@pytest.mark.criterion(4, "fusion arithmetic: weights (1,3) on 0.2/0.8 give 0.65; order and zero weights exact")
def test_fusion_arithmetic():
    cam = make_camera(90, 0, 2.0, 40, (128, 128))
    quad = primitives.quad()
    imgs = [solid((0.2,) * 3, 128), solid((0.8,) * 3, 128)]
    baked = bake_texture(quad, imgs, [cam, cam], BakeParams(texture_size=(32, 32), view_weights=[1, 3]))
    covered = ~baked.hole_mask
    assert covered.sum() > 0.9 * covered.size
    assert np.abs(baked.pixels[covered] - 0.65).max() <= 1e-6

    sphere = primitives.uv_sphere(n_lat=24, n_lon=48)
    cams = default_view_set(resolution=(96, 96))
    rng = np.random.default_rng(11)
    views = [rng.uniform(size=(96, 96, 3)) for _ in cams]
    weights = [1.0, 3.0, 0.5, 2.0, 0.25, 1.5]
    base = bake_texture(sphere, views, cams, BakeParams(texture_size=(64, 64), view_weights=weights))
    for perm in ([5, 4, 3, 2, 1, 0], [2, 0, 4, 1, 5, 3]):
        p = bake_texture(sphere, [views[i] for i in perm], [cams[i] for i in perm],
                         BakeParams(texture_size=(64, 64), view_weights=[weights[i] for i in perm]))
        assert np.array_equal(base.pixels, p.pixels) and np.array_equal(base.hole_mask, p.hole_mask)

    zeroed = bake_texture(sphere, views + [rng.uniform(size=(96, 96, 3))], cams + [cams[0]],
                          BakeParams(texture_size=(64, 64), view_weights=weights + [0.0]))
    assert np.array_equal(base.pixels, zeroed.pixels) and np.array_equal(base.hole_mask, zeroed.hole_mask)


# 5 -------------------------------------------------------------------------

@pytest.mark.criterion(5, "inertia: unit cube diag(1/6) within 1e-9; convex hulls within 2% of Monte-Carlo")
def test_unit_cube_inertia():
    it = compute_inertia(primitives.cube(), 1.0)
    assert np.abs(it.matrix - np.eye(3) / 6).max() <= 1e-9


@pytest.mark.slow
@pytest.mark.criterion(5, "inertia: unit cube diag(1/6) within 1e-9; convex hulls within 2% of Monte-Carlo")
@pytest.mark.parametrize("seed", range(5))
def test_convex_inertia_monte_carlo(seed):
    rng = np.random.default_rng(500 + seed)
    pts = rng.normal(size=(int(rng.integers(12, 60)), 3)) * rng.uniform(0.2, 2.0, size=3)
    mesh = primitives.convex_hull(pts)
    assert validate_mesh(mesh).watertight
    mass = float(rng.uniform(0.5, 5.0))
    ref, com = monte_carlo_inertia(ConvexHull(pts).equations, pts.min(0), pts.max(0), mass, n=1_000_000, seed=seed)
    it = compute_inertia(mesh, mass)
    assert np.abs(it.matrix - ref).max() <= 0.02 * np.abs(ref).max()
    # principal moments individually
    assert np.allclose(np.linalg.eigvalsh(it.matrix), np.linalg.eigvalsh(ref), rtol=0.02, atol=0)


# 6 -------------------------------------------------------------------------

@pytest.mark.criterion(6, "scale restoration: target Z extent and extent ratios within 1e-9")
def test_scale_restoration():
    rng = np.random.default_rng(6)
    for _ in range(200):
        size = rng.uniform(0.01, 10, size=3)
        height = float(rng.uniform(0.01, 10))
        mesh = primitives.transformed(primitives.box(size), translation=rng.normal(size=3))
        scaled, factor = restore_scale(mesh, height)
        before, after = extents(mesh), extents(scaled)
        assert abs(after[2] - height) <= 1e-9 * max(1.0, height)
        ratios_before = before[:, None] / before[None, :]
        ratios_after = after[:, None] / after[None, :]
        assert np.abs(ratios_after - ratios_before).max() <= 1e-9 * ratios_before.max()
        assert factor == pytest.approx(height / before[2], rel=1e-12)


# 7 -------------------------------------------------------------------------

def numeric_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def random_feature_sample(rng):
    C, H, W = (int(x) for x in rng.integers([1, 2, 2], [5, 7, 7]))
    n = int(rng.integers(1, 10))
    ref = np.stack([rng.integers(0, W, n), rng.integers(0, H, n)], axis=1)
    srch = np.stack([rng.integers(0, W, n), rng.integers(0, H, n)], axis=1)
    return rng.normal(scale=1.5, size=(C, H, W)), CorrespondenceSet(ref, srch)


@pytest.mark.criterion(7, "loss gradients match central differences (rel < 1e-4, 100 instances); total 0.402")
def test_loss_gradients_and_total():
    rng = np.random.default_rng(7)
    worst_spatial = worst_ldm = 0.0
    for _ in range(100):
        batch = [random_feature_sample(rng) for _ in range(int(rng.integers(1, 4)))]
        for (fmap, _), g in zip(batch, spatial_loss_grad(batch)):
            worst_spatial = max(worst_spatial, rel_err(g, numeric_grad(lambda: spatial_loss(batch), fmap)))
        n = int(rng.integers(1, 50))
        pair = NoisePair(rng.normal(size=n), rng.normal(size=n))
        worst_ldm = max(worst_ldm, rel_err(ldm_loss_grad(pair), numeric_grad(lambda: ldm_loss(pair), pair.predicted_noise)))
    print(f"worst relative gradient error: spatial {worst_spatial:.2e}, ldm {worst_ldm:.2e}")
    assert worst_spatial < 1e-4 and worst_ldm < 1e-4
    assert total_loss(0.4, 0.1) == pytest.approx(0.402, abs=1e-15)


# 8 -------------------------------------------------------------------------

@pytest.mark.criterion(8, "watertightness: 100 synthetic meshes agree with the edge-multiset oracle")
def test_topology_suite():
    rng = np.random.default_rng(8)
    disagreements = []
    for i in range(100):
        kind = TOPOLOGY_KINDS[i % len(TOPOLOGY_KINDS)]
        mesh = topology_case(rng, kind)
        r = validate_mesh(mesh)
        got, want = (r.watertight, r.manifold, r.boundary_edge_count), edge_multiset(mesh)
        if got != want:
            disagreements.append((i, kind, got, want))
    assert disagreements == []


# 9 -------------------------------------------------------------------------

@pytest.mark.criterion(9, "checker evaluation: TP=33 FP=15 FN=10 TN=92 gives 68.75% / 76.74%")
def test_checker_evaluation(tmp_path, capsys):
    rows = [(True, True)] * 33 + [(True, False)] * 15 + [(False, True)] * 10 + [(False, False)] * 92
    pred, label = zip(*rows)
    res = evaluate_checkers(pred, label)
    assert f"{res.precision * 100:.2f}%" == "68.75%"
    assert f"{res.recall * 100:.2f}%" == "76.74%"
    path = tmp_path / "verdicts.jsonl"
    path.write_text("".join(
        json.dumps({"asset_id": f"cup{i}", "predicted_unusable": p, "label_unusable": y}) + "\n"
        for i, (p, y) in enumerate(rows)
    ))
    assert main(["eval", str(path)]) == 0
    out = capsys.readouterr().out
    assert "precision\t68.75%" in out and "recall\t76.74%" in out


# 10 ------------------------------------------------------------------------

OVERRIDE = ["--estimator", "override", "--height", "0.3", "--mass", "1", "--friction", "0.6"]


def bundle_files(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


@pytest.mark.criterion(10, "determinism: identical histories and bundle bytes; forced failure retries with base+1")
def test_pipeline_determinism(tmp_path, capsys):
    cfg = write_asset_fixture(tmp_path / "cube")
    for out in ("run1", "run2"):
        code = main(["asset", "--config", str(cfg), "--out", str(tmp_path / out), "--base-seed", "42",
                     "--no-timestamp", *OVERRIDE])
        assert code == 0
    a, b = bundle_files(tmp_path / "run1"), bundle_files(tmp_path / "run2")
    assert a == b and "metadata.json" in a
    history = json.loads(a["metadata.json"])["provenance"]["pipeline"]
    assert history["status"] == "accepted"

    conf = load_config(cfg)
    conf["estimator"].update(mode="override", height=0.3, mass=1.0, friction=0.6)
    conf.update(base_seed=42, timestamp=False)
    conf["output"] = str(tmp_path / "direct1")
    run1, _ = run_asset(conf)
    conf["output"] = str(tmp_path / "direct2")
    run2, _ = run_asset(conf)
    assert run1.history() == run2.history() == history

    calls = []

    def fail_first(out):
        calls.append(1)
        if len(calls) == 1:
            return CheckReport("forced", False, None, ["forced first-attempt failure"])
        return CheckReport("forced", True)

    conf["output"] = str(tmp_path / "forced")
    run, bundle = run_asset(conf, extra_checkers={"texture": [fail_first]})
    assert run.status == "accepted" and bundle is not None
    assert [att.seed for att in run.attempts["texture"]] == [42, 43]
    assert [att.seed for att in run.attempts["geometry"]] == [42]


# 11 ------------------------------------------------------------------------

def urdf_cases():
    rng = np.random.default_rng(11)
    yield "cube", primitives.cube(), 1.2
    yield "sphere", primitives.uv_sphere(n_lat=16, n_lon=32), 0.4
    rot = primitives.rotation_matrix((1, 2, 3), 41)
    yield "rotated box", primitives.transformed(primitives.box((0.2, 0.5, 1.3)), rot, (0.3, -0.1, 2.0)), 7.5
    for i in range(3):
        hull = primitives.convex_hull(rng.normal(size=(30, 3)))
        lo, hi = hull.vertices.min(0), hull.vertices.max(0)
        uvs = (hull.vertices[:, :2] - lo[:2]) / (hi[:2] - lo[:2])  # planar projection is enough here
        yield f"hull {i}", TriangleMesh(hull.vertices, hull.faces, uvs), float(rng.uniform(0.1, 10))


@pytest.mark.criterion(11, "URDF validity: strict XML parse and inertia entries equal compute_inertia")
@pytest.mark.parametrize("name,mesh,mass", list(urdf_cases()), ids=lambda x: x if isinstance(x, str) else "")
def test_urdf_validity(tmp_path, name, mesh, mass):
    inertia = compute_inertia(mesh, mass)
    props = PhysicalProperties(float(extents(mesh)[2]), mass, 0.5, "test object")
    write_bundle(mesh, solid((0.5, 0.5, 0.5), 8), props, inertia, [CheckReport("geometry", True)], tmp_path / "b")
    text = (tmp_path / "b" / "asset.urdf").read_bytes()
    root = ET.fromstring(text, parser=ET.XMLParser())
    assert root.tag == "robot"
    inertial = root.find("link/inertial")
    assert float(inertial.find("mass").get("value")) == mass
    entries = {k: float(v) for k, v in inertial.find("inertia").attrib.items()}
    assert entries == inertia.unique_entries()
    origin = [float(x) for x in inertial.find("origin").get("xyz").split()]
    assert origin == list(inertia.center_of_mass)
