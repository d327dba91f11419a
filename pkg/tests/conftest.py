import hashlib
from pathlib import Path

import numpy as np
import pytest

from synthdet import _pykernels, kernels
from synthdet.mesh import TriangleMesh, box_mesh, save_mesh
from synthdet.scenes import AnchorPoint, BackgroundScene, save_scenes
from synthdet.compositor import PlacementPlan, compose
from synthdet.sprites import SpriteLibrary, SpriteView

from oracles import scan_bbox

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion, reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when == "call":
        _ACCEPTANCE.append((marker.args[0], report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")


BACKENDS = ["python"]
try:
    from synthdet import _ckernels

    BACKENDS.append("cython")
except ImportError:  # pragma: no cover - extension not built
    _ckernels = None


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = _pykernels if request.param == "python" else _ckernels
    for name in ("ace_response", "rasterize", "alpha_over"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


def pyramid_mesh(color_seed=0):
    """Square pyramid with per-vertex colors; asymmetric enough to show rotation."""
    rng = np.random.default_rng(color_seed)
    verts = np.array([[-1, 0, -1], [1, 0, -1], [1, 0, 1], [-1, 0, 1], [0.3, 1.6, 0.1]], float)
    faces = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [0, 2, 1], [0, 3, 2]])
    return TriangleMesh(verts * 40.0, faces, rng.uniform(0, 1, (5, 3)))


def make_library(n_categories=2, views=3, size=(12, 10)):
    sprites = []
    for cid in range(n_categories):
        for k in range(views):
            w, h = size[0] + 2 * k, size[1] + k
            raster = np.zeros((h + 4, w + 4, 4), np.uint8)
            raster[2:2 + h, 2:2 + w, :3] = ((40 * cid + 30) % 256, 100, 200 - 10 * k)
            raster[2:2 + h, 2:2 + w, 3] = 255
            raster[2, 2, 3] = 0  # corner notch: support is not a full rectangle
            sprites.append(SpriteView(cid, "upright", k, raster))
    return SpriteLibrary([f"obj{c}" for c in range(n_categories)], sprites)


def make_scene(scene_id="s0", size=(96, 72), n_anchors=5, seed=0):
    rng = np.random.default_rng(seed)
    w, h = size
    yy, xx = np.mgrid[0:h, 0:w]
    raster = np.dstack([(xx * 255 // w), (yy * 255 // h), rng.integers(0, 256, (h, w))]).astype(np.uint8)
    anchors = []
    for i in range(n_anchors):
        # first anchor sits on the edge so some placements get clipped
        x = 0 if i == 0 else int(rng.integers(0, w))
        anchors.append(AnchorPoint(x, int(rng.integers(0, h)), 30, 24, 0.8, 1.6))
    return BackgroundScene(scene_id, raster, anchors)


def instrumented_bboxes(scene, plan, library, min_visibility=0.25):
    """Compose each placement alone onto black with white sprites; scan the result."""
    white = []
    for s in library:
        r = s.raster.copy()
        r[..., :3] = np.where(r[..., 3:4] > 0, 255, 0)
        white.append(SpriteView(s.category_id, s.variant, s.view_index, r))
    wlib = SpriteLibrary(library.categories, white)
    dark = BackgroundScene(scene.scene_id, np.zeros_like(scene.raster), scene.anchors)
    out = []
    for p in plan.placements:
        img, _ = compose(dark, PlacementPlan(plan.plan_id, scene.scene_id, (p,)), wlib, min_visibility)
        box = scan_bbox((img[..., 0] > 0).tolist())
        if box is not None:
            out.append((p.category_id, box))
    return out


def tree_digest(root):
    h = hashlib.sha256()
    root = Path(root)
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def write_project(tmp_path, n_categories=2, n_scenes=2, images_per_scene=5, variants=0,
                  azimuths=4, elevations=(20.0,), workers=1, objects=(1, 3)):
    """Meshes, backgrounds and a JSON config for CLI runs; returns the config path."""
    import json

    mesh_dir = tmp_path / "meshes"
    mesh_dir.mkdir()
    objects_cfg = []
    for c in range(n_categories):
        up = mesh_dir / f"obj{c}.mesh"
        fl = mesh_dir / f"obj{c}_flipped.mesh"
        save_mesh(box_mesh((1.0 + c, 1.5, 0.8), color=(0.2 * c, 0.6, 0.9)), up)
        save_mesh(pyramid_mesh(c), fl)
        objects_cfg.append({"name": f"obj{c}", "upright": f"meshes/{up.name}",
                            "flipped": f"meshes/{fl.name}"})
    save_scenes([make_scene(f"bg{i:02d}", seed=i) for i in range(n_scenes)], tmp_path / "backgrounds")
    cfg = {
        "objects": objects_cfg,
        "scenes_dir": "backgrounds",
        "work_dir": "work",
        "output_dir": "dataset",
        "views": {"azimuth_count": azimuths, "elevations": list(elevations), "image_size": [32, 32],
                  "fit_margin": 0.05},
        "ace": {"slope": 5.0, "sample_count": 64, "seed": 7, "variants_per_background": variants},
        "gen": {"images_per_scene": images_per_scene, "objects_per_image_range": list(objects),
                "min_visibility": 0.25, "seed_base": 1000},
        "workers": workers,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path
