"""Exit criteria. Each test carries an ``acceptance`` marker and gets a PASS/FAIL line in the summary."""
import json
import math
import time

import numpy as np
import pytest

from synthdet import _pykernels, kernels
from synthdet.ace import FULL, AceParams, ace
from synthdet.annotations import read_labels
from synthdet.cli import main
from synthdet.compositor import GenConfig, generate, image_stem, plan_dataset
from synthdet.evaluation import Detection, evaluate, evaluate_openset
from synthdet.mesh import ViewSpec, box_mesh, render_view, render_view_grid, rotate_about_vertical
from synthdet.openset import UNKNOWN, CategoryGaussian, GaussianCategoryModel, calibrate, decide, fit, mahalanobis

from conftest import _ckernels, instrumented_bboxes, make_library, make_scene, pyramid_mesh, tree_digest, write_project
from oracles import ace_oracle, map_oracle, mahalanobis_oracle
from test_evaluation import random_instance

KERNEL_MODULES = [_pykernels] + ([_ckernels] if _ckernels is not None else [])


def each_backend(monkeypatch):
    for mod in KERNEL_MODULES:
        for name in ("ace_response", "rasterize", "alpha_over"):
            monkeypatch.setattr(kernels, name, getattr(mod, name))
        yield mod.NAME


def count_outputs(ds):
    images = ds / "images"
    return len(list(images.glob("*.png"))), len(list(images.glob("*.txt")))


@pytest.mark.acceptance("dataset count arithmetic")
def test_dataset_counts(tmp_path, capsys):
    # 5 base backgrounds plus one equalized variant each = 10 scenes
    cfg = write_project(tmp_path, n_categories=3, n_scenes=5, images_per_scene=40, variants=1)
    start = time.perf_counter()
    assert main(["full-run", "--config", str(cfg)]) == 0
    elapsed = time.perf_counter() - start
    report = json.loads(capsys.readouterr().out)
    assert report["steps"]["ace-backgrounds"]["output_scenes"] == 10
    assert count_outputs(tmp_path / "dataset") == (400, 400)
    assert report["image_count"] == 400
    assert elapsed < 60.0

    # counts scale linearly in both scenes and images per scene
    for flags, expected in ((["--images-per-scene", "80"], 800), (["--images-per-scene", "4"], 40)):
        assert main(["plan", "--config", str(cfg), "--dry-run", *flags]) == 0
        assert json.loads(capsys.readouterr().out)["plans"] == expected
    lib = make_library(15, 1, (4, 4))
    scenes = [make_scene(f"s{i}", (16, 16), 3, i) for i in range(306)]
    assert len(plan_dataset(lib, scenes, GenConfig(1308, (1, 1)))) == 306 * 1308


@pytest.mark.acceptance("bbox by construction")
def test_bbox_by_construction(tmp_path):
    lib = make_library(3, 3)
    scenes = [make_scene(f"s{i}", seed=20 + i) for i in range(4)]
    plans = plan_dataset(lib, scenes, GenConfig(125, (1, 4), 0.25, seed_base=5))
    generate(plans, scenes, lib, tmp_path / "ds", workers=1)
    by_id = {s.scene_id: s for s in scenes}
    checked = mismatches = 0
    for plan in plans:
        scene = by_id[plan.scene_id]
        H, W = scene.raster.shape[:2]
        derived = instrumented_bboxes(scene, plan, lib)
        labels = read_labels(tmp_path / "ds" / "images" / f"{image_stem(plan.plan_id)}.txt")
        if len(derived) != len(labels):
            mismatches += 1
            continue
        for (cid, (x, y, w, h)), rec in zip(derived, labels):
            want = ((x + w / 2) / W, (y + h / 2) / H, w / W, h / H)
            got = (rec.cx, rec.cy, rec.w, rec.h)
            if cid != rec.category_id or max(abs(a - b) for a, b in zip(got, want)) > 1e-6:
                mismatches += 1
            checked += 1
    assert checked >= 1000
    assert mismatches == 0


@pytest.mark.acceptance("parallel determinism and speedup")
def test_parallel_determinism_and_speedup(tmp_path):
    lib = make_library(3, 3, (24, 20))
    scenes = [make_scene(f"s{i}", (160, 120), 6, seed=i) for i in range(10)]
    plans = plan_dataset(lib, scenes, GenConfig(100, (2, 4), seed_base=11))
    assert len(plans) == 1000
    times = {}
    for workers in (1, 6):
        start = time.perf_counter()
        generate(plans, scenes, lib, tmp_path / f"w{workers}", workers=workers)
        times[workers] = time.perf_counter() - start
    assert count_outputs(tmp_path / "w1") == (1000, 1000)
    assert tree_digest(tmp_path / "w1") == tree_digest(tmp_path / "w6")
    speedup = times[1] / times[6]
    print(f"workers=1 {times[1]:.2f}s, workers=6 {times[6]:.2f}s, speedup {speedup:.2f}x")
    assert speedup >= 3.0


@pytest.mark.acceptance("ACE oracle equivalence")
def test_ace_oracle(monkeypatch):
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(1, 17, 2))
        cases.append((rng.integers(0, 256, (h, w, 3)).astype(np.uint8), float(rng.uniform(1, 20))))
    expected = [[ace_oracle(img[..., c].tolist(), slope) for c in range(3)] for img, slope in cases]
    for _ in each_backend(monkeypatch):
        for (img, slope), want in zip(cases, expected):
            out = ace(img, AceParams(slope, FULL))
            assert [out[..., c].tolist() for c in range(3)] == want
            neg = ace(255 - img, AceParams(slope, FULL)).astype(int)
            assert np.abs((255 - out.astype(int)) - neg).max() <= 1
        for level in (0, 77, 255):
            flat = np.full((9, 13, 3), level, np.uint8)
            assert (ace(flat, AceParams(5.0, FULL)) == 128).all()


def single(mean, cov):
    return GaussianCategoryModel(len(mean), 0.0, {0: CategoryGaussian.from_moments(mean, cov, 10)})


@pytest.mark.acceptance("Mahalanobis correctness")
def test_mahalanobis_correctness():
    rng = np.random.default_rng(77)
    for _ in range(100):
        d = int(rng.integers(1, 6))
        a = rng.standard_normal((d, d))
        cov = a @ a.T + 0.1 * np.eye(d)
        cov = (cov + cov.T) / 2
        mean = rng.standard_normal(d) * 5
        x = rng.standard_normal(d) * 4
        want = mahalanobis_oracle(mean.tolist(), cov.tolist(), x.tolist())
        assert abs(mahalanobis(single(mean, cov), 0, x) - want) <= 1e-9 * want

    for d in range(1, 6):
        mean, x = rng.standard_normal(d), rng.standard_normal(d)
        euclid = float(np.linalg.norm(x - mean))
        assert abs(mahalanobis(single(mean, np.eye(d)), 0, x) - euclid) <= 1e-9 * euclid

    # y -> A y + b leaves distances unchanged when the model is refit on transformed data
    for _ in range(10):
        d = int(rng.integers(2, 6))
        data = rng.standard_normal((300, d)) * rng.uniform(0.5, 3, d)
        A = rng.standard_normal((d, d)) + 3 * np.eye(d)
        b = rng.standard_normal(d) * 10
        m1, m2 = fit({0: data}, 0.0), fit({0: data @ A.T + b}, 0.0)
        for y in rng.standard_normal((10, d)) * 2:
            r1 = mahalanobis(m1, 0, y)
            assert abs(mahalanobis(m2, 0, A @ y + b) - r1) <= 1e-9 * r1


@pytest.mark.acceptance("open-set calibration")
def test_openset_calibration():
    rng = np.random.default_rng(4)
    d, k, n = 4, 5, 2000
    means = [rng.uniform(-100, 100, d) for _ in range(k)]
    scales = [rng.uniform(0.5, 2.0, d) for _ in range(k)]

    def draw(c, size=n, shift=0.0):
        return means[c] + shift + rng.standard_normal((size, d)) * scales[c]

    model = fit({c: draw(c) for c in range(k)}, shrinkage=0.0)
    table = calibrate(model, {c: draw(c) for c in range(k)}, 0.99)

    decisions = []
    for c in range(k):
        decisions += [(c, decide(model, table, c, x)) for x in draw(c)]
    # the unknown cluster sits 10 sigma from category 0 along its first axis; the classifier calls it 0
    offset = np.zeros(d)
    offset[0] = 10 * scales[0][0]
    decisions += [(UNKNOWN, decide(model, table, 0, x)) for x in draw(0, shift=offset)]
    kar, udr = evaluate_openset(decisions)
    print(f"known accept {kar:.4f}, unknown detection {udr:.4f}")
    assert 0.98 <= kar <= 1.0
    assert udr >= 0.95


@pytest.mark.acceptance("mAP evaluator")
def test_map_evaluator():
    rng = np.random.default_rng(31)
    gt = {f"img{i}": [(int(rng.integers(3)), tuple(int(v) for v in rng.integers([0, 0, 1, 1], [90, 90, 30, 30])))
                      for _ in range(4)] for i in range(5)}
    perfect = [Detection(img, c, 1.0, box) for img, rows in gt.items() for c, box in rows]
    assert evaluate(perfect, gt).mAP == 1.0

    hand_gt = {"a": [(0, (0, 0, 10, 10)), (0, (50, 50, 10, 10))]}
    hand = [Detection("a", 0, 0.9, (0, 0, 10, 10)), Detection("a", 0, 0.8, (20, 20, 10, 10))]
    assert evaluate(hand, hand_gt).ap[0] == 0.5

    for seed in range(200):
        dets, truth = random_instance(np.random.default_rng(10_000 + seed))
        res = evaluate(dets, truth)
        aps, m, tp, fp, fn = map_oracle([(x.image_id, x.category_id, x.score, x.bbox) for x in dets], truth)
        assert set(res.ap) == set(aps)
        assert all(math.isclose(res.ap[c], float(aps[c]), abs_tol=1e-12) for c in aps)
        assert math.isclose(res.mAP, float(m), abs_tol=1e-12)
        assert (res.tp, res.fp, res.fn) == (tp, fp, fn)


@pytest.mark.acceptance("renderer invariants")
def test_renderer_invariants(monkeypatch):
    for _ in each_backend(monkeypatch):
        cube = render_view(box_mesh(), ViewSpec(45, 35.264, (128, 128), 0.1))
        x, y, w, h = cube.tight_bbox
        ratio = (cube.raster[..., 3] > 0).sum() / (w * h)
        assert abs(ratio - 0.75) <= 0.02

        count, view = 8, ViewSpec(0, 0, (48, 48), 0.1)
        mesh = pyramid_mesh(5)
        base = render_view_grid(mesh, None, count, [10, 40], view)
        turned = render_view_grid(rotate_about_vertical(mesh, 360 / count), None, count, [10, 40], view)
        for e in range(2):
            for a in range(count - 1):
                assert np.array_equal(turned[e * count + a].raster, base[e * count + a + 1].raster)

        color = (0.2, 0.55, 0.9)
        solid = render_view(box_mesh((1, 2, 1.5), color), ViewSpec(30, 20, (64, 64)))
        opaque = solid.raster[..., 3] > 0
        codes = [math.floor(c * 255 + 0.5) for c in color]
        assert opaque.any() and (solid.raster[opaque][:, :3] == codes).all()
