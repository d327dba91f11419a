"""Command-line entry point: ``synthdet <subcommand> [--config FILE] [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from PIL import Image

from . import kernels
from .ace import equalize_backgrounds
from .annotations import read_classes, read_image_list, read_labels
from .compositor import generate, load_plans, plan_dataset, save_plans
from .config import PipelineConfig, load_config
from .errors import ConfigError, SynthDetError
from .evaluation import evaluate, evaluate_openset, format_label, read_decisions, read_detections
from .mesh import load_mesh, render_view_grid, write_sprites
from .openset import (GaussianCategoryModel, ThresholdTable, calibrate, decide, fit, group_features,
                      load_json, read_features, save_json)
from .scenes import load_rgb, load_scenes, save_scenes
from .sprites import despeckle, key_background, load_library, save_rgba, write_manifest

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)

    def add_argument(self, *names, **kw):
        # config-override dests look like "o_gen.seed_base"; show "SEED_BASE" in help
        dest = kw.get("dest", "")
        if dest.startswith("o_") and "metavar" not in kw and kw.get("action") is None:
            kw["metavar"] = dest.rsplit(".", 1)[-1].removeprefix("o_").upper()
        return super().add_argument(*names, **kw)


def _int_pair(text):
    lo, hi = text.split(",")
    return [int(lo), int(hi)]


def _floats(text):
    return [float(t) for t in text.split(",") if t]


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True))


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} not given")
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


# subcommand bodies ---------------------------------------------------------

def do_render_views(cfg: PipelineConfig, args) -> dict:
    if not cfg.objects:
        raise ConfigError("no objects configured (use 'objects' in the config or --mesh)")
    out_dir = cfg.sprite_dir
    if out_dir.exists():
        shutil.rmtree(out_dir)
    entries = []
    names = [o.name for o in cfg.objects]
    for cid, obj in enumerate(cfg.objects):
        upright = load_mesh(obj.upright)
        flipped = load_mesh(obj.flipped) if obj.flipped else None
        sprites = render_view_grid(upright, flipped, cfg.azimuth_count, cfg.elevations, cfg.view, cid)
        for sprite, name in write_sprites(sprites, obj.name, cfg.azimuth_count, out_dir):
            entries.append((cid, sprite.variant, sprite.view_index, name))
    write_manifest(cfg.manifest_path, names, entries)
    return {"categories": len(names), "sprites": len(entries), "manifest": str(cfg.manifest_path)}


def do_key(cfg, args) -> dict:
    src = _require(args.input, "input image")
    raster = key_background(load_rgb(src), args.key_color, args.tolerance)
    if args.despeckle:
        raster = despeckle(raster, args.despeckle)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    save_rgba(raster, args.output)
    return {"output": str(args.output), "opaque_pixels": int((raster[..., 3] > 0).sum())}


def do_ace(cfg: PipelineConfig, args) -> dict:
    scenes = load_scenes(_require(cfg.scenes_dir, "scenes directory"))
    out = equalize_backgrounds(scenes, cfg.ace_variants, cfg.ace)
    if cfg.equalized_dir.exists():
        shutil.rmtree(cfg.equalized_dir)
    save_scenes(out, cfg.equalized_dir)
    return {"input_scenes": len(scenes), "output_scenes": len(out), "seed": cfg.ace.seed,
            "out_dir": str(cfg.equalized_dir)}


def _plan_scenes_dir(cfg: PipelineConfig, args) -> Path:
    if args.scenes_dir is not None:
        return _require(args.scenes_dir, "scenes directory")
    if cfg.equalized_dir.is_dir():
        return cfg.equalized_dir
    return _require(cfg.scenes_dir, "scenes directory")


def _manifest(cfg, args) -> Path:
    return _require(getattr(args, "manifest", None) or cfg.manifest_path, "sprite manifest")


def do_plan(cfg: PipelineConfig, args) -> dict:
    library = load_library(_manifest(cfg, args))
    scenes = load_scenes(_plan_scenes_dir(cfg, args))
    plans = plan_dataset(library, scenes, cfg.gen)
    report = {"plans": len(plans), "placements": sum(len(p.placements) for p in plans),
              "scenes": len(scenes), "seed_base": cfg.gen.seed_base}
    if not args.dry_run:
        cfg.plans_path.parent.mkdir(parents=True, exist_ok=True)
        save_plans(plans, cfg.plans_path)
        report["plans_path"] = str(cfg.plans_path)
    return report


def do_generate(cfg: PipelineConfig, args) -> dict:
    library = load_library(_manifest(cfg, args))
    scenes = load_scenes(_plan_scenes_dir(cfg, args))
    plans_path = getattr(args, "plans", None) or cfg.plans_path
    plans = load_plans(plans_path) if plans_path.is_file() else plan_dataset(library, scenes, cfg.gen)
    if args.dry_run:
        return {"image_count": len(plans), "label_count": len(plans),
                "placements": sum(len(p.placements) for p in plans), "seed_base": cfg.gen.seed_base}
    report = generate(plans, scenes, library, cfg.output_dir, cfg.workers, cfg.gen.min_visibility,
                      cfg.gen.resize, seed_base=cfg.gen.seed_base)
    out = report.to_json()
    out["backend"] = kernels.BACKEND
    return out


def do_fit(cfg: PipelineConfig, args) -> dict:
    _, rows = read_features(_require(args.features, "feature file"))
    model = fit(group_features(rows), cfg.shrinkage)
    save_json(model.to_json(), args.out)
    return {"categories": len(model.categories), "dim": model.dim, "shrinkage": model.shrinkage,
            "model": str(args.out)}


def do_calibrate(cfg: PipelineConfig, args) -> dict:
    model = GaussianCategoryModel.from_json(load_json(_require(args.model, "model file")))
    _, rows = read_features(_require(args.features, "feature file"))
    table = calibrate(model, group_features(rows), cfg.quantile)
    save_json(table.to_json(), args.out)
    return {"thresholds": {str(k): v for k, v in table.thresholds.items()}, "quantile": table.quantile}


def do_score(cfg, args) -> dict:
    model = GaussianCategoryModel.from_json(load_json(_require(args.model, "model file")))
    table = ThresholdTable.from_json(load_json(_require(args.thresholds, "threshold file")))
    _, rows = read_features(_require(args.features, "feature file"))
    lines = []
    n_unknown = 0
    for predicted, vec in rows:
        decided = decide(model, table, predicted, vec)
        n_unknown += decided != predicted
        lines.append(f"{format_label(predicted)} {format_label(decided)}\n")
    Path(args.out).write_text("".join(lines), encoding="utf-8")
    return {"scored": len(rows), "marked_unknown": n_unknown, "decisions": str(args.out)}


def load_ground_truth(dataset: Path) -> dict:
    """``image_id -> [(category_id, pixel bbox)]`` from a generated dataset directory."""
    gt = {}
    for rel in read_image_list(dataset / "train.txt"):
        img = dataset / rel
        with Image.open(img) as im:
            size = im.size
        gt[img.stem] = [(r.category_id, r.to_pixels(size)) for r in read_labels(img.with_suffix(".txt"))]
    return gt


def do_eval(cfg, args) -> dict:
    out: dict = {}
    if args.detections is None and args.decisions is None:
        raise ConfigError("eval needs --detections and/or --decisions")
    if args.detections is not None:
        dataset = _require(args.dataset or cfg.output_dir, "dataset directory")
        result = evaluate(read_detections(_require(args.detections, "detections file")),
                          load_ground_truth(dataset), args.iou)
        names = read_classes(dataset / "classes.txt") if (dataset / "classes.txt").is_file() else None
        print(result.table(names), file=sys.stderr)
        out.update(result.to_json())
    if args.decisions is not None:
        kar, udr = evaluate_openset(read_decisions(_require(args.decisions, "decisions file")))
        out.update(known_accept_rate=kar, unknown_detection_rate=udr)
    if args.json:
        Path(args.json).write_text(json.dumps(out, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def do_full_run(cfg: PipelineConfig, args) -> dict:
    steps = {"render-views": do_render_views(cfg, args), "ace-backgrounds": do_ace(cfg, args)}
    args.scenes_dir = cfg.equalized_dir
    steps["plan"] = do_plan(cfg, args)
    args.plans = cfg.plans_path
    steps["generate"] = do_generate(cfg, args)
    return steps["generate"] | {"steps": {k: v for k, v in steps.items() if k != "generate"}}


COMMANDS = {
    "render-views": do_render_views, "key": do_key, "ace-backgrounds": do_ace, "plan": do_plan,
    "generate": do_generate, "fit-openset": do_fit, "calibrate": do_calibrate, "score": do_score,
    "eval": do_eval, "full-run": do_full_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="pipeline JSON config")
        p.add_argument("--work-dir", dest="o_work_dir")
        return p

    p = add("render-views", "render sprite view grids from meshes")
    p.add_argument("--mesh", action="append", default=[], metavar="NAME=UPRIGHT[,FLIPPED]")
    p.add_argument("--azimuths", dest="o_views.azimuth_count", type=int)
    p.add_argument("--elevations", dest="o_views.elevations", type=_floats)
    p.add_argument("--size", dest="o_views.image_size", type=_int_pair, metavar="W,H")

    p = add("key", "cut an object out of a photo by background color")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("--key-color", type=lambda t: [int(v) for v in t.split(",")], default=[255, 255, 255])
    p.add_argument("--tolerance", type=float, default=0.0)
    p.add_argument("--despeckle", type=int, default=0, metavar="MIN_PIXELS")

    p = add("ace-backgrounds", "add ACE lighting variants of every background")
    p.add_argument("--scenes-dir", dest="o_scenes_dir")
    p.add_argument("--variants", dest="o_ace.variants_per_background", type=int)
    p.add_argument("--slope", dest="o_ace.slope", type=float)
    p.add_argument("--samples", dest="o_ace.sample_count")
    p.add_argument("--seed", dest="o_ace.seed", type=int)

    for name, help_text in (("plan", "draw placement plans"), ("generate", "compose images and labels"),
                            ("full-run", "render-views -> ace-backgrounds -> plan -> generate")):
        p = add(name, help_text)
        if name != "full-run":
            p.add_argument("--manifest", type=Path)
            p.add_argument("--scenes-dir", type=Path)
        p.add_argument("--images-per-scene", dest="o_gen.images_per_scene", type=int)
        p.add_argument("--objects", dest="o_gen.objects_per_image_range", type=_int_pair, metavar="MIN,MAX")
        p.add_argument("--min-visibility", dest="o_gen.min_visibility", type=float)
        p.add_argument("--seed-base", dest="o_gen.seed_base", type=int)
        p.add_argument("--workers", dest="o_workers", type=int)
        p.add_argument("--output-dir", dest="o_output_dir")
        p.add_argument("--dry-run", action="store_true")
        if name == "generate":
            p.add_argument("--plans", type=Path)

    p = add("fit-openset", "fit per-category Gaussians to embeddings")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--shrinkage", dest="o_openset.shrinkage", type=float)

    p = add("calibrate", "per-category thresholds from held-out embeddings")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--quantile", dest="o_openset.quantile", type=float)

    p = add("score", "replace predictions with 'unknown' beyond the threshold")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--thresholds", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True, help="feature file; category column = prediction")
    p.add_argument("--out", type=Path, required=True)

    p = add("eval", "mAP of detections and/or open-set rates")
    p.add_argument("--dataset", type=Path)
    p.add_argument("--detections", type=Path)
    p.add_argument("--decisions", type=Path)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--json", type=Path)
    return parser


def _overrides(args) -> dict:
    out = {k[2:]: v for k, v in vars(args).items() if k.startswith("o_")}
    if getattr(args, "mesh", None):
        objects = []
        for item in args.mesh:
            name, _, paths = item.partition("=")
            upright, _, flipped = paths.partition(",")
            if not name or not upright:
                raise ConfigError(f"bad --mesh {item!r}; expected NAME=UPRIGHT[,FLIPPED]")
            objects.append({"name": name, "upright": str(Path(upright).resolve()),
                            "flipped": str(Path(flipped).resolve()) if flipped else None})
        out["objects"] = objects
    for key in ("work_dir", "output_dir", "scenes_dir"):
        if out.get(key) is not None:
            out[key] = str(Path(out[key]).resolve())
    samples = out.get("ace.sample_count")
    if samples is not None and samples != "full":
        out["ace.sample_count"] = int(samples)
    return out


def run_subcommand(name: str, argv) -> int:
    return main([name, *argv])


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config, _overrides(args)).validate()
        result = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"synthdet: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SynthDetError, OSError) as exc:
        print(f"synthdet: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _emit(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
