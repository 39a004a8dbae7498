"""Command-line entry point for the canopy-height pipeline.

Every subcommand is deterministic given identical inputs, flags, and seed,
and writes a provenance record (config hash, input digests, tool version)
next to its main artifact.  Reports are JSON, tables are CSV with
documented headers.  Exit codes: 0 success, 2 usage error, 3 input error,
4 numerical failure.

Defaults can be collected in a YAML config file (``--config``); explicit
flags always win over config values.  The config schema mirrors the
subcommand flags::

    paths:       scene_manifest, shots, elevation, output_dir
    mask:        min_cloud_free_fraction, cloud_prob_threshold,
                 shadow_search_distance, dilation_radius,
                 dark_pixel_nir_threshold, dark_scl_classes, nir_band_role
    gedi_filter: require_power_beam, require_quality, require_night
    slope:       threshold_deg
    loss:        radius, pixel_loss, huber_delta, min_track_size_for_shift
    split:       ratios, seed
    eval:        filter_label_gt

Unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from datetime import datetime
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .composite import (
    MaskParams, load_scene_manifest, mask_scene, median_composite,
    s1_four_channel, scene_admissible,
)
from .errors import CanopykitError, InputError, NumericalError, UsageError
from .evaluate import PairSet, bin_errors, compute_metrics, read_pairs, scatter_summary
from .gedi import (
    GediFilterConfig, SparseLabels, filter_shots, group_tracks, label_stats,
    rasterize_tracks, read_labels, read_shots, write_labels, write_shots,
)
from .raster import GeoRef, MultiBandRaster, read_raster, write_raster
from .sampler import DEFAULT_RATIOS, assign_split, compute_weights
from .shiftloss import PixelLoss, ShiftLossConfig, loss_ns, loss_s, loss_s_grad
from .synth import write_fixture_set
from .terrain import DEFAULT_SLOPE_THRESHOLD_DEG, filter_by_slope, slope_5x5
from .tiler import (
    DEFAULT_CONTEXT_MARGIN, DEFAULT_CORE_SIZE, TilePlan,
    constant_predictor, identity_band_predictor, linear_predictor,
    plan_tiles, predict_mosaic,
)

CONFIG_SCHEMA = {
    "paths": {"scene_manifest", "shots", "elevation", "output_dir"},
    "mask": {
        "min_cloud_free_fraction", "cloud_prob_threshold", "shadow_search_distance",
        "dilation_radius", "dark_pixel_nir_threshold", "dark_scl_classes", "nir_band_role",
    },
    "gedi_filter": {"require_power_beam", "require_quality", "require_night"},
    "slope": {"threshold_deg"},
    "loss": {"radius", "pixel_loss", "huber_delta", "min_track_size_for_shift"},
    "split": {"ratios", "seed"},
    "eval": {"filter_label_gt"},
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    with open(p) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise UsageError(f"config root must be a mapping, got {type(data).__name__}")
    for section, keys in data.items():
        if section not in CONFIG_SCHEMA:
            raise UsageError(f"unknown config section {section!r}")
        if not isinstance(keys, dict):
            raise UsageError(f"config section {section!r} must be a mapping")
        unknown = set(keys) - CONFIG_SCHEMA[section]
        if unknown:
            raise UsageError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    return data


def _cfg(config: dict, section: str, key: str, fallback):
    return config.get(section, {}).get(key, fallback)


def _pick(flag_value, config: dict, section: str, key: str, default):
    """Resolve flag > config > default."""
    if flag_value is not None:
        return flag_value
    return _cfg(config, section, key, default)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_provenance(anchor: Path, command: str, params: dict, inputs: list, outputs: list) -> None:
    """Deterministic provenance record next to the main artifact."""
    record = {
        "command": command,
        "version": __version__,
        "config_sha256": hashlib.sha256(
            json.dumps(params, sort_keys=True, default=str).encode()
        ).hexdigest(),
        "parameters": params,
        "inputs": {str(p): _sha256(Path(p)) for p in inputs},
        "outputs": [str(p) for p in outputs],
    }
    prov_path = anchor.with_name(anchor.name + ".prov.json") if anchor.suffix else anchor / "provenance.json"
    with open(prov_path, "w") as fh:
        json.dump(record, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")


def _dump_json(data: dict, path: str | None) -> None:
    text = json.dumps(data, indent=1, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"missing required option {flag}")
    return value


# --- synth ---------------------------------------------------------------

def cmd_synth(args) -> int:
    out = Path(args.output)
    meta = write_fixture_set(
        out, seed=args.seed, size=args.size, n_bands=args.bands,
        n_tracks=args.tracks, pred_noise=args.pred_noise, junk_fraction=args.junk,
    )
    params = {k: meta[k] for k in ("seed", "size", "n_bands", "pred_noise")}
    _write_provenance(out, "synth", params, [], sorted(p.name for p in out.iterdir()))
    print(json.dumps({"output": str(out), "tracks": len(meta["tracks"])}))
    return 0


# --- composite -----------------------------------------------------------

def cmd_composite(args) -> int:
    config = _load_config(args.config)
    manifest = _require(_pick(args.manifest, config, "paths", "scene_manifest", None), "--manifest")
    start = datetime.fromisoformat(args.start) if args.start else None
    end = datetime.fromisoformat(args.end) if args.end else None
    scenes = load_scene_manifest(manifest, start=start, end=end)
    if not scenes:
        raise InputError("no scenes selected from manifest (check date window)")

    if args.mode == "s1":
        result = s1_four_channel(scenes)
        summary = {"mode": "s1", "scenes": len(scenes)}
        params = {"mode": "s1", "start": args.start, "end": args.end}
    else:
        mask_params = MaskParams(
            min_cloud_free_fraction=_pick(args.min_cloud_free, config, "mask", "min_cloud_free_fraction", 0.10),
            cloud_prob_threshold=_pick(args.cloud_prob_threshold, config, "mask", "cloud_prob_threshold", 30.0),
            shadow_search_distance=_pick(None, config, "mask", "shadow_search_distance", 1000.0),
            dilation_radius=_pick(args.dilation_radius, config, "mask", "dilation_radius", 300.0),
            dark_pixel_nir_threshold=_pick(None, config, "mask", "dark_pixel_nir_threshold", 0.15),
            dark_scl_classes=frozenset(_cfg(config, "mask", "dark_scl_classes", [2, 3])),
            nir_band_role=_cfg(config, "mask", "nir_band_role", "B8"),
        )
        admissible = [s for s in scenes if scene_admissible(s, mask_params)]
        if not admissible:
            raise InputError(f"all {len(scenes)} scenes rejected by the cloud-free admission check")
        masks = [mask_scene(s, mask_params) for s in admissible]
        result = median_composite(admissible, masks)
        summary = {
            "mode": "s2",
            "scenes": len(scenes),
            "admissible": len(admissible),
            "valid_fraction": round(float(result.valid.mean()), 6),
        }
        params = {
            "mode": "s2", "start": args.start, "end": args.end,
            "min_cloud_free_fraction": mask_params.min_cloud_free_fraction,
            "cloud_prob_threshold": mask_params.cloud_prob_threshold,
            "shadow_search_distance": mask_params.shadow_search_distance,
            "dilation_radius": mask_params.dilation_radius,
            "dark_pixel_nir_threshold": mask_params.dark_pixel_nir_threshold,
            "dark_scl_classes": sorted(mask_params.dark_scl_classes),
        }

    out = Path(args.output)
    write_raster(result, out)
    _write_provenance(out, "composite", params, [manifest], [out])
    print(json.dumps(summary, sort_keys=True))
    return 0


# --- gedi-filter ---------------------------------------------------------

def cmd_gedi_filter(args) -> int:
    config = _load_config(args.config)
    cfg = GediFilterConfig(
        require_power_beam=not args.keep_coverage_beams
        and _cfg(config, "gedi_filter", "require_power_beam", True),
        require_quality=not args.keep_low_quality
        and _cfg(config, "gedi_filter", "require_quality", True),
        require_night=not args.keep_daytime
        and _cfg(config, "gedi_filter", "require_night", True),
    )
    shots = read_shots(_require(_pick(args.shots, config, "paths", "shots", None), "--shots"))
    kept = filter_shots(shots, cfg)
    write_shots(kept, args.output)
    _write_provenance(
        Path(args.output), "gedi-filter",
        {"require_power_beam": cfg.require_power_beam, "require_quality": cfg.require_quality,
         "require_night": cfg.require_night},
        [args.shots], [args.output],
    )
    print(json.dumps({"read": len(shots), "kept": len(kept)}))
    return 0


# --- slope-filter --------------------------------------------------------

def cmd_slope_filter(args) -> int:
    config = _load_config(args.config)
    elevation_path = _require(_pick(args.elevation, config, "paths", "elevation", None), "--elevation")
    threshold = _pick(args.threshold, config, "slope", "threshold_deg", DEFAULT_SLOPE_THRESHOLD_DEG)
    shots = read_shots(_require(args.shots, "--shots"))
    slope = slope_5x5(read_raster(elevation_path))
    kept, n_unknown = filter_by_slope(shots, slope, threshold)
    write_shots(kept, args.output)
    outputs = [args.output]
    if args.slope_out:
        write_raster(slope, args.slope_out)
        outputs.append(args.slope_out)
    _write_provenance(
        Path(args.output), "slope-filter", {"threshold_deg": threshold},
        [args.shots, elevation_path], outputs,
    )
    print(json.dumps({"read": len(shots), "kept": len(kept), "unknown_slope": n_unknown}))
    return 0


# --- rasterize -----------------------------------------------------------

def cmd_rasterize(args) -> int:
    shots = read_shots(_require(args.shots, "--shots"))
    if args.like:
        reference = read_raster(args.like)
        georef, width, height = reference.georef, reference.width, reference.height
    else:
        for flag in ("width", "height", "pixel_size"):
            _require(getattr(args, flag), f"--{flag.replace('_', '-')}")
        georef = GeoRef(args.origin_x, args.origin_y, args.pixel_size)
        width, height = args.width, args.height
    labels = rasterize_tracks(group_tracks(shots), georef, width, height)
    write_labels(labels, args.output)
    stats = label_stats(labels)
    _write_provenance(
        Path(args.output), "rasterize",
        {"width": width, "height": height, "pixel_size": georef.pixel_size,
         "origin": [georef.origin_x, georef.origin_y]},
        [args.shots] + ([args.like] if args.like else []), [args.output],
    )
    print(json.dumps({"tracks": len(labels.tracks), "measurements": stats["count"]}))
    return 0


# --- split ---------------------------------------------------------------

def cmd_split(args) -> int:
    config = _load_config(args.config)
    ratios = args.ratios or _cfg(config, "split", "ratios", list(DEFAULT_RATIOS))
    if isinstance(ratios, str):
        ratios = [float(r) for r in ratios.split(",")]
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise UsageError(f"--ratios needs three comma-separated values, got {ratios}")
    seed = _pick(args.seed, config, "split", "seed", 0)

    tiles_path = Path(_require(args.tiles, "--tiles"))
    if not tiles_path.exists():
        raise InputError(f"tile list not found: {tiles_path}")
    tile_ids = [line.strip() for line in tiles_path.read_text().splitlines() if line.strip()]
    try:
        assignments = [(t, assign_split(t, ratios, seed)) for t in tile_ids]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tile_id", "split"])
        writer.writerows(assignments)
    outputs = [args.output]

    if args.patch_stats:
        stats_path = Path(args.patch_stats)
        if not stats_path.exists():
            raise InputError(f"patch stats not found: {stats_path}")
        patch_stats = []
        with open(stats_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or not {"patch_id", "mean_height"} <= set(reader.fieldnames):
                raise InputError(f"{stats_path.name} needs 'patch_id' and 'mean_height' columns")
            for row in reader:
                patch_stats.append((row["patch_id"], float(row["mean_height"])))
        weights = compute_weights(patch_stats, bin_width=args.bin_width)
        weights_out = args.weights_out or str(Path(args.output).with_name("weights.csv"))
        with open(weights_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["patch_id", "weight"])
            writer.writerows((w.patch_id, repr(w.weight)) for w in weights)
        outputs.append(weights_out)

    counts = {name: sum(1 for _, s in assignments if s == name) for name in ("train", "val", "test")}
    _write_provenance(
        Path(args.output), "split", {"ratios": list(ratios), "seed": seed},
        [str(tiles_path)] + ([args.patch_stats] if args.patch_stats else []), outputs,
    )
    print(json.dumps(counts, sort_keys=True))
    return 0


# --- loss ----------------------------------------------------------------

def _loss_config(args, config: dict) -> ShiftLossConfig:
    kind = _pick(args.pixel_loss, config, "loss", "pixel_loss", "huber")
    delta = _pick(args.delta, config, "loss", "huber_delta", 3.0)
    try:
        pixel = PixelLoss(kind, delta)
        return ShiftLossConfig(
            radius=_pick(args.radius, config, "loss", "radius", math.sqrt(2.0)),
            pixel_loss=pixel,
            min_track_size_for_shift=_pick(
                args.min_track_size, config, "loss", "min_track_size_for_shift", 10
            ),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _run_instances(args, cfg: ShiftLossConfig) -> int:
    """Batch mode: one JSON instance per input line, one report per output line."""
    in_path = Path(args.instances)
    if not in_path.exists():
        raise InputError(f"instance file not found: {in_path}")
    out_lines = []
    with open(in_path) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                instance = json.loads(line)
                pred = np.asarray(instance["pred"], dtype=np.float64)
                labels = SparseLabels.from_dict(instance["labels"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{in_path.name}:{line_no}: bad instance ({exc})") from exc
            icfg = ShiftLossConfig(
                radius=float(instance.get("radius", cfg.radius)),
                pixel_loss=PixelLoss(
                    instance.get("pixel_loss", cfg.pixel_loss.kind),
                    float(instance.get("huber_delta", cfg.pixel_loss.delta)),
                ),
                min_track_size_for_shift=int(
                    instance.get("min_track_size", cfg.min_track_size_for_shift)
                ),
            )
            if args.mode == "non-shifted":
                report = loss_ns(pred, labels, icfg.pixel_loss)
            elif args.with_gradient:
                report = loss_s_grad(pred, labels, icfg)
            else:
                report = loss_s(pred, labels, icfg)
            record = report.to_dict()
            if args.with_gradient and report.gradient is not None:
                record["gradient"] = report.gradient.tolist()
            out_lines.append(json.dumps(record, sort_keys=True))
    text = "\n".join(out_lines) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_loss(args) -> int:
    config = _load_config(args.config)
    cfg = _loss_config(args, config)
    if args.instances:
        return _run_instances(args, cfg)

    pred_raster = read_raster(_require(args.pred, "--pred"))
    labels = read_labels(_require(args.labels, "--labels"))
    pred = pred_raster.band(0).astype(np.float64)
    if args.mode == "non-shifted":
        report = loss_ns(pred, labels, cfg.pixel_loss)
    elif args.grad_out:
        report = loss_s_grad(pred, labels, cfg)
    else:
        report = loss_s(pred, labels, cfg)
    if not math.isfinite(report.value):
        raise NumericalError(f"loss value is not finite: {report.value}")

    record = report.to_dict()
    record["mode"] = args.mode
    record["radius"] = cfg.radius if args.mode == "shifted" else 0.0
    record["pixel_loss"] = {"kind": cfg.pixel_loss.kind, "delta": cfg.pixel_loss.delta}
    outputs = [args.output] if args.output else []
    if args.grad_out:
        write_raster(
            MultiBandRaster(report.gradient.astype(np.float32), None, pred_raster.georef),
            args.grad_out,
        )
        outputs.append(args.grad_out)
    _dump_json(record, args.output)
    if args.output:
        _write_provenance(
            Path(args.output), "loss",
            {"mode": args.mode, "radius": cfg.radius, "pixel_loss": cfg.pixel_loss.kind,
             "delta": cfg.pixel_loss.delta, "min_track_size": cfg.min_track_size_for_shift},
            [args.pred, args.labels], outputs,
        )
    return 0


# --- eval ----------------------------------------------------------------

def cmd_eval(args) -> int:
    config = _load_config(args.config)
    if args.pairs:
        pairs = read_pairs(args.pairs)
        inputs = [args.pairs]
    else:
        pred = read_raster(_require(args.pred, "--pred (or --pairs)"))
        labels = read_labels(_require(args.labels, "--labels (or --pairs)"))
        pairs = PairSet.from_prediction_grid(pred.band(0).astype(np.float64), labels)
        inputs = [args.pred, args.labels]

    filter_gt = _pick(args.filter_label_gt, config, "eval", "filter_label_gt", None)
    report = compute_metrics(pairs, filter_gt)
    record = report.to_dict()

    outputs = [args.output] if args.output else []
    bins = summary = None
    if args.bins or args.figures:
        bins = bin_errors(pairs)
        if args.bins_out:
            with open(args.bins_out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["lo", "hi", "count", "mean_error", "median_error",
                     "q1", "q3", "whisker_low", "whisker_high"]
                )
                for b in bins:
                    writer.writerow(
                        [b.lo, b.hi, b.count, b.mean_error, b.median_error,
                         b.q1, b.q3, b.whisker_low, b.whisker_high]
                    )
            outputs.append(args.bins_out)
    if args.scatter or args.figures:
        summary = scatter_summary(pairs)
        record["scatter_r2"] = summary.r2
        if args.scatter_out:
            with open(args.scatter_out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["label_lo", "prediction_lo", "count"])
                for (iy, ix) in zip(*np.nonzero(summary.counts)):
                    writer.writerow(
                        [summary.edges[iy], summary.edges[ix], int(summary.counts[iy, ix])]
                    )
            outputs.append(args.scatter_out)
    if args.figures:
        from .figures import save_report_figures

        written = save_report_figures(summary, bins, args.figures)
        outputs.extend(str(p) for p in written)

    _dump_json(record, args.output)
    if args.output:
        _write_provenance(
            Path(args.output), "eval", {"filter_label_gt": filter_gt}, inputs, outputs
        )
    return 0


# --- tile-plan / predict -------------------------------------------------

def cmd_tile_plan(args) -> int:
    plan = plan_tiles(args.width, args.height, args.core, args.margin)
    _dump_json(plan.to_dict(), args.output)
    if args.output:
        _write_provenance(
            Path(args.output), "tile-plan",
            {"width": args.width, "height": args.height, "core": args.core, "margin": args.margin},
            [], [args.output],
        )
    return 0


def _parse_predictor(spec: str):
    name, _, rest = spec.partition(":")
    if name == "identity-band":
        return identity_band_predictor(int(rest or 0))
    if name == "constant":
        return constant_predictor(float(rest or 0.0))
    if name == "linear":
        parts = rest.split(":")
        weights = [float(w) for w in parts[0].split(",") if w]
        bias = float(parts[1]) if len(parts) > 1 else 0.0
        return linear_predictor(weights, bias)
    raise UsageError(
        f"unknown predictor {spec!r}; use identity-band:<i>, constant:<v>, "
        f"or linear:<w1,w2,...>[:bias]"
    )


def cmd_predict(args) -> int:
    raster = read_raster(_require(args.input, "--input"))
    if args.plan:
        plan_path = Path(args.plan)
        if not plan_path.exists():
            raise InputError(f"plan file not found: {plan_path}")
        plan = TilePlan.from_dict(json.loads(plan_path.read_text()))
    else:
        plan = plan_tiles(raster.width, raster.height, args.core, args.margin)
    mosaic = predict_mosaic(plan, raster, _parse_predictor(args.predictor))
    write_raster(mosaic, args.output)
    _write_provenance(
        Path(args.output), "predict",
        {"predictor": args.predictor, "core": plan.core_size, "margin": plan.context_margin},
        [args.input] + ([args.plan] if args.plan else []), [args.output],
    )
    print(json.dumps({"tiles": len(plan.tiles), "output": args.output}))
    return 0


# --- parser --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="canopykit",
        description="Canopy-height pipeline: composites, label filtering, "
        "shift-resilient loss, tiled inference, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"canopykit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="YAML config file; explicit flags win")
        return p

    p = add("synth", cmd_synth, "generate a deterministic synthetic fixture set")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--size", type=int, default=128, help="patch size in pixels (default 128)")
    p.add_argument("--bands", type=int, default=14, help="input channel count (default 14)")
    p.add_argument("--tracks", type=int, default=4, help="number of tracks (default 4)")
    p.add_argument("--pred-noise", type=float, default=0.0,
                   help="stddev of noise added to the prediction raster (default 0)")
    p.add_argument("--junk", type=float, default=0.25,
                   help="fraction of interleaved filter-failing shots (default 0.25)")

    p = add("composite", cmd_composite, "build a median composite from a scene manifest")
    p.add_argument("--manifest", help="scene manifest CSV")
    p.add_argument("--mode", choices=["s2", "s1"], default="s2",
                   help="s2: cloud-masked optical median; s1: four-channel radar")
    p.add_argument("--output", required=True, help="output raster (.tif/.mbr)")
    p.add_argument("--start", help="keep scenes at or after this ISO date")
    p.add_argument("--end", help="keep scenes at or before this ISO date")
    p.add_argument("--min-cloud-free", type=float, help="admission threshold (default 0.10)")
    p.add_argument("--cloud-prob-threshold", type=float, help="cloud cutoff percent (default 30)")
    p.add_argument("--dilation-radius", type=float, help="meters around rejected pixels (default 300)")

    p = add("gedi-filter", cmd_gedi_filter, "apply quality filters to a shot table")
    p.add_argument("--shots", help="input shot CSV")
    p.add_argument("--output", required=True, help="filtered shot CSV")
    p.add_argument("--keep-daytime", action="store_true", help="disable the night-only filter")
    p.add_argument("--keep-low-quality", action="store_true", help="disable the quality filter")
    p.add_argument("--keep-coverage-beams", action="store_true", help="disable the power-beam filter")

    p = add("slope-filter", cmd_slope_filter, "drop shots on steep terrain")
    p.add_argument("--shots", required=True, help="input shot CSV")
    p.add_argument("--elevation", help="surface elevation raster")
    p.add_argument("--threshold", type=float, help="slope cutoff in degrees (default 20)")
    p.add_argument("--output", required=True, help="filtered shot CSV")
    p.add_argument("--slope-out", help="also write the slope grid to this raster")

    p = add("rasterize", cmd_rasterize, "snap shots onto a patch grid as sparse labels")
    p.add_argument("--shots", required=True, help="input shot CSV")
    p.add_argument("--output", required=True, help="labels JSON")
    p.add_argument("--like", help="take grid and georeference from this raster")
    p.add_argument("--width", type=int, help="patch width in pixels")
    p.add_argument("--height", type=int, help="patch height in pixels")
    p.add_argument("--pixel-size", type=float, help="pixel size in map units")
    p.add_argument("--origin-x", type=float, default=0.0)
    p.add_argument("--origin-y", type=float, default=0.0)

    p = add("split", cmd_split, "assign tiles to train/val/test and compute sample weights")
    p.add_argument("--tiles", required=True, help="file with one tile id per line")
    p.add_argument("--output", required=True, help="split CSV (tile_id,split)")
    p.add_argument("--ratios", help="train,val,test ratios (default 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, help="hash seed (default 0)")
    p.add_argument("--patch-stats", help="CSV patch_id,mean_height for weighting")
    p.add_argument("--weights-out", help="weight CSV (default weights.csv next to split)")
    p.add_argument("--bin-width", type=float, default=10.0, help="height bin width (default 10)")

    p = add("loss", cmd_loss, "evaluate the shift-resilient loss on a prediction")
    p.add_argument("--pred", help="prediction raster (band 0)")
    p.add_argument("--labels", help="sparse labels JSON")
    p.add_argument("--mode", choices=["shifted", "non-shifted"], default="shifted")
    p.add_argument("--radius", type=float, help="shift search radius in pixels (default sqrt(2))")
    p.add_argument("--pixel-loss", choices=["l1", "l2", "huber"], help="pixel loss (default huber)")
    p.add_argument("--delta", type=float, help="huber cutoff in meters (default 3)")
    p.add_argument("--min-track-size", type=int,
                   help="tracks smaller than this never shift (default 10)")
    p.add_argument("--grad-out", help="write the loss gradient to this raster")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.add_argument("--instances", help="JSONL batch mode: one instance per line")
    p.add_argument("--with-gradient", action="store_true",
                   help="include gradients in batch-mode output")

    p = add("eval", cmd_eval, "compute evaluation metrics for a prediction")
    p.add_argument("--pred", help="prediction raster (band 0)")
    p.add_argument("--labels", help="sparse labels JSON")
    p.add_argument("--pairs", help="pair CSV (prediction,label) instead of raster+labels")
    p.add_argument("--filter-label-gt", type=float,
                   help="restrict to labels above this height in meters")
    p.add_argument("--bins", action="store_true", help="compute per-10 m-bin error stats")
    p.add_argument("--bins-out", help="bin stats CSV")
    p.add_argument("--scatter", action="store_true", help="compute the density grid and R^2")
    p.add_argument("--scatter-out", help="density CSV (nonzero cells)")
    p.add_argument("--figures", help="render report figures (PNG) into this directory")
    p.add_argument("--output", help="write the JSON report here instead of stdout")

    p = add("tile-plan", cmd_tile_plan, "plan core/context windows for tiled inference")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--core", type=int, default=DEFAULT_CORE_SIZE,
                   help=f"core tile size (default {DEFAULT_CORE_SIZE})")
    p.add_argument("--margin", type=int, default=DEFAULT_CONTEXT_MARGIN,
                   help=f"context border per side (default {DEFAULT_CONTEXT_MARGIN})")
    p.add_argument("--output", help="write the JSON plan here instead of stdout")

    p = add("predict", cmd_predict, "run a predictor over a tile plan and mosaic the cores")
    p.add_argument("--input", help="input raster")
    p.add_argument("--output", required=True, help="mosaic raster")
    p.add_argument("--predictor", default="identity-band:0",
                   help="identity-band:<i> | constant:<v> | linear:<w1,...>[:bias]")
    p.add_argument("--plan", help="use this plan JSON instead of planning from the extent")
    p.add_argument("--core", type=int, default=DEFAULT_CORE_SIZE)
    p.add_argument("--margin", type=int, default=DEFAULT_CONTEXT_MARGIN)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CanopykitError as exc:
        print(f"error[{args.command}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error[{args.command}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
