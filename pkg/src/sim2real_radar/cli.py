"""Batch command line for the sim-to-real workflow.

    sim2real-radar simulate  -> RD-map dataset (sim or pseudo-real)
    sim2real-radar calibrate -> noise-floor stats from an empty-room dataset
    sim2real-radar augment   -> randomized copy of a sim dataset
    sim2real-radar train     -> model.bin + clip.json
    sim2real-radar eval      -> metrics CSV (+ confusion CSV)
    sim2real-radar report    -> diagnostics over a runs directory

Failures print a single ``error: <category>: <message>`` line to stderr and
exit non-zero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from sim2real_radar.classifier import TASKS, LabeledDataset, TrainConfig, load_params, predict, save_params, train
from sim2real_radar.dataset import DatasetError, load_dataset, save_dataset
from sim2real_radar.diagnostics import (
    energy_ratios,
    magnitude_histogram,
    plot_energy_ratios,
    plot_histograms,
    wasserstein1,
    write_histograms_csv,
    write_ratios_csv,
)
from sim2real_radar.experiment import augment_maps, sequence_seed, task_indices
from sim2real_radar.fmcw import render_sequence
from sim2real_radar.metrics import (
    METRIC_FIELDS,
    balanced_accuracy,
    confusion_matrix,
    overall_accuracy,
    plot_confusion,
    read_confusion_csv,
    read_metrics_csv,
    write_confusion_csv,
    write_metrics_csv,
)
from sim2real_radar.radar import ConfigError, RadarConfig, load_radar_config, read_config_file
from sim2real_radar.randomization import NoiseFloorStats, RandomDrRanges, calibrate_noise_floor
from sim2real_radar.rd import ClipRange, estimate_clip_range, images_from_maps, range_doppler
from sim2real_radar.scene import LABEL_NAMES, LABELS, envelopes_from_config

log = logging.getLogger("sim2real_radar")


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def _domain(value: str) -> str:
    v = value.replace("-", "_")
    if v not in ("sim", "pseudo_real"):
        raise argparse.ArgumentTypeError(f"invalid domain {value!r} (sim or pseudo-real)")
    return v


def _method(value: str) -> str:
    v = value.replace("-", "_")
    if v not in ("none", "random_dr", "cdr"):
        raise argparse.ArgumentTypeError(f"invalid method {value!r}")
    return v


def _load_json(path: str | Path, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_file", f"{what} not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError("invalid_input", f"{what} {p} is not valid JSON: {exc}") from exc


# -- subcommands ----------------------------------------------------------


def cmd_simulate(args) -> None:
    config, envelope = RadarConfig(), None
    if args.radar_config:
        config = load_radar_config(args.radar_config)
        scenario = read_config_file(args.radar_config).get("scenario")
        envelope = envelopes_from_config(scenario)[args.domain] if scenario else None
    labels = LABELS if args.label == "all" else (int(args.label),)
    stream = "calibration" if args.calibration_capture else args.domain
    maps, seqs, frames, raw = [], [], [], []
    for label in labels:
        for s in range(args.sequences):
            cubes, _ = render_sequence(label, args.frames, args.domain, config,
                                       sequence_seed(args.seed, stream, label, s), envelope=envelope)
            for i, cube in enumerate(cubes):
                rd = range_doppler(cube, label=label)
                maps.append(rd.with_cells(rd.cells.astype(np.float32)))
                seqs.append(s)
                frames.append(i)
                if args.keep_raw:
                    raw.append(cube.samples)
    m = save_dataset(args.out, maps, seqs, frames, radar_config=config, domain=args.domain, seed=args.seed,
                     augmentation_params={"stream": stream}, raw_cubes=raw if args.keep_raw else None)
    log.info("wrote %d frames to %s", len(m.frames), args.out)


def cmd_calibrate(args) -> None:
    manifest, ms = load_dataset(args.inp)
    if manifest.augmentation != "none":
        raise CliError("invalid_input", "calibration needs an un-augmented capture")
    if manifest.domain != "pseudo_real":
        raise CliError("invalid_input", f"calibration capture must be pseudo-real, got {manifest.domain}")
    if set(manifest.classes) != {0}:
        raise CliError("invalid_input", "calibration capture must contain only empty-room frames")
    stats = calibrate_noise_floor(ms.maps)
    stats.save(args.out)
    log.info("m_t %.3f dB, s_t %.3f dB over %d cells", stats.mean_db, stats.std_db, stats.n_cells)


def cmd_augment(args) -> None:
    if args.method == "cdr" and not args.stats:
        raise CliError("usage", "--stats is required for --method cdr")
    manifest, ms = load_dataset(args.inp)
    if manifest.domain != "sim":
        raise CliError("invalid_input", "only simulated datasets may be randomized")
    if manifest.augmentation != "none":
        raise CliError("invalid_input", f"dataset is already augmented ({manifest.augmentation})")
    stats = NoiseFloorStats.from_dict(_load_json(args.stats, "stats file")) if args.method == "cdr" else None
    params = {"source_seed": manifest.seed}
    if args.method == "random_dr":
        params.update(RandomDrRanges().to_dict())
    out_maps = augment_maps(ms.maps, args.method, args.seed, stats=stats)
    save_dataset(args.out, out_maps, ms.sequence_ids, ms.frame_index, radar_config=manifest.radar_config,
                 domain="sim", seed=args.seed, augmentation=args.method, augmentation_params=params, stats=stats)


def cmd_train(args) -> None:
    manifest, ms = load_dataset(args.inp)
    if manifest.domain != "sim":
        raise CliError("invalid_input", "training data must be simulated")
    cfg_dict = _load_json(args.config, "train config") if args.config else {}
    cfg_dict["task"] = args.task
    try:
        cfg = TrainConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise CliError("invalid_config", str(exc)) from exc
    idx, y = task_indices(ms.labels, ms.sequence_ids, args.task)
    train_maps = [ms.maps[i] for i in idx]
    if args.clip_from:
        clip_manifest, clip_ms = load_dataset(args.clip_from)
        if clip_manifest.domain != "sim":
            raise CliError("invalid_input", "clip range must be estimated from simulated data")
        cidx, _ = task_indices(clip_ms.labels, clip_ms.sequence_ids, args.task)
        clip = estimate_clip_range([clip_ms.maps[i] for i in cidx])
    else:
        clip = estimate_clip_range(train_maps)
    x = images_from_maps(train_maps, clip)
    params, history = train(LabeledDataset(x, y, "train", "sim"), cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"task": args.task, "method": manifest.augmentation, "seed": cfg.seed, "clip": clip.to_dict(),
            "train_config": cfg.to_dict(), "final_loss": history[-1]}
    save_params(params, out, meta)
    clip_path = Path(args.clip_out) if args.clip_out else out.with_name("clip.json")
    clip_path.write_text(json.dumps(clip.to_dict(), indent=2) + "\n")
    log.info("trained %s/%s: loss %.4f -> %.4f", manifest.augmentation, args.task, history[0], history[-1])


def cmd_eval(args) -> None:
    if not Path(args.model).is_file():
        raise CliError("missing_file", f"model not found: {args.model}")
    params, meta = load_params(args.model)
    manifest, ms = load_dataset(args.inp)
    if manifest.augmentation != "none":
        raise CliError("invalid_input", "refusing to evaluate on randomized data; the test path is clip-only")
    if manifest.domain != "pseudo_real":
        raise CliError("invalid_input", "evaluation data must be pseudo-real")
    clip = ClipRange.from_dict(_load_json(args.clip, "clip file"))
    task = meta.get("task")
    if task not in TASKS or params.n_classes != TASKS[task]:
        raise CliError("invalid_input", f"model metadata names task {task!r} with {params.n_classes} outputs")
    idx, y = task_indices(ms.labels, ms.sequence_ids, task)
    x = images_from_maps([ms.maps[i] for i in idx], clip)
    LabeledDataset(x, y, "test", "pseudo_real")
    cm = confusion_matrix(predict(params, x), y, TASKS[task])
    method = args.method or {"none": "baseline"}.get(meta.get("method"), meta.get("method"))
    row = {"method": method, "task": task, "seed": meta.get("seed"),
           "accuracy": overall_accuracy(cm), "balanced_accuracy": balanced_accuracy(cm)}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = read_metrics_csv(out) if args.append and out.is_file() else []
    write_metrics_csv(rows + [row], out)
    names = [LABEL_NAMES[k] for k in LABELS] if task == "counting" else ["empty", "occupied"]
    conf = Path(args.confusion) if args.confusion else out.with_name(f"confusion_{method}_{task}_{row['seed']}.csv")
    write_confusion_csv(cm, conf, names)
    log.info("%s/%s balanced accuracy %.4f", method, task, row["balanced_accuracy"])


def _find_datasets(root: Path) -> list[Path]:
    return sorted(p.parent for p in root.rglob("manifest.json"))


def cmd_report(args) -> None:
    root = Path(args.runs)
    if not root.is_dir():
        raise CliError("missing_file", f"runs directory not found: {root}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    groups: dict[str, list] = {}
    for d in _find_datasets(root):
        manifest, ms = load_dataset(d)
        if manifest.augmentation_params.get("stream") == "calibration":
            continue
        key = manifest.domain if manifest.augmentation == "none" else f"{manifest.domain}+{manifest.augmentation}"
        groups.setdefault(key, []).append(ms)
    if groups:
        hists = {}
        for key, sets in sorted(groups.items()):
            empty = [m for ms in sets for m, lab in zip(ms.maps, ms.labels) if lab == 0]
            if empty:
                hists[key] = magnitude_histogram(empty)
        if hists:
            write_histograms_csv(hists, out / "histograms.csv")
            plot_histograms(hists, out / "histograms.png")
            if "pseudo_real" in hists:
                ref = hists["pseudo_real"]
                lines = [f"{k},{wasserstein1(h, ref):.6f}" for k, h in hists.items() if k != "pseudo_real"]
                (out / "wasserstein_to_pseudo_real.csv").write_text("source,wasserstein1_db\n" + "\n".join(lines) + "\n")
        rows, ratio_groups = [], {}
        for key, sets in sorted(groups.items()):
            for ms in sets:
                ratios = energy_ratios(ms.maps)
                for lab, seq, fr, r in zip(ms.labels, ms.sequence_ids, ms.frame_index, ratios):
                    rows.append({"source": key, "label": int(lab), "frame": f"{seq}:{fr}", "static_energy_ratio": r})
                for lab in np.unique(ms.labels):
                    ratio_groups.setdefault(f"{key}/{LABEL_NAMES[lab]}", []).extend(ratios[ms.labels == lab])
        write_ratios_csv(rows, out / "energy_ratios.csv")
        plot_energy_ratios({k: np.array(v) for k, v in ratio_groups.items()}, out / "energy_ratios.png")

    cms = {p.stem.removeprefix("confusion_"): read_confusion_csv(p) for p in sorted(root.rglob("confusion_*.csv"))}
    for task, k in TASKS.items():
        sel = {name: cm for name, cm in cms.items() if cm.n_classes == k}
        if sel:
            names = [LABEL_NAMES[k] for k in LABELS] if task == "counting" else ["empty", "occupied"]
            plot_confusion(sel, out / f"confusion_{task}.png", names)
    metric_rows = [r for p in sorted(root.rglob("*.csv")) if _is_metrics(p) for r in read_metrics_csv(p)]
    if metric_rows:
        write_metrics_csv(metric_rows, out / "metrics_summary.csv")
    if not groups and not cms and not metric_rows:
        raise CliError("invalid_input", f"nothing to report under {root}")


def _is_metrics(path: Path) -> bool:
    with open(path) as fh:
        return fh.readline().strip() == ",".join(METRIC_FIELDS)


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sim2real-radar", description="Sim-to-real FMCW radar workflow.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="render sequences into an RD-map dataset")
    s.add_argument("--domain", type=_domain, required=True)
    s.add_argument("--class", dest="label", choices=["0", "1", "2", "all"], default="all")
    s.add_argument("--sequences", type=int, required=True)
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--radar-config", help="JSON or TOML radar configuration (optional [scenario] table)")
    s.add_argument("--calibration-capture", action="store_true",
                   help="draw from the calibration seed stream (empty-room capture)")
    s.add_argument("--keep-raw", action="store_true", help="also store beat-signal cubes")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate", help="estimate noise-floor stats from an empty-room dataset")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("augment", help="apply a randomization scheme to a sim dataset")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--method", type=_method, required=True)
    s.add_argument("--stats")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", help="train a classifier on a sim dataset")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--task", choices=sorted(TASKS), required=True)
    s.add_argument("--clip-from", help="sim dataset for the clip range (default: --in)")
    s.add_argument("--config", help="train config JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--clip-out", help="where to write clip.json (default: next to the model)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on a pseudo-real dataset")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--clip", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--method", help="method name for the metrics row (default: from the model)")
    s.add_argument("--append", action="store_true", help="append to an existing metrics CSV")
    s.add_argument("--confusion", help="confusion CSV path")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="diagnostics and confusion plots for a runs directory")
    s.add_argument("--runs", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except DatasetError as exc:
        category, msg = exc.category, str(exc)
    except ConfigError as exc:
        category, msg = "invalid_config", str(exc)
    except FileNotFoundError as exc:
        category, msg = "missing_file", str(exc)
    except ValueError as exc:
        category, msg = "invalid_input", str(exc)
    else:
        return 0
    print(f"error: {category}: {' '.join(msg.split())}", file=sys.stderr)
    return 2 if category == "usage" else 1


if __name__ == "__main__":
    sys.exit(main())
