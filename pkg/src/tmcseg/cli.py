"""Command-line pipeline: data synthesis, training, decoding, result tables.

Subcommands compose the library into reproducible runs on disk:

    gen-data     image -> noisy masked sequence archive (+ preview images)
    train        archive -> model checkpoint + training trace
    segment      checkpoint(s) + archive -> decoded labels, scores, panel
    repro-table  the full scenarios x models x seeds grid, in parallel
    oracle       exact smoother baseline for a degenerate-chain sanity check

Every run lives in its own directory: config.json, archive.txt,
checkpoints/, traces/, results/, images/. Commands are deterministic given
the config and seeds (wall-clock fields aside), and repro-table resumes by
skipping cells whose results already exist. The only environment knob is
TMCSEG_LOG_LEVEL.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import nn
from .data import (
    BinaryImage,
    NoiseSpec,
    ParseError,
    generate_shape,
    hilbert_map,
    image_to_sequence,
    load_bitmap,
    load_sequence,
    make_sequence,
    save_bitmap,
    save_grayscale,
    save_sequence,
)
from .eval import (
    MODEL_ORDER,
    SegmentationResult,
    emit_table,
    error_rate,
    render_panel,
    render_segmentation,
    write_results_csv,
)
from .inference import TrainConfig, posterior_labels, train
from .models import KINDS, TemperatureSchedule, TmcConfig, load_model, make_model
from .oracle import DiscreteHmm, forward_backward, hmm_loglik

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Bad configuration file, flag value, or missing input."""


# --- configuration schema ----------------------------------------------------

DATA_DEFAULTS = {
    "shape": "disk",         # disk | blob | polygon (ignored with bitmap)
    "side": 64,              # power-of-two grid side
    "radius": None,          # fixed disk radius in pixels, None -> random
    "shape_seed": 0,
    "noise": "cattle",       # cattle | camel | {kind, a, sigma|b}
    "noise_seed": 0,
    "fraction_unobserved": 0.4,
    "mask_seed": 0,
    "bitmap": None,          # path to a PBM/PGM truth image instead of a shape
}

MODEL_DEFAULTS = {
    "kind": "dmtmc",         # dmtmc | vsl | svrnn
    "d_x": 1,
    "d_z": 2,
    "n_classes": 2,
    "hidden_units": 0,       # 0 -> per-kind default (25 / 41 / 22)
    "rnn_state_dim": 0,      # 0 -> per-kind default
    "beta": 0.1,
    "alpha": 1.0,
    "temperature": [0.5, 0.5, 0],  # start, end, anneal epochs
    "init_seed": 0,
}

TRAIN_DEFAULTS = {
    "epochs": 300,
    "learning_rate": 1e-3,
    "mc_samples": 1,
    "seed": 0,
    "grad_clip": 5.0,
    "window": 0,
}

SEGMENT_DEFAULTS = {
    "n_samples": 64,
    "seed": 0,
}

SECTION_DEFAULTS = {
    "data": DATA_DEFAULTS,
    "model": MODEL_DEFAULTS,
    "train": TRAIN_DEFAULTS,
    "segment": SEGMENT_DEFAULTS,
}

# the three standard scenarios: noise preset + hidden fraction
SCENARIOS = {
    "cattle-40": {"noise": "cattle", "fraction_unobserved": 0.4,
                  "shape_seed": 11, "noise_seed": 5, "mask_seed": 7},
    "camel-40": {"noise": "camel", "fraction_unobserved": 0.4,
                 "shape_seed": 22, "noise_seed": 6, "mask_seed": 7},
    "camel-60": {"noise": "camel", "fraction_unobserved": 0.6,
                 "shape_seed": 22, "noise_seed": 6, "mask_seed": 7},
}

PRESET_TO_SCENARIO = {"cattle40": "cattle-40", "camel40": "camel-40",
                      "camel60": "camel-60"}

# Per-kind training budgets for the reproduction table. Windowed updates keep
# one epoch cheap on a single core; each kind gets the budget where its decode
# error plateaus on side-64 runs. Explicit user settings still win.
TABLE_TRAIN = {
    "dmtmc": {"window": 1024, "epochs": 300, "learning_rate": 1e-3},
    "svrnn": {"window": 1024, "epochs": 300, "learning_rate": 1e-3},
    "vsl": {"window": 1024, "epochs": 300, "learning_rate": 1e-3},
}


def merge_section(name, *layers):
    """Overlay dicts onto the section defaults, rejecting unknown keys."""
    merged = copy.deepcopy(SECTION_DEFAULTS[name])
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if key not in merged:
                raise ConfigError(f"unknown key {key!r} in section {name!r}")
            merged[key] = value
    return merged


def load_config_file(path):
    """Read a JSON config; top-level keys must be known section names."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - set(SECTION_DEFAULTS)
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    for name, section in raw.items():
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: section {name!r} must be an object")
    return raw


def parse_set_overrides(pairs):
    """--set section.key=value flags -> {section: {key: value}}."""
    out = {}
    for pair in pairs or []:
        head, sep, value = pair.partition("=")
        if not sep or "." not in head:
            raise ConfigError(f"--set expects section.key=value, got {pair!r}")
        section, key = head.split(".", 1)
        if section not in SECTION_DEFAULTS:
            raise ConfigError(f"--set: unknown section {section!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value  # bare strings stay strings
        out.setdefault(section, {})[key] = parsed
    return out


def resolve_config(args, flag_sections):
    """defaults < config file < preset < explicit flags < --set."""
    file_sections = load_config_file(args.config) if getattr(args, "config", None) else {}
    preset = {}
    if getattr(args, "preset", None):
        if args.preset not in PRESET_TO_SCENARIO:
            raise ConfigError(f"unknown preset {args.preset!r}; "
                              f"choose from {sorted(PRESET_TO_SCENARIO)}")
        preset = {"data": SCENARIOS[PRESET_TO_SCENARIO[args.preset]]}
    overrides = parse_set_overrides(getattr(args, "set", None))
    return {
        name: merge_section(name, file_sections.get(name), preset.get(name),
                            flag_sections.get(name), overrides.get(name))
        for name in SECTION_DEFAULTS
    }


def write_config(run_dir, config):
    with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")


def noise_spec_from(value, seed):
    if value == "cattle":
        return NoiseSpec.cattle(seed=seed)
    if value == "camel":
        return NoiseSpec.camel(seed=seed)
    if isinstance(value, dict):
        spec = dict(value)
        spec.setdefault("seed", seed)
        return NoiseSpec.from_dict(spec)
    raise ConfigError(f"noise must be 'cattle', 'camel' or an object, got {value!r}")


def grid_order_for(n):
    order = max(int(n).bit_length() // 2, 1)
    if 4 ** order != n:
        raise ConfigError(f"sequence length {n} does not fill a square grid")
    return order


# --- shared pipeline steps ----------------------------------------------------

def ensure_run_dir(out):
    for sub in ("checkpoints", "traces", "results", "images"):
        os.makedirs(os.path.join(out, sub), exist_ok=True)
    return out


def data_paths(out):
    return (os.path.join(out, "archive.txt"),
            os.path.join(out, "images", "truth.pbm"))


def run_gen_data(out, data_cfg):
    """Synthesize (or load) the truth image, derive the archive, render previews."""
    ensure_run_dir(out)
    if data_cfg["bitmap"]:
        image = load_bitmap(data_cfg["bitmap"])
    else:
        image = generate_shape(data_cfg["shape"], data_cfg["side"],
                               data_cfg["shape_seed"], radius=data_cfg["radius"])
    spec = noise_spec_from(data_cfg["noise"], data_cfg["noise_seed"])
    seq = make_sequence(image, spec, data_cfg["fraction_unobserved"],
                        data_cfg["mask_seed"])
    archive_path, truth_path = data_paths(out)
    save_sequence(archive_path, seq)
    save_bitmap(image, truth_path)
    hmap = hilbert_map(image.order)
    truth = image_to_sequence(image, hmap)
    panel = render_panel(seq.xs, truth, seq.observed, {}, hmap)
    side = image.side
    save_grayscale(panel[:, :side], os.path.join(out, "images", "observations.pgm"))
    save_grayscale(panel[:, 2 * (side + 1):2 * (side + 1) + side],
                   os.path.join(out, "images", "mask.pgm"))
    return seq, image


def load_run_data(out):
    archive_path, truth_path = data_paths(out)
    if not os.path.exists(archive_path):
        raise ConfigError(f"missing archive {archive_path}; run gen-data first")
    seq = load_sequence(archive_path)
    if not os.path.exists(truth_path):
        raise ConfigError(f"missing truth image {truth_path}; run gen-data first")
    hmap = hilbert_map(grid_order_for(len(seq)))
    truth = image_to_sequence(load_bitmap(truth_path), hmap)
    return seq, truth, hmap


def checkpoint_path(out, kind):
    return os.path.join(out, "checkpoints", f"{kind}.json")


def run_train(out, model_cfg, train_cfg):
    """Train one model kind on the run's archive; write checkpoint + trace."""
    ensure_run_dir(out)
    archive_path, _ = data_paths(out)
    if not os.path.exists(archive_path):
        raise ConfigError(f"missing archive {archive_path}; run gen-data first")
    seq = load_sequence(archive_path)
    kind = model_cfg["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    if model_cfg["d_x"] != seq.d_x:
        raise ConfigError(f"model d_x={model_cfg['d_x']} but archive has d_x={seq.d_x}")
    tmc_cfg = TmcConfig(
        kind=kind, d_x=model_cfg["d_x"], d_z=model_cfg["d_z"],
        n_classes=model_cfg["n_classes"], hidden_units=model_cfg["hidden_units"],
        rnn_state_dim=model_cfg["rnn_state_dim"], beta=model_cfg["beta"],
        alpha=model_cfg["alpha"],
        temperature=TemperatureSchedule(*model_cfg["temperature"]))
    model = make_model(tmc_cfg, seed=model_cfg["init_seed"])
    cfg = TrainConfig(
        epochs=train_cfg["epochs"], learning_rate=train_cfg["learning_rate"],
        mc_samples=train_cfg["mc_samples"], seed=train_cfg["seed"],
        temperature=tmc_cfg.temperature, grad_clip=train_cfg["grad_clip"],
        window=train_cfg["window"])
    started = time.perf_counter()
    model, trace = train(model, seq, cfg)
    seconds = time.perf_counter() - started
    model.save(checkpoint_path(out, kind), seed=train_cfg["seed"],
               step=train_cfg["epochs"])
    trace.write(os.path.join(out, "traces", f"{kind}.csv"))
    log.info("trained %s for %d epochs in %.1f s", kind, train_cfg["epochs"], seconds)
    return model, trace, seconds


def run_segment(out, ckpt_paths, segment_cfg):
    """Decode hidden labels with each checkpoint; write results and images."""
    ensure_run_dir(out)
    seq, truth, hmap = load_run_data(out)
    results = []
    decodes = {}
    for path in ckpt_paths:
        if not os.path.exists(path):
            raise ConfigError(f"missing checkpoint {path}")
        model, meta = load_model(path)
        if model.config.d_x != seq.d_x or len(seq) != len(hmap):
            raise ConfigError(f"checkpoint {path} does not match the archive")
        kind = model.config.kind
        started = time.perf_counter()
        dec = posterior_labels(model, seq, n_samples=segment_cfg["n_samples"],
                               seed=segment_cfg["seed"])
        seconds = time.perf_counter() - started
        result = SegmentationResult(
            decoded=dec.labels, truth=truth, observed=seq.observed, kind=kind,
            meta={"seed": segment_cfg["seed"], "n_samples": segment_cfg["n_samples"],
                  "epochs": meta.get("step"), "train_seed": meta.get("seed"),
                  "seconds": round(seconds, 3)})
        err = error_rate(result)
        results.append(result)
        decodes[kind] = dec.labels
        save_bitmap(render_segmentation(result, hmap),
                    os.path.join(out, "images", f"decode-{kind}.pbm"))
        record = {"kind": kind, "error_rate": err,
                  "n_hidden": int((~seq.observed).sum()), **result.meta}
        with open(os.path.join(out, "results", f"{kind}.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(record, fh, indent=2, sort_keys=True)
            fh.write("\n")
        log.info("decoded %s: error rate %.4f", kind, err)
    panel = render_panel(seq.xs, truth, seq.observed, decodes, hmap)
    save_grayscale(panel, os.path.join(out, "images", "panel.pgm"))
    return results


# --- subcommands ----------------------------------------------------------------

def cmd_gen_data(args):
    flags = {"data": {}}
    for key in ("shape", "side", "radius", "bitmap"):
        value = getattr(args, key, None)
        if value is not None:
            flags["data"][key] = value
    if args.fraction is not None:
        flags["data"]["fraction_unobserved"] = args.fraction
    if args.seed is not None:
        flags["data"].update({"shape_seed": args.seed, "noise_seed": args.seed + 1,
                              "mask_seed": args.seed + 2})
    config = resolve_config(args, flags)
    seq, image = run_gen_data(args.out, config["data"])
    write_config(args.out, config)
    print(f"wrote {args.out}: side {image.side}, {len(seq)} steps, "
          f"{int((~seq.observed).sum())} hidden")
    return EXIT_OK


def cmd_train(args):
    flags = {"model": {}, "train": {}}
    if args.model is not None:
        flags["model"]["kind"] = args.model
    if args.epochs is not None:
        flags["train"]["epochs"] = args.epochs
    if args.lr is not None:
        flags["train"]["learning_rate"] = args.lr
    if args.seed is not None:
        flags["train"]["seed"] = args.seed
        flags["model"]["init_seed"] = args.seed
    config = resolve_config(args, flags)
    _, trace, seconds = run_train(args.out, config["model"], config["train"])
    write_config(args.out, config)
    last = trace.rows[-1]["elbo"] if trace.rows else float("nan")
    print(f"trained {config['model']['kind']}: {config['train']['epochs']} epochs, "
          f"{seconds:.1f} s, final objective {last:.2f}")
    return EXIT_OK


def cmd_segment(args):
    flags = {"segment": {}}
    if args.samples is not None:
        flags["segment"]["n_samples"] = args.samples
    if args.seed is not None:
        flags["segment"]["seed"] = args.seed
    config = resolve_config(args, flags)
    ckpts = args.checkpoint or [checkpoint_path(args.out, k) for k in KINDS
                                if os.path.exists(checkpoint_path(args.out, k))]
    if not ckpts:
        raise ConfigError(f"no checkpoints found under {args.out}")
    results = run_segment(args.out, ckpts, config["segment"])
    for r in results:
        print(f"{r.kind}: error rate {error_rate(r):.4f} "
              f"on {int((~r.observed).sum())} hidden steps")
    return EXIT_OK


# one repro-table cell: generate data, train one model, decode, score
def _run_cell(spec):
    out = spec["out"]
    result_path = os.path.join(out, "results", f"{spec['kind']}.json")
    if os.path.exists(result_path):
        with open(result_path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    ensure_run_dir(out)
    archive_path, _ = data_paths(out)
    if not os.path.exists(archive_path):
        run_gen_data(out, spec["data"])
    run_train(out, spec["model"], spec["train"])
    results = run_segment(out, [checkpoint_path(out, spec["kind"])],
                          spec["segment"])
    write_config(out, {"data": spec["data"], "model": spec["model"],
                       "train": spec["train"], "segment": spec["segment"]})
    with open(result_path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _collect_cell_result(out):
    """Rebuild a scored result from a finished cell's artifacts."""
    seq, truth, hmap = load_run_data(out["out"])
    decode = load_bitmap(os.path.join(out["out"], "images",
                                      f"decode-{out['kind']}.pbm"))
    decoded = image_to_sequence(decode, hmap)
    return SegmentationResult(decoded=decoded, truth=truth, observed=seq.observed,
                              kind=out["kind"], meta=out["meta"])


def cmd_repro_table(args):
    config = resolve_config(args, {})
    scenarios = args.scenarios.split(",") if args.scenarios else list(SCENARIOS)
    kinds = args.kinds.split(",") if args.kinds else list(MODEL_ORDER)
    for s in scenarios:
        if s not in SCENARIOS:
            raise ConfigError(f"unknown scenario {s!r}; choose from {sorted(SCENARIOS)}")
    for k in kinds:
        if k not in KINDS:
            raise ConfigError(f"unknown model kind {k!r}")
    seeds = list(range(args.seeds))
    # keep explicit config/--set choices, but let TABLE_TRAIN fill the rest
    train_overrides = {k: v for k, v in config["train"].items()
                       if v != TRAIN_DEFAULTS[k]}
    specs = []
    for scenario in scenarios:
        for kind in kinds:
            for seed in seeds:
                data_cfg = merge_section("data", config["data"], SCENARIOS[scenario])
                if args.side is not None:
                    data_cfg["side"] = args.side
                model_cfg = merge_section("model", config["model"],
                                          {"kind": kind, "init_seed": seed})
                train_cfg = merge_section("train", TABLE_TRAIN[kind],
                                          train_overrides, {"seed": seed})
                if args.epochs is not None:
                    train_cfg["epochs"] = args.epochs
                segment_cfg = merge_section("segment", config["segment"],
                                            {"seed": seed})
                cell_dir = os.path.join(args.out, "cells",
                                        f"{scenario}-{kind}-s{seed}")
                specs.append({"out": cell_dir, "scenario": scenario, "kind": kind,
                              "seed": seed, "data": data_cfg, "model": model_cfg,
                              "train": train_cfg, "segment": segment_cfg})
    os.makedirs(args.out, exist_ok=True)
    finished, failed = [], []
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_run_cell, spec): spec for spec in specs}
            for future, spec in futures.items():
                try:
                    record = future.result()
                    finished.append((spec, record))
                except Exception as err:  # noqa: BLE001 - cell isolation boundary
                    failed.append((spec, err))
    else:
        for spec in specs:
            try:
                finished.append((spec, _run_cell(spec)))
            except Exception as err:  # noqa: BLE001 - cell isolation boundary
                failed.append((spec, err))
    for spec, err in failed:
        msg = f"cell {spec['scenario']}/{spec['kind']}/seed{spec['seed']} failed: {err}"
        print(msg, file=sys.stderr)
        os.makedirs(spec["out"], exist_ok=True)
        with open(os.path.join(spec["out"], "error.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(msg + "\n")
    if not finished:
        print("all cells failed", file=sys.stderr)
        return EXIT_RUNTIME
    results = []
    for spec, record in finished:
        meta = dict(record)
        meta["scenario"] = spec["scenario"]
        results.append(_collect_cell_result(
            {"out": spec["out"], "kind": spec["kind"], "meta": meta}))
    report = emit_table(results, scenario_order=scenarios, include_reference=True)
    with open(os.path.join(args.out, "table.csv"), "w", encoding="utf-8") as fh:
        fh.write(report.csv_text)
    with open(os.path.join(args.out, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.text)
    write_results_csv(results, os.path.join(args.out, "per_seed.csv"))
    print(report.text, end="")
    if failed:
        print(f"{len(failed)} of {len(specs)} cells failed; table is partial",
              file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args):
    """Exact-smoother baseline: fit a two-state chain on the observed labels."""
    seq, truth, _ = load_run_data(args.out)
    xs = seq.xs[:, 0]
    labels = seq.labels
    obs = seq.observed
    if not obs.any() or obs.all():
        raise ConfigError("oracle needs both observed and hidden steps")
    counts = np.ones((2, 2))  # add-one smoothing keeps rows off the boundary
    pairs = obs[:-1] & obs[1:]
    for a, b in zip(labels[:-1][pairs], labels[1:][pairs]):
        counts[a, b] += 1
    transition = counts / counts.sum(axis=1, keepdims=True)
    initial = np.bincount(labels[obs], minlength=2) + 1.0
    initial /= initial.sum()
    means = np.array([xs[obs & (labels == c)].mean() for c in (0, 1)])
    stds = np.array([max(xs[obs & (labels == c)].std(), 1e-3) for c in (0, 1)])
    hmm = DiscreteHmm(initial, transition, means, stds)
    constraints = np.where(obs, labels, -1)
    posterior = forward_backward(hmm, xs, constraints)
    decoded = posterior.argmax(axis=1)
    hidden = ~obs
    err = float(np.mean(decoded[hidden] != truth[hidden]))
    ll = hmm_loglik(hmm, xs, constraints)
    print(f"supervised-fit chain: loglik {ll:.2f}, "
          f"exact-smoother error rate {err:.4f} on {int(hidden.sum())} hidden steps")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="tmcseg",
        description="Semi-supervised sequence labeling on binary images.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="run directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a single config value")

    p = sub.add_parser("gen-data", help="synthesize a noisy masked sequence")
    common(p)
    p.add_argument("--preset", help="cattle40 | camel40 | camel60")
    p.add_argument("--shape", choices=("disk", "blob", "polygon"))
    p.add_argument("--side", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--bitmap", help="use this PBM/PGM as the truth image")
    p.add_argument("--fraction", type=float, help="fraction of labels hidden")
    p.add_argument("--seed", type=int, help="derives shape/noise/mask seeds")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model on a run's archive")
    common(p)
    p.add_argument("--model", choices=KINDS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int, help="weight init and training noise seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="decode hidden labels with checkpoints")
    common(p)
    p.add_argument("--checkpoint", action="append",
                   help="checkpoint path (repeatable); default: all in the run")
    p.add_argument("--samples", type=int, help="posterior sample count")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("repro-table",
                       help="run the scenarios x models x seeds grid")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--seeds", type=int, default=3, help="training seeds per cell")
    p.add_argument("--side", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--scenarios", help="comma-separated subset of scenarios")
    p.add_argument("--kinds", help="comma-separated subset of model kinds")
    p.set_defaults(func=cmd_repro_table)

    p = sub.add_parser("oracle", help="exact-smoother baseline on a run's data")
    common(p)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    level = os.environ.get("TMCSEG_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return EXIT_RUNTIME
