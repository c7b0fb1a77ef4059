"""Command-line orchestration: synth, train, evaluate, sweep-k.

All randomness flows from the root --seed: the validation split consumes it
directly, the cips pipeline spawns per-phase child streams from it, and
baselines draw from one generator seeded with it. Outputs carry no
timestamps, so identical inputs and seed reproduce identical bytes.
"""

import argparse
import csv
import os
import sys
from dataclasses import replace

import numpy as np

from . import data as data_mod
from . import evaluation, recsys
from .config import VARIANTS, load_run_config, serialize_config
from .errors import CipsError, ConfigError

TRAIN_REPORT_HEADER = ["model", "metric", "K", "segment", "value", "seed", "epoch"]


def _checkpoint_path(cfg, variant, k=None, seed=None):
    name = f"checkpoint_{variant}"
    if k is not None:
        name += f"_k{k}"
    if seed is not None:
        name += f"_seed{seed}"
    return os.path.join(cfg.out_dir, name + ".cips")


def _prepared_dataset(cfg):
    dataset = data_mod.load_dataset(cfg.data_dir, cfg.positive_threshold)
    if len(dataset.validation) == 0:
        dataset = data_mod.split_validation(dataset, cfg.validation_ratio, cfg.seed)
    return dataset


def _write_config_record(cfg):
    with open(os.path.join(cfg.out_dir, "config_used.txt"), "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))


def cmd_synth(cfg):
    """Generate a synthetic MNAR world plus its ground-truth tables."""
    dataset, truth = data_mod.generate_synthetic(
        cfg.num_users, cfg.num_items, cfg.num_true_clusters,
        cfg.samples_per_user, cfg.seed, profile=cfg.profile,
    )
    data_mod.save_dataset(dataset, cfg.out_dir)
    data_mod.save_ground_truth(truth, cfg.out_dir)
    _write_config_record(cfg)
    sizes = np.bincount(truth.true_cluster, minlength=truth.num_clusters)
    print(f"users: {dataset.num_users}")
    print(f"items: {dataset.num_items}")
    print(f"train records: {len(dataset.train)}")
    print(f"test records: {len(dataset.test_mar)}")
    print(f"non-empty clusters: {int((sizes > 0).sum())} of {truth.num_clusters}")
    print(f"cluster sizes: {' '.join(str(int(s)) for s in sizes)}")
    return 0


def _train_variant(dataset, cfg, variant):
    if variant == "cips":
        model, _, table, history = recsys.train_cips(dataset, cfg)
        return model, history
    model, history = recsys.train_baseline(dataset, variant, cfg)
    return model, history


def _write_train_report(path, variant, seed, history):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAIN_REPORT_HEADER)
        epoch = 0
        for entry in history:
            if "snips_dcg3" in entry:
                writer.writerow([variant, "snips_dcg", 3, "validation",
                                 f"{entry['snips_dcg3']:.17g}", seed, epoch])
            if "snips_accuracy" in entry:
                writer.writerow([variant, "snips_accuracy", 0, "validation",
                                 f"{entry['snips_accuracy']:.17g}", seed, epoch])
            epoch += 1


def cmd_train(cfg):
    """Train one variant end-to-end and checkpoint it."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    dataset = _prepared_dataset(cfg)
    model, history = _train_variant(dataset, cfg, cfg.variant)
    ckpt = _checkpoint_path(cfg, cfg.variant)
    recsys.save_model(model, ckpt, meta={"variant": cfg.variant, "seed": cfg.seed,
                                         "num_clusters": cfg.num_clusters})
    _write_train_report(os.path.join(cfg.out_dir, "train_report.csv"),
                        cfg.variant, cfg.seed, history)
    _write_config_record(cfg)
    print(f"checkpoint: {ckpt}")
    print(f"epochs logged: {len(history)}")
    return 0


def cmd_evaluate(cfg):
    """Emit the full metric grid for an existing checkpoint."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    dataset = _prepared_dataset(cfg)
    ckpt = _checkpoint_path(cfg, cfg.variant)
    if not os.path.exists(ckpt):
        raise ConfigError(f"checkpoint {ckpt} does not exist; run train first")
    model, meta = recsys.load_model(ckpt)
    if meta.get("variant") != cfg.variant:
        raise ConfigError(
            f"checkpoint variant {meta.get('variant')!r} does not match "
            f"configured variant {cfg.variant!r}"
        )
    segment = min(cfg.segment_size, dataset.num_items)
    report = evaluation.evaluate(model, dataset, segment_size=segment,
                                 model_name=cfg.variant, seed=cfg.seed)
    out = os.path.join(cfg.out_dir, "report.csv")
    evaluation.write_report(report, out)
    print(f"report: {out} ({len(report.rows)} rows)")
    return 0


def cmd_sweep_k(cfg):
    """Train and evaluate the cips variant across a list of cluster counts."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    seeds = cfg.seeds if cfg.seeds else [cfg.seed]
    merged = evaluation.EvalReport()
    for seed in seeds:
        base = replace(cfg, seed=seed)
        dataset = _prepared_dataset(base)
        segment = min(cfg.segment_size, dataset.num_items)
        for k in cfg.k_values:
            if k > dataset.num_users:
                print(f"warning: K={k} exceeds user count {dataset.num_users}, skipped",
                      file=sys.stderr)
                continue
            run_cfg = replace(base, num_clusters=k, variant="cips")
            model, _, _, _ = recsys.train_cips(dataset, run_cfg)
            recsys.save_model(
                model, _checkpoint_path(cfg, "cips", k=k, seed=seed),
                meta={"variant": "cips", "seed": seed, "num_clusters": k},
            )
            report = evaluation.evaluate(model, dataset, segment_size=segment,
                                         model_name=f"cips_k{k}", seed=seed)
            merged.rows.extend(report.rows)
            map5 = report.value("MAP", 5, "all")
            print(f"seed {seed} K={k}: MAP@5 {map5:.6f}")
    out = os.path.join(cfg.out_dir, "sweep_report.csv")
    evaluation.write_report(merged, out)
    _write_config_record(cfg)
    print(f"report: {out} ({len(merged.rows)} rows)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cips",
        description="Cluster-stratified IPS debiasing pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "synth": cmd_synth,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "sweep-k": cmd_sweep_k,
    }
    for name, handler in specs.items():
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", default=None, help="flat key = value file")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--variant", choices=VARIANTS, default=None)
        cmd.add_argument("--k", type=int, default=None, help="cluster count override")
        cmd.add_argument("--out", default=None, help="output directory")
        cmd.add_argument("--data", default=None, help="dataset directory")
        cmd.set_defaults(handler=handler)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "variant": args.variant,
        "num_clusters": args.k,
        "out_dir": args.out,
        "data_dir": args.data,
    }
    try:
        cfg = load_run_config(args.config, overrides)
        return args.handler(cfg)
    except (CipsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
