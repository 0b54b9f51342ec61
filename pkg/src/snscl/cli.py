"""Command-line entry point: ``gen``, ``train`` and ``compare``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.

Layout under ``--out DIR``::

    train.csv, test.csv, manifest.json     written by gen
    <label>/metrics.csv, summary.json      written by train
    compare.csv, compare.json              written by compare

Every file carries the hash of the configuration that produced it.  A rerun
with a different configuration refuses to overwrite unless ``--force``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .data import build_transition, empirical_noise_rate, inject_noise, make_fine_grained_blobs, read_dataset_csv, write_dataset_csv
from .trainer import TrainingError, run, write_metrics_csv

log = logging.getLogger("snscl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

ABLATIONS = {
    "no-correct": {"weight_correction": False},
    "no-wupdate": {"weight_update": False},
    "no-stoch": {"stochastic_module": False},
    "plain_scl": {"plain_scl": True},
}


class RuntimeFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="INI experiment file (defaults if omitted)")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override both the data and the training seed")
    common.add_argument("--force", action="store_true", help="overwrite outputs made from a different config")
    common.add_argument("-v", "--verbose", action="store_true")

    method = argparse.ArgumentParser(add_help=False)
    method.add_argument("--lnl", choices=["ce", "ls", "gce"], default=None, help="classification loss")

    p = _Parser(prog="snscl", description="Noisy-label training with a weighted contrastive branch on synthetic data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="generate the train/test CSV files")
    t = sub.add_parser("train", parents=[common, method], help="train one configuration on generated data")
    t.add_argument("--ablation", choices=sorted(ABLATIONS), default=None)
    t.add_argument("--no-snscl", action="store_true", help="plain classification training")
    sub.add_parser("compare", parents=[common, method], help="baseline vs contrastive run on shared data")
    return p


# --- helpers -----------------------------------------------------------------
def _header_hash(path: Path) -> str | None:
    if not path.exists():
        return None
    if path.suffix == ".json":
        try:
            return json.loads(path.read_text()).get("config_hash")
        except (OSError, ValueError):
            return None
    with open(path) as fh:
        first = fh.readline().strip()
    if first.startswith("# config_hash="):
        return first.split("=", 1)[1].split()[0]
    return None


def _guard(paths: list[Path], digest: str, force: bool) -> None:
    for path in paths:
        old = _header_hash(path)
        if path.exists() and old != digest and not force:
            raise ConfigError(f"{path} was produced by a different configuration (hash {old}); use --force to overwrite")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    kw = {}
    if getattr(args, "lnl", None):
        kw["lnl_loss"] = args.lnl
    if getattr(args, "ablation", None):
        kw.update(ABLATIONS[args.ablation])
    if getattr(args, "no_snscl", False):
        kw["snscl"] = False
    if kw:
        cfg = replace(cfg, train=replace(cfg.train, **kw))
    return cfg


def run_label(cfg: ExperimentConfig) -> str:
    if cfg.label:
        return cfg.label
    t = cfg.train
    parts = ["snscl" if t.snscl else "baseline", t.lnl_loss]
    if t.snscl and t.plain_scl:
        parts.append("plain_scl")
    elif t.snscl:
        parts += [name for name, flags in ABLATIONS.items() if name != "plain_scl" and not getattr(t, next(iter(flags)))]
    return "-".join(parts)


# --- commands ----------------------------------------------------------------
def cmd_gen(cfg: ExperimentConfig, out: Path, force: bool) -> dict:
    digest = cfg.data_hash()
    files = [out / "train.csv", out / "test.csv", out / "manifest.json"]
    _guard(files, digest, force)
    d = cfg.data
    blobs = make_fine_grained_blobs(
        num_classes=d.num_classes,
        dim=d.dim,
        n_per_class=d.n_per_class,
        super_groups=d.super_groups,
        intra_spread=d.intra_spread,
        inter_spread=d.inter_spread,
        cluster_std=d.cluster_std,
        n_test_per_class=d.n_test_per_class,
        seed=d.seed,
    )
    spec = cfg.noise_spec()
    train = inject_noise(blobs.train, build_transition(spec, d.num_classes), spec.seed)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_dataset_csv(files[0], [train], comment=f"config_hash={digest}")
        write_dataset_csv(files[1], [blobs.test], comment=f"config_hash={digest}")
        manifest = {
            "config_hash": digest,
            "data_seed": d.seed,
            "noise_seed": spec.seed,
            "noise": {"kind": spec.kind, "rate": spec.rate},
            "empirical_noise_rate": empirical_noise_rate(train),
            "n_train": len(train),
            "n_test": len(blobs.test),
            "num_classes": d.num_classes,
        }
        _write_json(files[2], manifest)
    except OSError as exc:
        raise RuntimeFailure(f"cannot write dataset to {out}: {exc.strerror}") from None
    log.info("wrote %d train / %d test rows to %s (noise rate %.4f)", len(train), len(blobs.test), out, manifest["empirical_noise_rate"])
    return manifest


def _load_data(cfg: ExperimentConfig, out: Path):
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise RuntimeFailure(f"no dataset in {out}; run `snscl gen` with the same config first")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("config_hash") != cfg.data_hash():
        raise ConfigError(f"dataset in {out} was generated from different data/noise settings; rerun gen")
    try:
        train = read_dataset_csv(out / "train.csv", cfg.data.num_classes)["train"]
        test = read_dataset_csv(out / "test.csv", cfg.data.num_classes)["test"]
    except (OSError, KeyError, ValueError) as exc:
        raise RuntimeFailure(f"cannot read dataset in {out}: {exc}") from None
    return train, test


def cmd_train(cfg: ExperimentConfig, out: Path, force: bool) -> dict:
    train, test = _load_data(cfg, out)
    label = run_label(cfg)
    run_dir = out / label
    digest = cfg.config_hash()
    metrics_path, summary_path = run_dir / "metrics.csv", run_dir / "summary.json"
    _guard([metrics_path, summary_path], digest, force)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "reliability.csv").unlink(missing_ok=True)
    except OSError as exc:
        raise RuntimeFailure(f"cannot create {run_dir}: {exc.strerror}") from None

    start = time.perf_counter()
    try:
        result = run(cfg.train, train, test, dump_dir=run_dir)
    except TrainingError as exc:
        raise RuntimeFailure(str(exc)) from exc
    wall = time.perf_counter() - start

    write_metrics_csv(metrics_path, result.history, comment=f"config_hash={digest}")
    summary = {
        "label": label,
        "best_acc": result.best_acc,
        "last_acc": result.last_acc,
        "warmup_acc": result.warmup_acc,
        "wall_time_s": round(wall, 3),
        "config_hash": digest,
        "data_hash": cfg.data_hash(),
        "config": cfg.to_dict(),
    }
    _write_json(summary_path, summary)
    log.info("%s: best %.4f last %.4f (%.1fs)", label, result.best_acc, result.last_acc, wall)
    summary["history"] = result.history
    return summary


def cmd_compare(cfg: ExperimentConfig, out: Path, force: bool) -> dict:
    if _header_hash(out / "manifest.json") != cfg.data_hash() or force:
        cmd_gen(cfg, out, force)
    digest = cfg.config_hash()
    _guard([out / "compare.csv", out / "compare.json"], digest, force)
    base_cfg = replace(cfg, label="", train=replace(cfg.train, snscl=False))
    sn_cfg = replace(cfg, label="", train=replace(cfg.train, snscl=True))
    base = cmd_train(base_cfg, out, force)
    sn = cmd_train(sn_cfg, out, force)

    with open(out / "compare.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n")
        fh.write("epoch,acc_baseline,acc_snscl\n")
        for a, b in zip(base["history"], sn["history"]):
            fh.write(f"{a.epoch},{a.test_acc:.6f},{b.test_acc:.6f}\n")
    report = {
        "config_hash": digest,
        "baseline": {"label": base["label"], "best_acc": base["best_acc"], "last_acc": base["last_acc"]},
        "snscl": {"label": sn["label"], "best_acc": sn["best_acc"], "last_acc": sn["last_acc"]},
    }
    _write_json(out / "compare.json", report)
    print(format_report(report))
    return report


def format_report(report: dict) -> str:
    lines = [f"{'method':<24}{'best':>8}{'last':>8}{'gap':>8}"]
    for key in ("baseline", "snscl"):
        r = report[key]
        lines.append(f"{r['label']:<24}{r['best_acc']:>8.4f}{r['last_acc']:>8.4f}{r['best_acc'] - r['last_acc']:>8.4f}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "gen":
            manifest = cmd_gen(cfg, args.out, args.force)
            print(f"empirical noise rate {manifest['empirical_noise_rate']:.4f}")
        elif args.command == "train":
            s = cmd_train(cfg, args.out, args.force)
            print(f"{s['label']}: best {s['best_acc']:.4f} last {s['last_acc']:.4f}")
        else:
            cmd_compare(cfg, args.out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
