"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from fpl import __version__
from fpl.config import RunConfig
from fpl.data import (
    dataset_files,
    filter_and_binarize,
    generate_synthetic,
    ingest,
    load_dataset,
    save_dataset,
    temporal_split,
    validation_split,
    write_interactions,
)
from fpl.errors import ConfigError, FPLError, ParseError
from fpl.federation import load_checkpoint, save_checkpoint
from fpl.metrics import paired_t_test, write_report, write_significance
from fpl import runner

log = logging.getLogger("fpl")

CHECKPOINT_NAME = "checkpoint.fpl"


class UsageError(Exception):
    pass


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, params: dict, inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "tool": "fpl",
        "version": __version__,
        "command": command,
        "params": params,
        "inputs": {str(p): _digest(p) for p in inputs},
        "outputs": outputs,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_tsv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(r.get(k)) for k in header])


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} {p} does not exist")
    return p


def _load_config(args, **overrides) -> RunConfig:
    cfg = RunConfig.load(_require_file(args.config, "config file")) if args.config else RunConfig()
    pairs = []
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs.append((k.strip(), v.strip(), None))
    if pairs:
        extra = RunConfig.from_pairs(pairs, "--set")
        overrides = {**{k: getattr(extra, k) for k in extra.explicit}, **overrides}
    return cfg.with_overrides(**overrides)


def _out_dir(path: str | None) -> Path:
    if not path:
        raise UsageError("missing --out")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> None:
    records = generate_synthetic(args.users, args.items, args.factors, args.density, args.skew, args.seed,
                                 args.signal, args.intercept)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_interactions(out, records)
    print(f"wrote {len(records)} records to {out}")


def cmd_split(args) -> None:
    src = _require_file(args.input, "input")
    out = _out_dir(args.out)
    records = ingest(src)
    kept = filter_and_binarize(records, args.min_interactions)
    dataset = temporal_split(kept, args.train_frac)
    if args.with_validation:
        dataset = validation_split(dataset, args.train_frac)
    params = {
        "input": str(src),
        "train_frac": args.train_frac,
        "min_interactions": args.min_interactions,
        "with_validation": args.with_validation,
        "raw_records": len(records),
        "kept_records": len(kept),
    }
    save_dataset(dataset, out, params)
    c = dataset.characteristics()
    print(f"users={c['users']} items={c['items']} x_plus={c['x_plus']} "
          f"x_plus/users={c['x_plus_per_user']:.2f} x_plus/items={c['x_plus_per_item']:.2f} "
          f"density={c['density_pct']:.5f}%")


def cmd_train(args) -> None:
    cfg = _load_config(args, mode=args.mode, dataset=args.dataset, out=args.out)
    ds_dir = _require_file(cfg.dataset, "dataset")
    out = _out_dir(cfg.out)
    dataset = load_dataset(ds_dir)
    result = runner.train(cfg, dataset)
    tmp = out / (CHECKPOINT_NAME + ".tmp")
    save_checkpoint(tmp, result.checkpoint)
    os.replace(tmp, out / CHECKPOINT_NAME)
    header = ["epoch", "rounds", "steps", "objective", "val_f1"]
    header = [h for h in header if any(h in r for r in result.history)] or ["epoch"]
    _write_tsv(out / "history.tsv", header, result.history)
    (out / "config.txt").write_text(cfg.dump(), encoding="utf-8")
    _write_manifest(out, "train", {"config": cfg.dump().splitlines()}, dataset_files(ds_dir),
                    [CHECKPOINT_NAME, "history.tsv", "config.txt"])


def cmd_evaluate(args) -> None:
    ds_dir = _require_file(args.dataset, "dataset")
    paths = [_require_file(p, "checkpoint") for p in args.checkpoint]
    names = args.names.split(",") if args.names else [p.parent.name if p.name == CHECKPOINT_NAME else p.stem for p in paths]
    if len(names) != len(paths):
        raise UsageError("--names must list one name per checkpoint")
    cutoffs = [int(c) for c in args.cutoffs.split(",")]
    out = _out_dir(args.out)
    dataset = load_dataset(ds_dir)
    if any(c > dataset.num_items for c in cutoffs):
        log.warning("cutoff larger than the catalog (%d items); lists are truncated", dataset.num_items)
    ckpts = [load_checkpoint(p) for p in paths]
    reports = {}
    rows = []
    for name, ckpt in zip(names, ckpts):
        for c in cutoffs:
            rep = runner.evaluate_checkpoint(ckpt, dataset, c)
            reports[name, c] = rep
            for metric, value in rep.metrics().items():
                rows.append((name, ds_dir.name, c, metric, value))
    write_report(out / "report.tsv", rows)
    outputs = ["report.tsv"]
    if len(ckpts) >= 2:
        sig = []
        for c in cutoffs:
            for metric in ("P", "R", "F1"):
                for a in range(len(names)):
                    for b in range(a + 1, len(names)):
                        ra, rb = reports[names[a], c], reports[names[b], c]
                        sig.append((c, metric, names[a], names[b], paired_t_test(ra.per_user(metric), rb.per_user(metric))))
        write_significance(out / "significance.tsv", sig)
        outputs.append("significance.tsv")
    _write_manifest(out, "evaluate", {"names": names, "cutoffs": cutoffs},
                    dataset_files(ds_dir) + paths, outputs)


def cmd_sweep_pi(args) -> None:
    cfg = _load_config(args, mode=args.mode, dataset=args.dataset, out=args.out)
    grid = runner.parse_grid(args.pi_grid)
    ds_dir = _require_file(cfg.dataset, "dataset")
    out = _out_dir(cfg.out)
    dataset = load_dataset(ds_dir)
    rows = runner.sweep_pi(cfg, dataset, grid)
    _write_tsv(out / "sweep.tsv", ["pi", "P", "R", "F1", "IC", "G"], rows)
    _write_manifest(out, "sweep-pi", {"pi_grid": args.pi_grid, "config": cfg.dump().splitlines()},
                    dataset_files(ds_dir), ["sweep.tsv"])


def cmd_grid_search(args) -> None:
    cfg = _load_config(args, mode=args.mode, dataset=args.dataset, out=args.out)
    if "mode" not in cfg.explicit:
        cfg = cfg.with_overrides(mode="bpr")
    alphas = [float(a) for a in args.alphas.split(",")]
    factors = [int(f) for f in args.factors.split(",")]
    ds_dir = _require_file(cfg.dataset, "dataset")
    out = _out_dir(cfg.out)
    dataset = load_dataset(ds_dir)
    rows = runner.grid_search(cfg, dataset, alphas, factors)
    header = ["rank", "alpha", "factors", "reg_user", "reg_pos_item", "reg_neg_item", "P", "R", "F1"]
    _write_tsv(out / "grid.tsv", header, rows)
    best = rows[0]
    best_cfg = cfg.with_overrides(learning_rate=best["alpha"], latent_dim=best["factors"])
    (out / "best.txt").write_text(best_cfg.dump(), encoding="utf-8")
    _write_manifest(out, "grid-search", {"alphas": alphas, "factors": factors, "config": cfg.dump().splitlines()},
                    dataset_files(ds_dir), ["grid.tsv", "best.txt"])
    print(f"best: alpha={best['alpha']} factors={best['factors']} val_F1={best['F1']:.5f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpl", description="Federated pair-wise top-N recommendation.")
    parser.add_argument("--version", action="version", version=f"fpl {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic check-in log")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--factors", type=int, default=8)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--skew", type=float, default=1.0)
    p.add_argument("--signal", type=float, default=4.0)
    p.add_argument("--intercept", type=float, default=-6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="filter a TSV log and split it per user in time")
    p.add_argument("input")
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--min-interactions", type=int, default=20)
    p.add_argument("--with-validation", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    def common(p, mode_default=None):
        p.add_argument("--config")
        p.add_argument("--dataset")
        p.add_argument("--mode", choices=["sfpl", "pfpl", "custom", "bpr", "toppop", "random"], default=mode_default)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="compute top-N metrics for checkpoints")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--names")
    p.add_argument("--dataset", required=True)
    p.add_argument("--cutoffs", default="10")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep-pi", help="train and evaluate over a grid of disclosure probabilities")
    common(p)
    p.add_argument("--pi-grid", default="0.0:1.0:0.1")
    p.set_defaults(func=cmd_sweep_pi)

    p = sub.add_parser("grid-search", help="select learning rate and latent factors on validation F1")
    common(p)
    p.add_argument("--alphas", default="0.005,0.05,0.5")
    p.add_argument("--factors", default="10,20,50")
    p.set_defaults(func=cmd_grid_search)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="fpl: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"fpl: error: {exc}", file=sys.stderr)
        return 2
    except FPLError as exc:
        print(f"fpl: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
