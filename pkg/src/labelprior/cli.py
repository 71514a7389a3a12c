"""Command-line interface.

Five subcommands: `synth`, `build-prior`, `train`, `eval`, `inspect-graph`.
Every hyperparameter is a flag mirroring a flat `key = value` config-file
entry; flags override file values, and each run prints its fully resolved
config so it can be reproduced from the log. Report-producing commands
render a matplotlib figure next to their delimited output unless --no-fig
is given. Exit codes: 0 success, 1 I/O or numeric failure, 2 usage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import plots
from .errors import LabelPriorError, ParseError
from .evaluation import ScoreTable, mean_ap, per_class_ap, write_eval_report
from .losses import LossWeights
from .model import load_checkpoint, save_checkpoint
from .prior import PriorGraph, build_prior, dynamic_graph, identity_graph, read_graph, write_graph
from .training import TrainConfig, train, predict_scores, write_trainlog


class UsageError(Exception):
    """Bad command line or config file contents (exit code 2)."""


_BOOL_STRINGS = {
    "true": True,
    "1": True,
    "yes": True,
    "on": True,
    "false": False,
    "0": False,
    "no": False,
    "off": False,
}


def _bool(text: str) -> bool:
    try:
        return _BOOL_STRINGS[text.strip().lower()]
    except KeyError:
        raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}") from None


SYNTH_KEYS = {
    "seed": int,
    "out": str,
    "n_labels": int,
    "dim": int,
    "n_clusters": int,
    "n_train": int,
    "n_test": int,
    "noise": float,
    "p_in": float,
    "p_out": float,
    "sigma_weak": float,
    "sigma_strong": float,
    "dropout_strong": float,
    "mask": str,
    "mask_ratio": float,
}
SYNTH_DEFAULTS = {
    "seed": None,
    "out": None,
    "n_labels": 20,
    "dim": 64,
    "n_clusters": 4,
    "n_train": 2000,
    "n_test": 500,
    "noise": 0.5,
    "p_in": 0.5,
    "p_out": 0.02,
    "sigma_weak": 0.05,
    "sigma_strong": 0.2,
    "dropout_strong": 0.2,
    "mask": "single",
    "mask_ratio": 0.5,
}

GRAPH_KEYS = {"emb": str, "K": int, "s": float, "tau_prime": float, "out": str}
GRAPH_DEFAULTS = {"emb": None, "K": 5, "s": 0.2, "tau_prime": 1.0, "out": None}

TRAIN_KEYS = {
    "emb": str,
    "train_data": str,
    "test_data": str,
    "outdir": str,
    "seed": int,
    "epochs": int,
    "batch_size": int,
    "learning_rate": float,
    "beta1": float,
    "beta2": float,
    "eps_adam": float,
    "graph_mode": str,
    "lambda_cst": float,
    "lambda_dstl": float,
    "alpha": float,
    "beta": float,
    "margin": float,
    "k_conf": int,
    "t_base": float,
    "t_min": float,
    "beta_ramp_epochs": int,
    "gcn_layers": int,
    "tau": float,
    "leaky_slope": float,
    "K": int,
    "s": float,
    "tau_prime": float,
    "enable_sam": _bool,
    "enable_cst": _bool,
    "enable_dstl": _bool,
}
TRAIN_DEFAULTS = {
    "emb": None,
    "train_data": None,
    "test_data": None,
    "outdir": None,
    "seed": None,
    "epochs": 30,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps_adam": 1e-8,
    "graph_mode": "static",
    "lambda_cst": 0.125,
    "lambda_dstl": 0.125,
    "alpha": 2.0,
    "beta": 0.6,
    "margin": 1.0,
    "k_conf": 3,
    "t_base": 0.9,
    "t_min": 0.5,
    "beta_ramp_epochs": 0,
    "gcn_layers": 3,
    "tau": 0.2,
    "leaky_slope": 0.2,
    "K": 5,
    "s": 0.2,
    "tau_prime": 1.0,
    "enable_sam": True,
    "enable_cst": True,
    "enable_dstl": True,
}

EVAL_KEYS = {"checkpoint": str, "data": str, "graph": str, "out": str}
EVAL_DEFAULTS = {"checkpoint": None, "data": None, "graph": None, "out": None}


def parse_config_file(path, keys: dict) -> dict:
    """Flat `key = value` lines; blank lines and #-comments ignored.
    Unknown keys are rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"expected `key = value`, got {line!r}", line=lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in keys:
                raise UsageError(f"unknown config key {key!r} at line {lineno} of {path}")
            caster = keys[key]
            try:
                values[key] = caster(value)
            except (ValueError, argparse.ArgumentTypeError):
                raise ParseError(
                    f"bad value for {key!r}: {value!r}", line=lineno
                ) from None
    return values


def _merge(defaults: dict, keys: dict, args: argparse.Namespace) -> dict:
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        merged.update(parse_config_file(config_path, keys))
    for key in keys:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            merged[key] = flag_value
    return merged


def _print_resolved(command: str, cfg: dict, extra: dict | None = None) -> None:
    print(f"resolved config ({command}):")
    items = dict(cfg)
    if extra:
        items.update(extra)
    for key in sorted(items):
        value = items[key]
        if isinstance(value, bool):
            value = "true" if value else "false"
        print(f"  {key} = {value}")


def _require(cfg: dict, *names: str) -> None:
    for name in names:
        if cfg.get(name) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _merge(SYNTH_DEFAULTS, SYNTH_KEYS, args)
    _require(cfg, "seed", "out")
    if cfg["mask"] not in ("single", "partial", "none"):
        raise UsageError(f"unknown mask mode {cfg['mask']!r}")
    _print_resolved("synth", cfg)
    train_ds, test_ds, emb, cooc = data_mod.synth_experiment(
        n_train=cfg["n_train"],
        n_test=cfg["n_test"],
        seed=cfg["seed"],
        n_labels=cfg["n_labels"],
        dim=cfg["dim"],
        n_clusters=cfg["n_clusters"],
        noise=cfg["noise"],
        p_in=cfg["p_in"],
        p_out=cfg["p_out"],
        sigma_weak=cfg["sigma_weak"],
        sigma_strong=cfg["sigma_strong"],
        dropout_strong=cfg["dropout_strong"],
    )
    if cfg["mask"] == "single":
        train_ds = data_mod.mask_dataset_single_positive(train_ds, cfg["seed"] + 1)
    elif cfg["mask"] == "partial":
        train_ds = data_mod.mask_dataset_partial(train_ds, cfg["mask_ratio"], cfg["seed"] + 1)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    data_mod.write_embeddings(out / "embeddings.txt", emb)
    data_mod.write_dataset(out / "train.txt", train_ds)
    data_mod.write_dataset(out / "test.txt", test_ds)
    write_graph(out / "cooccurrence.txt", cooc, emb.names)
    print(f"wrote embeddings, train ({len(train_ds)}), test ({len(test_ds)}) to {out}")
    return 0


def cmd_build_prior(args) -> int:
    cfg = _merge(GRAPH_DEFAULTS, GRAPH_KEYS, args)
    _require(cfg, "emb", "out")
    _print_resolved("build-prior", cfg)
    emb = data_mod.read_embeddings(cfg["emb"])
    graph = build_prior(emb, cfg["K"], cfg["s"], cfg["tau_prime"])
    write_graph(cfg["out"], graph.adjacency, emb.names)
    if not args.no_fig:
        fig_path = Path(cfg["out"]).with_suffix(".png")
        plots.save_graph_heatmap(graph.adjacency, emb.names, fig_path)
        print(f"wrote {cfg['out']} and {fig_path}")
    else:
        print(f"wrote {cfg['out']}")
    return 0


def cmd_inspect_graph(args) -> int:
    cfg = _merge(GRAPH_DEFAULTS, GRAPH_KEYS, args)
    _require(cfg, "emb", "out")
    _print_resolved("inspect-graph", cfg)
    emb = data_mod.read_embeddings(cfg["emb"])
    graph = build_prior(emb, cfg["K"], cfg["s"], cfg["tau_prime"])
    adj = graph.adjacency
    write_graph(cfg["out"], adj, emb.names)
    nnz = (adj != 0.0).sum(axis=1)
    sums = adj.sum(axis=1)
    print(f"labels: {emb.n_labels}")
    print(f"nonzeros per row: min {int(nnz.min())}, max {int(nnz.max())}")
    print(f"row sums: min {sums.min():.12f}, max {sums.max():.12f}")
    off = adj.copy()
    np.fill_diagonal(off, 0.0)
    flat = np.argsort(-off, axis=None, kind="stable")[:5]
    print("strongest off-diagonal edges:")
    for pos in flat:
        i, j = divmod(int(pos), emb.n_labels)
        if off[i, j] > 0.0:
            print(f"  {emb.names[i]} -> {emb.names[j]}: {off[i, j]:.6f}")
    if not args.no_fig:
        fig_path = Path(cfg["out"]).with_suffix(".png")
        plots.save_graph_heatmap(adj, emb.names, fig_path)
        print(f"wrote {cfg['out']} and {fig_path}")
    else:
        print(f"wrote {cfg['out']}")
    return 0


def cmd_train(args) -> int:
    cfg = _merge(TRAIN_DEFAULTS, TRAIN_KEYS, args)
    _require(cfg, "seed", "emb", "train_data", "test_data", "outdir")
    _print_resolved("train", cfg)
    emb = data_mod.read_embeddings(cfg["emb"])
    train_ds = data_mod.read_dataset(cfg["train_data"])
    test_ds = data_mod.read_dataset(cfg["test_data"])
    weights = LossWeights(
        lambda_cst=cfg["lambda_cst"],
        lambda_dstl=cfg["lambda_dstl"],
        alpha=cfg["alpha"],
        beta=cfg["beta"],
        margin=cfg["margin"],
        k_conf=cfg["k_conf"],
    )
    config = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        eps_adam=cfg["eps_adam"],
        graph_mode=cfg["graph_mode"],
        weights=weights,
        seed=cfg["seed"],
        enable_sam=cfg["enable_sam"],
        enable_cst=cfg["enable_cst"],
        enable_dstl=cfg["enable_dstl"],
        gcn_layers=cfg["gcn_layers"],
        tau=cfg["tau"],
        leaky_slope=cfg["leaky_slope"],
        graph_k=cfg["K"],
        graph_s=cfg["s"],
        graph_tau_prime=cfg["tau_prime"],
        t_base=cfg["t_base"],
        t_min=cfg["t_min"],
        beta_ramp_epochs=cfg["beta_ramp_epochs"],
    )
    params, log = train(config, train_ds, test_ds, emb)
    for r in log:
        print(
            f"epoch {r.epoch}/{config.epochs} loss {r.loss_total:.4f} "
            f"test mAP {r.test_map:.4f}"
        )
    outdir = Path(cfg["outdir"])
    outdir.mkdir(parents=True, exist_ok=True)
    write_trainlog(outdir / "trainlog.csv", log)
    save_checkpoint(outdir / "model.txt", params)
    if config.graph_mode == "dynamic":
        final_graph = dynamic_graph(
            params.label_table, config.graph_k, config.graph_s, config.graph_tau_prime
        )
    elif config.graph_mode == "none":
        final_graph = identity_graph(emb.n_labels)
    else:
        final_graph = build_prior(emb, config.graph_k, config.graph_s, config.graph_tau_prime)
    write_graph(outdir / "graph.txt", final_graph.adjacency, emb.names)
    if not args.no_fig:
        plots.save_training_curves(log, outdir / "curves.png")
    print(f"final test mAP {log[-1].test_map:.4f}; outputs in {outdir}")
    return 0


def cmd_eval(args) -> int:
    cfg = _merge(EVAL_DEFAULTS, EVAL_KEYS, args)
    _require(cfg, "checkpoint", "data", "out")
    _print_resolved("eval", cfg)
    params = load_checkpoint(cfg["checkpoint"])
    ds = data_mod.read_dataset(cfg["data"])
    if ds.n_labels != params.n_labels or ds.dim != params.dim:
        raise UsageError(
            f"checkpoint is {params.n_labels}x{params.dim} but dataset is "
            f"{ds.n_labels}x{ds.dim}"
        )
    if cfg["graph"]:
        adjacency, names = read_graph(cfg["graph"])
        if adjacency.shape[0] != params.n_labels:
            raise UsageError("graph size does not match the checkpoint")
        graph = PriorGraph(adjacency, k=params.n_labels - 1, s=0.5, tau_prime=1.0)
    else:
        graph = identity_graph(params.n_labels)
    probs = predict_scores(params, graph, ds.f_base, enable_sam=True)
    gt = ds.y_full if ds.y_full is not None else ds.y
    table = ScoreTable(probs, (gt == 1).astype(np.int8))
    per_class = per_class_ap(table)
    map_value = mean_ap(table)
    write_eval_report(cfg["out"], ds.label_names, per_class, map_value)
    if not args.no_fig:
        fig_path = Path(cfg["out"]).with_suffix(".png")
        plots.save_class_ap_chart(ds.label_names, per_class, map_value, fig_path)
    skipped = [name for name, ap in zip(ds.label_names, per_class) if ap is None]
    if skipped:
        print(f"skipped classes without positives: {', '.join(skipped)}")
    print(f"mAP {map_value:.6f}; report written to {cfg['out']}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_flag(sub) -> None:
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument(
        "--no-fig", action="store_true", help="skip the matplotlib figure output"
    )


def _add_keyed_flags(sub, keys: dict, skip=()) -> None:
    for key, caster in keys.items():
        if key in skip:
            continue
        flag = "--" + key.replace("_", "-") if key != "K" else "--K"
        sub.add_argument(flag, dest=key, type=caster, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelprior",
        description="Prior-graph guided multi-label training on precomputed features",
    )
    subs = parser.add_subparsers(dest="command")

    sub = subs.add_parser("synth", help="generate a synthetic clustered dataset")
    _add_config_flag(sub)
    _add_keyed_flags(sub, SYNTH_KEYS)
    sub.set_defaults(func=cmd_synth)

    sub = subs.add_parser("build-prior", help="build the label prior graph")
    _add_config_flag(sub)
    _add_keyed_flags(sub, GRAPH_KEYS)
    sub.set_defaults(func=cmd_build_prior)

    sub = subs.add_parser("inspect-graph", help="build, export and summarize a prior graph")
    _add_config_flag(sub)
    _add_keyed_flags(sub, GRAPH_KEYS)
    sub.set_defaults(func=cmd_inspect_graph)

    sub = subs.add_parser("train", help="train a model on a dataset")
    _add_config_flag(sub)
    _add_keyed_flags(sub, TRAIN_KEYS)
    sub.set_defaults(func=cmd_train)

    sub = subs.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _add_config_flag(sub)
    _add_keyed_flags(sub, EVAL_KEYS)
    sub.set_defaults(func=cmd_eval)

    return parser


def dispatch(argv) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error [{args.command}]: {exc}", file=sys.stderr)
        return 2
    except (LabelPriorError, OSError) as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
