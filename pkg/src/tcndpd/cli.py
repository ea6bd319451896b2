"""Command-line front end.

Every subcommand resolves one configuration tree (defaults < ``--config``
JSON file < command-line flags), runs, and writes ``manifest.json`` next to
its outputs. A manifest is itself a valid ``--config`` file, so
``tcndpd <command> --config run/manifest.json`` repeats the run.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .activations import ActivationKind
from .errors import ConfigError, TcnDpdError
from .export import (
    HISTORY_FILE,
    PLOT_KINDS,
    export_plots,
    load_history,
    load_report,
    save_history,
    save_report,
    write_json,
)
from .harness import (
    MetricsConfig,
    Stimulus,
    TrainConfig,
    arch_descriptor,
    evaluate_chain,
    ofdm_splits,
    pa_descriptor,
    sweep_activations,
    sweep_budgets,
    train_dpd,
    write_table,
)
from .metrics import nmse_db
from .pa import (
    GmpStructure,
    PaChain,
    gmp_apply,
    gmp_fit,
    load_pa_model,
    make_reference_pa,
    save_pa_model,
)
from .signals import (
    DatasetSchema,
    IqPair,
    OfdmConfig,
    load_iq_dataset,
    save_iq_dataset,
    split_dataset,
)
from .tcn import TcnArch, load_model, save_model, solve_width_for_budget

log = logging.getLogger("tcndpd")

OUTPUT_ENV = "TCNDPD_OUTPUT_DIR"
COMMANDS = ("gen-data", "fit-pa", "train-dpd", "eval", "sweep-act", "sweep-budget",
            "export-plots")


class UsageError(Exception):
    pass


def default_config() -> dict:
    arch = TcnArch()
    return {
        "seed": 0,
        "out": None,
        "ofdm": asdict(OfdmConfig()),
        "pa": {"kind": "reference", "difficulty": "moderate", "seed": 0, "path": None,
               "orders": [1, 3, 5, 7], "memory": 4, "lags": [1], "g_in": 1.0, "ridge": 0.0},
        "arch": {
            "n_dconv_layers": arch.n_dconv_layers, "kernel_size": arch.kernel_size,
            "dilation_base": arch.dilation_base, "hidden_channels": 8,
            "activation": arch.activation.label, "features": list(arch.features),
            "residual": arch.residual, "layer_residual": arch.layer_residual,
            "padding_mode": arch.padding_mode, "budget": 500,
        },
        "train": asdict(TrainConfig()),
        "metrics": asdict(MetricsConfig()),
        "data": {"path": None, "i_in": "I_in", "q_in": "Q_in", "i_out": "I_out",
                 "q_out": "Q_out", "sample_rate_hz": None, "bandwidth_hz": None,
                 "ratios": [0.6, 0.2, 0.2]},
        "dpd": {"path": None},
        "sweep": {"seeds": [0, 1, 2, 3, 4], "kinds": None, "budgets": [200, 500, 1000],
                  "n_jobs": 1},
        "export": {"run": None, "kind": "psd", "path": None, "split": "test"},
    }


# --- configuration ---------------------------------------------------------------

def _merge(base: dict, update: dict, where: str = "") -> None:
    for key, val in update.items():
        name = f"{where}{key}"
        if key not in base:
            raise UsageError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise UsageError(f"config key {name!r} must be a table")
            _merge(base[key], val, name + ".")
        else:
            base[key] = val


def _set_path(tree: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise UsageError(f"unknown config key {dotted!r}")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], dict):
        raise UsageError(f"unknown config key {dotted!r}")
    try:
        node[keys[-1]] = json.loads(raw)
    except json.JSONDecodeError:
        node[keys[-1]] = raw


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    # a run manifest carries the resolved tree under "config"
    if "manifest_version" in data:
        data = data["config"]
    return data


# flag name -> config path; flags override the file
FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "epochs": "train.epochs",
    "lr": "train.lr",
    "activation": "arch.activation",
    "budget": "arch.budget",
    "width": "arch.hidden_channels",
    "pa": "pa.path",
    "pa_kind": "pa.kind",
    "difficulty": "pa.difficulty",
    "data": "data.path",
    "dpd": "dpd.path",
    "n_symbols": "ofdm.n_symbols",
    "seeds": "sweep.seeds",
    "budgets": "sweep.budgets",
    "jobs": "sweep.n_jobs",
    "run": "export.run",
    "kind": "export.kind",
    "path": "export.path",
    "split": "export.split",
}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = default_config()
    if args.config:
        _merge(cfg, load_config_file(args.config))
    for flag, key in FLAG_KEYS.items():
        val = getattr(args, flag, None)
        if val is not None:
            _set_path(cfg, key, json.dumps(val))
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        _set_path(cfg, key.strip(), raw.strip())
    if getattr(args, "width", None) is not None and getattr(args, "budget", None) is None:
        cfg["arch"]["budget"] = None
    if cfg["out"] is None:
        cfg["out"] = os.environ.get(OUTPUT_ENV, "runs")
    return cfg


def _section(cls, tree: dict, **extra):
    try:
        return cls(**{**tree, **extra})
    except TypeError as exc:
        raise ConfigError(f"bad {cls.__name__} settings: {exc}") from None


def build_ofdm(cfg: dict) -> OfdmConfig:
    return _section(OfdmConfig, cfg["ofdm"])


def build_train(cfg: dict) -> TrainConfig:
    return _section(TrainConfig, cfg["train"], seed=cfg["seed"])


def build_metrics(cfg: dict) -> MetricsConfig:
    return _section(MetricsConfig, cfg["metrics"])


def build_arch(cfg: dict) -> TcnArch:
    a = dict(cfg["arch"])
    budget = a.pop("budget")
    width = a.pop("hidden_channels")
    a["activation"] = ActivationKind.parse(a["activation"])
    a["features"] = tuple(a["features"])
    arch = _section(TcnArch, a, hidden_channels=tuple(width) if isinstance(width, list) else width)
    if budget:
        arch = solve_width_for_budget(int(budget), arch).apply(arch)
    return arch


def build_structure(cfg: dict) -> GmpStructure:
    p = cfg["pa"]
    return GmpStructure(tuple(p["orders"]), int(p["memory"]), tuple(p["lags"]))


def build_pa(cfg: dict) -> PaChain:
    p = cfg["pa"]
    kind = p["kind"]
    if kind == "identity":
        return PaChain(None, g_in=float(p["g_in"]))
    if kind == "file" or (kind == "reference" and p["path"]):
        if not p["path"]:
            raise ConfigError("pa.kind 'file' needs pa.path")
        return PaChain(load_pa_model(p["path"]), g_in=float(p["g_in"]))
    if kind == "reference":
        model = make_reference_pa(int(p["seed"]), p["difficulty"], build_structure(cfg))
        return PaChain(model, g_in=float(p["g_in"]))
    raise ConfigError(f"pa.kind must be reference, file or identity, got {kind!r}")


def _schema(cfg: dict) -> DatasetSchema:
    d = cfg["data"]
    fs = d["sample_rate_hz"] or build_ofdm(cfg).fs
    return DatasetSchema(d["i_in"], d["q_in"], d["i_out"], d["q_out"], float(fs))


def load_dataset_splits(cfg: dict, min_length: int = 0) -> dict[str, IqPair | None]:
    pair = load_iq_dataset(cfg["data"]["path"], _schema(cfg))
    return split_dataset(pair, tuple(cfg["data"]["ratios"]), min_length=min_length)


def build_stimuli(cfg: dict, min_length: int = 0) -> dict[str, Stimulus]:
    """Train/val/test drive signals: dataset inputs if ``data.path`` is set, else OFDM."""
    if not cfg["data"]["path"]:
        ofdm = build_ofdm(cfg)
        return ofdm_splits(replace(ofdm, seed=ofdm.seed + cfg["seed"]))
    bw = cfg["data"]["bandwidth_hz"] or build_ofdm(cfg).occupied_bw_hz
    parts = load_dataset_splits(cfg, min_length)
    out = {}
    for name, pair in parts.items():
        if pair is not None:
            out[name] = Stimulus(pair.x, occupied_bw_hz=float(bw))
    if "train" not in out:
        raise ConfigError("dataset split left no training data")
    out.setdefault("val", out["train"])
    out.setdefault("test", out["val"])
    return out


def _out_dir(cfg: dict) -> Path:
    d = Path(cfg["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _manifest(command: str, cfg: dict, results: dict) -> dict:
    return {"manifest_version": 1, "tool": "tcndpd", "version": __version__,
            "command": command, "config": cfg, "results": results}


# --- subcommands -----------------------------------------------------------------

def cmd_gen_data(cfg: dict) -> dict:
    out = _out_dir(cfg)
    pa = build_pa(cfg)
    stimuli = build_stimuli(cfg)
    schema = _schema(cfg)
    files = {}
    for name, stim in stimuli.items():
        y = pa(stim.signal)
        path = out / f"{name}.csv"
        save_iq_dataset(IqPair(stim.signal, y), path, schema)
        files[name] = str(path)
    if pa.model is not None:
        save_pa_model(pa.model, out / "pa.txt")
        files["pa"] = str(out / "pa.txt")
    return {"files": files, "pa": pa_descriptor(pa)}


def cmd_fit_pa(cfg: dict) -> dict:
    if not cfg["data"]["path"]:
        raise ConfigError("fit-pa needs a dataset (--data or data.path)")
    out = _out_dir(cfg)
    parts = load_dataset_splits(cfg)
    train = parts["train"]
    model = gmp_fit(train.x, train.y, build_structure(cfg), ridge=float(cfg["pa"]["ridge"]))
    save_pa_model(model, out / "pa.txt")
    res = {"pa_path": str(out / "pa.txt"), "n_coeffs": model.structure.n_coeffs,
           "train_nmse_db": nmse_db(train.y, gmp_apply(model, train.x))}
    # held-out segments start mid-stream; skip samples whose memory reaches before the cut
    skip = model.structure.history
    for name in ("val", "test"):
        part = parts[name]
        if part is not None and len(part) > skip:
            res[f"{name}_nmse_db"] = nmse_db(part.y.samples[skip:],
                                             gmp_apply(model, part.x.samples)[skip:])
    return res


def cmd_train_dpd(cfg: dict) -> dict:
    out = _out_dir(cfg)
    pa = build_pa(cfg)
    arch = build_arch(cfg)
    train_cfg = build_train(cfg)
    metrics = build_metrics(cfg)
    stimuli = build_stimuli(cfg, min_length=arch.receptive_field)
    model, rec = train_dpd(pa, stimuli["train"], arch, train_cfg, stimuli["val"], metrics)
    rec.final["test"] = evaluate_chain(model, pa, stimuli["test"], metrics, train_cfg.target_gain)
    baseline = evaluate_chain(None, pa, stimuli["test"], metrics, train_cfg.target_gain)
    save_model(model, out / "model.txt")
    save_history(rec.history, out / HISTORY_FILE)
    for split, rep in rec.final.items():
        save_report(rep, out, prefix=f"{split}_")
    save_report(baseline, out, prefix="baseline_")
    res = rec.manifest()
    res["baseline_test"] = baseline.scalars()
    res["model_path"] = str(out / "model.txt")
    return res


def cmd_eval(cfg: dict) -> dict:
    out = _out_dir(cfg)
    pa = build_pa(cfg)
    dpd = load_model(cfg["dpd"]["path"]) if cfg["dpd"]["path"] else None
    stimuli = build_stimuli(cfg)
    split = cfg["export"]["split"]
    rep = evaluate_chain(dpd, pa, stimuli[split], build_metrics(cfg),
                         float(cfg["train"]["target_gain"]))
    save_report(rep, out, prefix=f"{split}_")
    return {"split": split, "report": rep.scalars(),
            "dpd": arch_descriptor(dpd.arch) if dpd else "identity", "pa": pa_descriptor(pa)}


def _sweep_inputs(cfg: dict):
    stimuli = build_stimuli(cfg)
    return dict(pa=build_pa(cfg), cfg=build_train(cfg), stimulus=stimuli["train"],
                val=stimuli["val"], test=stimuli["test"], metrics=build_metrics(cfg),
                n_jobs=int(cfg["sweep"]["n_jobs"]))


def cmd_sweep_act(cfg: dict) -> dict:
    out = _out_dir(cfg)
    arch = build_arch(cfg)
    kinds = cfg["sweep"]["kinds"]
    rows = sweep_activations(kinds, cfg["sweep"]["seeds"], arch, **_sweep_inputs(cfg))
    write_table(rows, out / "sweep_activations.csv")
    return {"table": str(out / "sweep_activations.csv"), "rows": len(rows),
            "arch": arch_descriptor(arch)}


def cmd_sweep_budget(cfg: dict) -> dict:
    out = _out_dir(cfg)
    template = build_arch({**cfg, "arch": {**cfg["arch"], "budget": None}})
    rows = sweep_budgets(cfg["sweep"]["budgets"], cfg["sweep"]["seeds"], template,
                         **_sweep_inputs(cfg))
    write_table(rows, out / "sweep_budgets.csv")
    return {"table": str(out / "sweep_budgets.csv"), "rows": len(rows)}


def cmd_export_plots(cfg: dict) -> dict:
    e = cfg["export"]
    if not e["run"]:
        raise ConfigError("export-plots needs a run directory (--run)")
    run = Path(e["run"])
    kind = e["kind"]
    if kind == "learning-curve":
        if not (run / HISTORY_FILE).exists():
            raise ConfigError(f"{run} has no training history ({HISTORY_FILE})")
        source = load_history(run / HISTORY_FILE)
    else:
        source = load_report(run, prefix=f"{e['split']}_")
    path = Path(e["path"] or (_out_dir(cfg) / f"{kind}.csv"))
    n = export_plots(source, kind, path)
    return {"path": str(path), "rows": n, "kind": kind}


HANDLERS = {
    "gen-data": cmd_gen_data,
    "fit-pa": cmd_fit_pa,
    "train-dpd": cmd_train_dpd,
    "eval": cmd_eval,
    "sweep-act": cmd_sweep_act,
    "sweep-budget": cmd_sweep_budget,
    "export-plots": cmd_export_plots,
}


# --- argument parsing --------------------------------------------------------------

def _json_list(text: str):
    try:
        v = json.loads(text)
    except json.JSONDecodeError:
        v = [int(t) for t in text.split(",") if t.strip()]
    if isinstance(v, int):
        v = [v]
    if not isinstance(v, list):
        raise argparse.ArgumentTypeError("expected a list, e.g. 0,1,2")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a previous run's manifest.json)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config entry, e.g. --set train.lr=1e-3")
    common.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--pa", help="PA model file written by fit-pa or gen-data")
    model.add_argument("--pa-kind", choices=("reference", "file", "identity"))
    model.add_argument("--difficulty", choices=("mild", "moderate", "severe"))
    model.add_argument("--data", help="OpenDPD-style CSV dataset (I_in,Q_in,I_out,Q_out)")
    model.add_argument("--n-symbols", type=int, help="OFDM symbols per stimulus frame")

    train = argparse.ArgumentParser(add_help=False)
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--activation")
    train.add_argument("--budget", type=int, help="parameter budget for the width solver")
    train.add_argument("--width", type=int, help="uniform hidden width (disables the budget)")

    sweep = argparse.ArgumentParser(add_help=False)
    sweep.add_argument("--seeds", type=_json_list, help="seed list, e.g. 0,1,2")
    sweep.add_argument("--jobs", type=int, help="worker processes")

    parser = argparse.ArgumentParser(prog="tcndpd", description="TCN digital predistortion toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    sub.add_parser("gen-data", parents=[common, model],
                   help="write OFDM stimulus/PA-output datasets")
    sub.add_parser("fit-pa", parents=[common, model], help="fit a GMP to a dataset")
    sub.add_parser("train-dpd", parents=[common, model, train],
                   help="train a TCN predistorter against the frozen PA")
    p = sub.add_parser("eval", parents=[common, model],
                       help="score DPD + PA on a stimulus split")
    p.add_argument("--dpd", help="trained model file (omit for the identity DPD)")
    p.add_argument("--split", choices=("train", "val", "test"))
    sub.add_parser("sweep-act", parents=[common, model, train, sweep],
                   help="activation sweep table")
    p = sub.add_parser("sweep-budget", parents=[common, model, train, sweep],
                       help="parameter-budget sweep table")
    p.add_argument("--budgets", type=_json_list, help="budget list, e.g. 200,500,1000")
    p = sub.add_parser("export-plots", parents=[common], help="plot-ready CSV from a run")
    p.add_argument("--run", help="run directory written by train-dpd or eval")
    p.add_argument("--kind", choices=PLOT_KINDS)
    p.add_argument("--path", help="output CSV (default <out>/<kind>.csv)")
    p.add_argument("--split", choices=("train", "val", "test", "baseline"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"tcndpd: error: {exc}", file=sys.stderr)
        return 2
    command = args.command
    try:
        results = HANDLERS[command](copy.deepcopy(cfg))
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        # export-plots often writes into the run it reads; keep that run's manifest intact
        name = "export_manifest.json" if command == "export-plots" else "manifest.json"
        write_json(_manifest(command, cfg, results), out / name)
    except (TcnDpdError, ValueError, OSError) as exc:
        print(f"tcndpd {command}: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(results, indent=2, sort_keys=True, default=_plain))
    return 0


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return str(v)


if __name__ == "__main__":
    sys.exit(main())
