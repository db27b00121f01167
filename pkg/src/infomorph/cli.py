"""``infomorph`` command line: train, eval, pid, search, ablate.

Exit codes: 0 success, 1 configuration error, 2 data error (missing or
malformed dataset, checkpoint or CSV), 3 numerical failure (non-finite goal
or gradient).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from itertools import combinations
from pathlib import Path

import numpy as np

from . import svg
from .dataset import IdxError, load_mnist, split_train_validation
from .estimator import BinningSpec, estimate_joint
from .grad import NumericalError
from .lattice import (HEURISTIC_GOAL, OPTIMIZED_GOAL, build_lattice, consistency_residuals, decompose,
                      goal_vector, vector_from_json, vector_to_json)
from .network import CheckpointError, Network, NetworkConfig, train

log = logging.getLogger("infomorph")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SECTION_DEFAULTS = {
    "data": {"mnist_dir": "", "output_dir": "runs/latest", "train_limit": 0, "test_limit": 0},
    "search": {"sampler": "cmaes", "budget": 200, "trial_epochs": 20, "sigma0": 0.3, "workers": 1},
    "ablate": {"mode": "individual", "goal": "optimized", "seeds": "0", "trial_epochs": 20,
               "individual_csv": ""},
}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ------------------------------------------------------------------ config


def parse_goal(text: str) -> tuple:
    """``heuristic``, ``optimized``, a goal JSON file, 19 comma-separated
    numbers, or ``label:value`` pairs such as ``{F}{C}:1,{F}{L}:-0.5``."""
    text = str(text).strip()
    if text == "heuristic":
        return tuple(goal_vector(HEURISTIC_GOAL))
    if text == "optimized":
        return tuple(goal_vector(OPTIMIZED_GOAL))
    if text.endswith(".json"):
        try:
            values, n = vector_from_json(Path(text).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read goal file {text}: {exc}") from exc
        return tuple(values)
    parts = [p.strip() for p in text.strip("()[]").split(",") if p.strip()]
    try:
        if any(":" in p for p in parts):
            return tuple(goal_vector({k.strip(): float(v) for k, v in (p.rsplit(":", 1) for p in parts)}))
        return tuple(float(p) for p in parts)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"cannot parse goal {text!r}: {exc}") from exc


def _coerce(value, default):
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return parse_goal(value)
    return value


class RunConfig:
    """Sectioned key/value settings: ``[network]`` mirrors NetworkConfig,
    ``[data]``, ``[search]`` and ``[ablate]`` hold the rest."""

    def __init__(self):
        net = NetworkConfig()
        self.defaults = {"network": {f.name: getattr(net, f.name) for f in fields(NetworkConfig)}}
        self.defaults.update({k: dict(v) for k, v in SECTION_DEFAULTS.items()})
        self.values = {k: dict(v) for k, v in self.defaults.items()}

    def set(self, key: str, value) -> None:
        if "." in key and key.split(".", 1)[0] in self.values:
            section, name = key.split(".", 1)
        else:
            owners = [s for s, d in self.values.items() if key in d]
            if not owners:
                raise ConfigError(f"unknown config key {key!r}")
            section, name = owners[0], key
        if name not in self.values[section]:
            raise ConfigError(f"unknown config key {section}.{name}")
        try:
            self.values[section][name] = _coerce(value, self.defaults[section][name])
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{name}: {value!r}") from exc

    def read(self, path) -> None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            if not parser.read(path):
                raise ConfigError(f"config file {path} not found")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            if section not in self.values:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                self.set(f"{section}.{key}", value)

    def network(self) -> NetworkConfig:
        try:
            return NetworkConfig.from_dict(dict(self.values["network"]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def __getitem__(self, section):
        return self.values[section]

    def resolved(self) -> dict:
        out = {}
        for section, d in self.values.items():
            out[section] = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
        return out

    def to_ini(self) -> str:
        lines = []
        for section, d in self.values.items():
            lines.append(f"[{section}]")
            for k, v in d.items():
                if isinstance(v, tuple):
                    v = ", ".join(repr(x) for x in v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)


def build_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg.read(args.config)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    cfg.network()
    return cfg


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg["data"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.ini").write_text(cfg.to_ini())
    return out


# -------------------------------------------------------------------- data


def load_data(cfg: RunConfig, net_cfg: NetworkConfig):
    root = cfg["data"]["mnist_dir"] or os.environ.get("INFOMORPH_MNIST_DIR")
    if not root:
        raise DataError("no dataset: set data.mnist_dir or INFOMORPH_MNIST_DIR")
    try:
        full = load_mnist(root, "train")
        test = load_mnist(root, "test")
    except (OSError, IdxError) as exc:
        raise DataError(str(exc)) from exc
    if cfg["data"]["train_limit"]:
        full = full.subset(slice(0, cfg["data"]["train_limit"]))
    if cfg["data"]["test_limit"]:
        test = test.subset(slice(0, cfg["data"]["test_limit"]))
    tr, val = split_train_validation(full, net_cfg.validation_fraction, net_cfg.seed)
    return tr, val, test


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = build_config(args)
    net_cfg = cfg.network()
    tr, val, test = load_data(cfg, net_cfg)
    out = _outdir(cfg)
    _, report = _train(net_cfg, tr, val, test, out)
    print(f"test accuracy {report.test_accuracy:.4f}")
    return EXIT_OK


def _train(net_cfg, tr, val, test, out: Path, eval_train=True):
    net, report = train(net_cfg, tr, val, test, eval_train=eval_train)
    net.save(out / "checkpoint.infm")
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "metrics.csv").write_text(report.to_csv())
    rows = report.epochs
    svg.line_plot({"train": [(r["epoch"], r["train_acc"]) for r in rows],
                   "validation": [(r["epoch"], r["val_acc"]) for r in rows]},
                  out / "learning_curve.svg", "Accuracy", "epoch", "accuracy")
    svg.line_plot({"median D_c": [(r["epoch"], r["median_dc"]) for r in rows]},
                  out / "self_cosine.svg", "Median self-cosine distance", "epoch", "D_c")
    return net, report


def cmd_eval(args) -> int:
    try:
        net = Network.load(args.checkpoint)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    cfg = build_config(args)
    tr, val, test = load_data(cfg, net.config)
    split = {"train": tr, "validation": val, "test": test}[args.split]
    acc = net.evaluate(split)
    print(f"accuracy {acc:.4f}")
    result = {"checkpoint": str(args.checkpoint), "split": args.split, "n": len(split),
              "accuracy": acc, "config": net.config.to_dict(), "resolved_config": cfg.resolved()}
    target = Path(args.json) if args.json else Path(args.checkpoint).with_suffix(".eval.json")
    target.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def read_samples(path):
    """``y,f,c[,l]`` rows; a non-numeric first row is taken as a header."""
    rows, bad = [], []
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(str(exc)) from exc
    width = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        cells = next(csv.reader([line]))
        try:
            values = [float(c) for c in cells]
        except ValueError:
            if lineno == 1:
                continue
            bad.append((lineno, "non-numeric value"))
            continue
        width = width or len(values)
        if len(values) not in (3, 4) or len(values) != width:
            bad.append((lineno, f"expected {width if width in (3, 4) else '3 or 4'} columns, got {len(values)}"))
        elif values[0] not in (-1.0, 1.0):
            bad.append((lineno, f"y must be -1 or 1, got {cells[0]}"))
        elif not np.all(np.isfinite(values)):
            bad.append((lineno, "non-finite value"))
        else:
            rows.append(values)
    if bad:
        raise DataError("malformed rows:\n" + "\n".join(f"  line {n}: {msg}" for n, msg in bad))
    if not rows:
        raise DataError(f"{path}: no samples")
    return np.array(rows)


def cmd_pid(args) -> int:
    data = read_samples(args.csv)
    y, sources = data[:, 0], data[:, 1:]
    n = sources.shape[1]
    spec = BinningSpec.parse(args.range, args.bins)
    joint = estimate_joint(list(sources.T), (y > 0).astype(float), [spec] * n)
    atoms = decompose(joint)
    residuals = consistency_residuals(atoms, joint)
    labels = build_lattice(n).labels + ["res"]
    names = "FCL"[:n]
    subsets = [c for r in range(1, n + 1) for c in combinations(range(n), r)]
    width = max(len(s) for s in labels)
    print(f"{'atom':<{width}}  bits")
    for lab, val in zip(labels, atoms):
        print(f"{lab:<{width}}  {val: .6f}")
    print("consistency residuals")
    for sub, r in zip(subsets, residuals):
        print(f"  I(Y;{''.join(names[i] for i in sub)})  {r:.2e}")
    if args.json:
        Path(args.json).write_text(json.dumps({
            "atoms": json.loads(vector_to_json(atoms, n, "atoms")),
            "residuals": [float(r) for r in residuals],
            "options": {"bins": args.bins, "range": args.range},
        }, indent=2) + "\n")
    return EXIT_OK


def _workers(cfg: RunConfig, threads: int | None) -> int:
    w = int(cfg["search"]["workers"])
    return max(1, min(w, threads)) if threads else max(1, w)


def cmd_search(args) -> int:
    from .search import TrainingEvaluator, cmaes_search, random_search
    cfg = build_config(args)
    if args.sampler:
        cfg.set("search.sampler", args.sampler)
    if args.budget:
        cfg.set("search.budget", str(args.budget))
    s = cfg["search"]
    if s["sampler"] not in ("cmaes", "random"):
        raise ConfigError(f"unknown sampler {s['sampler']!r}")
    net_cfg = cfg.network()
    tr, val, _ = load_data(cfg, net_cfg)
    out = _outdir(cfg)
    evaluate = TrainingEvaluator(net_cfg, tr, val, epochs=int(s["trial_epochs"]))
    workers = _workers(cfg, args.threads)
    log_path = out / "trials.jsonl"
    log_path.write_text("")

    def sink(trial):
        with open(log_path, "a") as fh:
            fh.write(trial.to_json() + "\n")
        log.info("trial %d: %.4f", trial.index, trial.objective)

    try:
        if s["sampler"] == "cmaes":
            result = cmaes_search(evaluate, int(s["budget"]), seed=net_cfg.seed, sigma0=float(s["sigma0"]),
                                  workers=workers, sink=sink)
        else:
            result = random_search(evaluate, int(s["budget"]), seed=net_cfg.seed, workers=workers, sink=sink)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    (out / "best_goal.json").write_text(vector_to_json(result.best.gamma, 3, "goal") + "\n")
    (out / "search_summary.json").write_text(json.dumps({
        "best": json.loads(result.best.to_json()), "n_trials": len(result.history),
        "resolved_config": cfg.resolved()}, indent=2, sort_keys=True) + "\n")
    best_so_far = np.maximum.accumulate([t.objective for t in result.history])
    svg.line_plot({"trial": [(t.index, t.objective) for t in result.history],
                   "best so far": list(enumerate(best_so_far.tolist()))},
                  out / "search.svg", f"{s['sampler']} goal search", "trial", "validation accuracy")
    print(f"best validation accuracy {result.best.objective:.4f} (trial {result.best.index})")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .search import (TrainingEvaluator, ablate_cumulative, ablate_individual,
                         perturb_sensitivity, rows_to_csv)
    cfg = build_config(args)
    if args.mode:
        cfg.set("ablate.mode", args.mode)
    a = cfg["ablate"]
    if a["mode"] not in ("individual", "cumulative", "sensitivity"):
        raise ConfigError(f"unknown ablation mode {a['mode']!r}")
    try:
        seeds = [int(x) for x in str(a["seeds"]).split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad seed list {a['seeds']!r}") from exc
    base = np.asarray(parse_goal(a["goal"]))
    if base.shape != (19,):
        raise ConfigError("ablation goal needs 19 entries")
    net_cfg = cfg.network()
    tr, val, _ = load_data(cfg, net_cfg)
    out = _outdir(cfg)
    evaluate = TrainingEvaluator(net_cfg, tr, val, epochs=int(a["trial_epochs"]))
    mode = a["mode"]
    if mode == "sensitivity":
        rows = perturb_sensitivity(base, evaluate, seeds)
        rows_to_csv(rows, out / "ablation_sensitivity.csv")
        for kind in ("rel+10%", "rel-10%", "abs+0.1", "abs-0.1"):
            sel = [r for r in rows if r.kind == kind]
            svg.bar_plot([r.label for r in sel], [r.delta for r in sel],
                         out / f"sensitivity_{kind.replace('%', 'pct').replace('+', 'plus').replace('-', 'minus')}.svg",
                         f"Perturbation {kind}", "delta accuracy")
        print(f"{len(rows)} perturbations written")
        return EXIT_OK
    if mode == "cumulative" and a["individual_csv"]:
        individual = _read_individual(a["individual_csv"])
        baseline = None
    else:
        baseline, individual = ablate_individual(base, evaluate, seeds)
        rows_to_csv(individual, out / "ablation_individual.csv")
        svg.bar_plot([r.label for r in individual], [r.delta for r in individual],
                     out / "ablation_individual.svg", "Individual ablation", "delta accuracy")
    if mode == "individual":
        print(f"baseline {baseline:.4f}; {len(individual)} entries written")
        return EXIT_OK
    curve = ablate_cumulative(base, individual, evaluate, seeds, baseline)
    rows_to_csv(curve, out / "ablation_cumulative.csv")
    svg.line_plot({"accuracy": [(r.step, r.accuracy) for r in curve]}, out / "ablation_cumulative.svg",
                  "Cumulative ablation", "parameters zeroed", "accuracy")
    print(f"{len(curve)} cumulative steps written")
    return EXIT_OK


def _read_individual(path):
    from .search import AblationRow

    try:
        with open(path) as fh:
            return [AblationRow(int(r["index"]), r["label"], float(r["value"]), float(r["accuracy"]),
                                float(r["delta"]), r["retrained"] == "True") for r in csv.DictReader(fh)]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read individual ablation CSV {path}: {exc}") from exc


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infomorph", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI file with [network], [data], [search], [ablate] sections")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--threads", type=int, help="cap on worker processes")

    t = sub.add_parser("train", help="train a network and write checkpoint, report and plots")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="context-withheld accuracy of a checkpoint")
    common(e)
    e.add_argument("checkpoint")
    e.add_argument("--split", choices=("train", "validation", "test"), default="test")
    e.add_argument("--json", help="where to write the JSON result")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("pid", help="decompose a CSV of samples y,f,c[,l]")
    d.add_argument("csv")
    d.add_argument("--bins", type=int, default=20)
    d.add_argument("--range", default="adaptive", help="'adaptive' or 'lo,hi'")
    d.add_argument("--json")
    d.set_defaults(func=cmd_pid)

    s = sub.add_parser("search", help="goal-vector search on truncated training")
    common(s)
    s.add_argument("--sampler", choices=("cmaes", "random"))
    s.add_argument("--budget", type=int)
    s.set_defaults(func=cmd_search)

    a = sub.add_parser("ablate", help="goal ablation and sensitivity analyses")
    common(a)
    a.add_argument("--mode", choices=("individual", "cumulative", "sensitivity"))
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
