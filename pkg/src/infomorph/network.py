"""Infomorphic networks: one trivariate hidden layer and a bivariate output layer.

Setups
------
1. dense lateral connections, one-hot label as hidden context
2. sparse lateral connections (at most ``max_lateral`` peers), label context
3. sparse lateral connections, output-layer feedback as hidden context
"""
from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import grad
from .dataset import DatasetSplit, batches
from .estimator import BinningSpec
from .lattice import OUTPUT_GOAL, SCHEMA_VERSION, build_lattice, goal_vector, HEURISTIC_GOAL
from .neuron import ActivationParams, Layer

log = logging.getLogger(__name__)

N_CLASSES = 10
N_PIXELS = 784
CHECKPOINT_MAGIC = b"INFM"


@dataclass
class NetworkConfig:
    n_hidden: int = 100
    setup: int = 1
    max_lateral: int = 100
    activation: str = "modulatory"
    hidden_goal: tuple = tuple(goal_vector(HEURISTIC_GOAL))
    output_goal: tuple = OUTPUT_GOAL
    epochs: int = 100
    batch_size: int = 1024
    lr_hidden: float = 0.002
    lr_output: float = 0.003
    weight_decay_hidden: float = 0.00035
    weight_decay_output: float = 0.00015
    n_bins: int = 20
    hidden_range: str = "-20,20"
    output_range: str = "adaptive"
    output_context_gain: float = 0.5
    validation_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.hidden_goal = tuple(float(g) for g in self.hidden_goal)
        self.output_goal = tuple(float(g) for g in self.output_goal)
        self.validate()

    def validate(self):
        if self.setup not in (1, 2, 3):
            raise ValueError(f"setup must be 1, 2 or 3, got {self.setup}")
        if self.n_hidden < 2:
            raise ValueError("n_hidden must be at least 2")
        if self.max_lateral < 1:
            raise ValueError("max_lateral must be at least 1")
        if len(self.hidden_goal) != build_lattice(3).n_atoms + 1:
            raise ValueError("hidden_goal needs 19 entries")
        if len(self.output_goal) != build_lattice(2).n_atoms + 1:
            raise ValueError("output_goal needs 5 entries")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        ActivationParams(self.activation)
        self.hidden_binning, self.output_binning

    @property
    def hidden_binning(self) -> BinningSpec:
        return BinningSpec.parse(self.hidden_range, self.n_bins)

    @property
    def output_binning(self) -> BinningSpec:
        return BinningSpec.parse(self.output_range, self.n_bins)

    @property
    def n_lateral(self) -> int:
        if self.setup == 1:
            return self.n_hidden - 1
        return min(self.n_hidden - 1, self.max_lateral)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_goal"] = list(self.hidden_goal)
        d["output_goal"] = list(self.output_goal)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def encode_labels(labels: np.ndarray) -> np.ndarray:
    """0/1 one-hot labels; withheld context (all zeros) then reads as "no class"."""
    out = np.zeros((len(labels), N_CLASSES))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def lateral_mask(n: int, n_lateral: int, rng: np.random.Generator) -> np.ndarray:
    """``mask[i, j]``: neuron ``i`` feeds neuron ``j``; never ``i == j``."""
    mask = np.zeros((n, n), dtype=bool)
    for j in range(n):
        peers = np.delete(np.arange(n), j)
        if n_lateral < n - 1:
            peers = rng.choice(peers, size=n_lateral, replace=False)
        mask[peers, j] = True
    return mask


def self_cosine_distance(w_prev: np.ndarray, w_now: np.ndarray) -> np.ndarray:
    """``1 - cos`` between columns of two weight matrices; NaN for zero columns."""
    w_prev = np.atleast_2d(np.asarray(w_prev, dtype=float).T).T
    w_now = np.atleast_2d(np.asarray(w_now, dtype=float).T).T
    norms = np.linalg.norm(w_prev, axis=0) * np.linalg.norm(w_now, axis=0)
    dots = (w_prev * w_now).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(norms > 0, 1.0 - dots / norms, np.nan)


@dataclass
class ForwardPass:
    hidden_inputs: dict
    hidden_aggregates: dict
    hidden_prob: np.ndarray
    hidden_states: list  # sampled states per hidden iteration
    output_inputs: dict
    output_aggregates: dict
    output_prob: np.ndarray

    @property
    def prediction(self) -> np.ndarray:
        return self.output_prob.argmax(axis=1)


@dataclass
class TrainReport:
    config: dict
    seed: int
    epochs: list = field(default_factory=list)
    test_accuracy: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_acc", "val_acc", "median_Dc", "mean_goal"])
        for row in self.epochs:
            writer.writerow([row["epoch"], _fmt(row["train_acc"]), _fmt(row["val_acc"]),
                             _fmt(row["median_dc"]), _fmt(row["mean_goal_hidden"])])
        return buf.getvalue()

    @property
    def best_validation(self) -> float:
        vals = [e["val_acc"] for e in self.epochs if e["val_acc"] is not None]
        return max(vals) if vals else float("nan")


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


class Network:
    def __init__(self, config: NetworkConfig, hidden: Layer, output: Layer):
        self.config = config
        self.hidden = hidden
        self.output = output
        self.hidden_gamma = np.asarray(config.hidden_goal)
        self.output_gamma = np.asarray(config.output_goal)
        self.opt_hidden = grad.Adam(config.lr_hidden, config.weight_decay_hidden)
        self.opt_output = grad.Adam(config.lr_output, config.weight_decay_output)
        self.hidden_specs = [config.hidden_binning] * 3
        self.output_specs = [config.output_binning] * 2

    @classmethod
    def create(cls, config: NetworkConfig) -> "Network":
        rng = np.random.default_rng([config.seed, 0])
        params = ActivationParams(config.activation)
        mask = lateral_mask(config.n_hidden, config.n_lateral, rng)
        hidden = Layer.create(config.n_hidden, {"F": N_PIXELS, "C": N_CLASSES, "L": config.n_hidden},
                              params, rng, masks={"L": mask})
        # Each output neuron sees its own label element through a fixed unit
        # weight and an additive coupling; the PID goal alone cannot tell a
        # neuron firing for its class from one firing for all other classes.
        out_params = ActivationParams("linear", linear_c=config.output_context_gain)
        output = Layer.create(N_CLASSES, {"F": config.n_hidden}, out_params, rng,
                              masks={"C": np.eye(N_CLASSES, dtype=bool)}, fixed={"C": np.eye(N_CLASSES)})
        return cls(config, hidden, output)

    # ------------------------------------------------------------------ forward

    def forward(self, images: np.ndarray, labels: np.ndarray | None, rng: np.random.Generator,
                n_iterations: int = 2) -> ForwardPass:
        """Recurrent forward pass; ``labels=None`` withholds all label context."""
        batch = len(images)
        label_ctx = None if labels is None else encode_labels(labels)
        zeros = np.zeros((batch, self.config.n_hidden))
        lateral = zeros
        states = []
        context = label_ctx if self.config.setup != 3 else None
        for it in range(n_iterations):
            inputs = {"F": images, "C": context, "L": lateral}
            agg, prob, h = self.hidden.forward(inputs, rng)
            states.append(h)
            if it == 0 and self.config.setup == 3:
                _, context, _ = self.output.forward({"F": h, "C": label_ctx}, sample=False)
            lateral = h
        out_inputs = {"F": states[-1], "C": label_ctx}
        out_agg, out_prob, _ = self.output.forward(out_inputs, sample=False)
        return ForwardPass(inputs, agg, prob, states, out_inputs, out_agg, out_prob)

    # ---------------------------------------------------------------- training

    def train_batch(self, images, labels, rng) -> tuple[np.ndarray, np.ndarray]:
        fp = self.forward(images, labels, rng)
        rec_h = grad.record(self.hidden, fp.hidden_inputs, self.hidden_specs, fp.hidden_aggregates, fp.hidden_prob)
        rec_o = grad.record(self.output, fp.output_inputs, self.output_specs, fp.output_aggregates, fp.output_prob)
        goals_h, _, grads_h = grad.backward(rec_h, self.hidden_gamma)
        goals_o, _, grads_o = grad.backward(rec_o, self.output_gamma)
        for name, goals in (("hidden", goals_h), ("output", goals_o)):
            bad = ~np.isfinite(goals)
            if bad.any():
                raise grad.NumericalError(f"non-finite {name} goal", int(np.argmax(bad)))
        self.opt_hidden.step(self.hidden.weights, grads_h)
        self.opt_output.step(self.output.weights, grads_o)
        return goals_h, goals_o

    def train_epoch(self, split: DatasetSplit, epoch: int) -> dict:
        rng = np.random.default_rng([self.config.seed, 1, epoch])
        goals_h, goals_o = [], []
        for b, (x, y) in enumerate(batches(split, self.config.batch_size, self.config.seed, epoch)):
            try:
                gh, go = self.train_batch(x, y, rng)
            except grad.NumericalError as exc:
                raise grad.NumericalError(f"{exc} in epoch {epoch}, batch {b}", exc.neuron) from exc
            goals_h.append(gh.mean())
            goals_o.append(go.mean())
        return {"mean_goal_hidden": float(np.mean(goals_h)), "mean_goal_output": float(np.mean(goals_o))}

    # -------------------------------------------------------------- evaluation

    def predict(self, images: np.ndarray, seed: int = 0, chunk: int = 4096) -> np.ndarray:
        rng = np.random.default_rng([self.config.seed, 2, seed])
        return np.concatenate([self.forward(images[i:i + chunk], None, rng).prediction
                               for i in range(0, len(images), chunk)])

    def evaluate(self, split: DatasetSplit, seed: int = 0) -> float:
        """Accuracy with all label context withheld."""
        if len(split) == 0:
            return float("nan")
        return float((self.predict(split.images, seed) == split.labels).mean())

    def recurrence_delta(self, images: np.ndarray, seed: int = 0) -> float:
        """Median |p_3 - p_2| of hidden firing probabilities (context withheld)."""
        rng = np.random.default_rng([self.config.seed, 3, seed])
        probs = []
        lateral = np.zeros((len(images), self.config.n_hidden))
        context = None
        for it in range(3):
            _, p, h = self.hidden.forward({"F": images, "C": context, "L": lateral}, rng)
            if it == 0 and self.config.setup == 3:
                _, context, _ = self.output.forward({"F": h, "C": None}, sample=False)
            probs.append(p)
            lateral = h
        return float(np.median(np.abs(probs[2] - probs[1])))

    # -------------------------------------------------------------- checkpoint

    def save(self, path) -> None:
        blocks, payload = [], []
        offset = 0
        for lname, layer in (("hidden", self.hidden), ("output", self.output)):
            for cls_name, w in layer.weights.items():
                arrays = [("weights", w)]
                if cls_name in layer.masks:
                    arrays.append(("mask", layer.masks[cls_name].astype(float)))
                for kind, arr in arrays:
                    data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
                    blocks.append({"layer": lname, "class": cls_name, "kind": kind,
                                   "shape": list(arr.shape), "offset": offset, "nbytes": len(data)})
                    payload.append(data)
                    offset += len(data)
        header = json.dumps({
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "antichains": {"hidden": build_lattice(3).labels + ["res"], "output": build_lattice(2).labels + ["res"]},
            "blocks": blocks,
        }, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC + struct.pack("<I", len(header)) + header)
            for data in payload:
                fh.write(data)

    @classmethod
    def load(cls, path) -> "Network":
        raw = Path(path).read_bytes()
        if raw[:4] != CHECKPOINT_MAGIC or len(raw) < 8:
            raise CheckpointError(f"{path}: not an infomorph checkpoint")
        (hlen,) = struct.unpack("<I", raw[4:8])
        try:
            header = json.loads(raw[8:8 + hlen])
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupted header") from exc
        if header.get("schema_version") != SCHEMA_VERSION:
            raise CheckpointError(f"{path}: schema version {header.get('schema_version')!r}, "
                                  f"expected {SCHEMA_VERSION}")
        if header.get("antichains", {}).get("hidden") != build_lattice(3).labels + ["res"]:
            raise CheckpointError(f"{path}: antichain order mismatch")
        net = cls.create(NetworkConfig.from_dict(header["config"]))
        body = raw[8 + hlen:]
        for blk in header["blocks"]:
            end = blk["offset"] + blk["nbytes"]
            if end > len(body):
                raise CheckpointError(f"{path}: truncated block {blk['layer']}/{blk['class']}")
            arr = np.frombuffer(body[blk["offset"]:end], dtype="<f4").reshape(blk["shape"]).astype(float)
            layer = getattr(net, blk["layer"])
            if blk["kind"] == "weights":
                layer.weights[blk["class"]] = arr
            else:
                layer.masks[blk["class"]] = arr > 0.5
        return net


class CheckpointError(ValueError):
    pass


def train(config: NetworkConfig, train_split: DatasetSplit, val_split: DatasetSplit | None = None,
          test_split: DatasetSplit | None = None, eval_train: bool = True,
          callback=None) -> tuple[Network, TrainReport]:
    """Full training loop; the report records per-epoch metrics."""
    net = Network.create(config)
    report = TrainReport(config=config.to_dict(), seed=config.seed)
    for epoch in range(config.epochs):
        w_prev = net.hidden.weights["F"].copy()
        stats = net.train_epoch(train_split, epoch)
        dc = self_cosine_distance(w_prev, net.hidden.weights["F"])
        row = {
            "epoch": epoch + 1,
            "train_acc": net.evaluate(train_split, seed=epoch) if eval_train else None,
            "val_acc": net.evaluate(val_split, seed=epoch) if val_split is not None and len(val_split) else None,
            "median_dc": float(np.nanmedian(dc)) if np.isfinite(dc).any() else None,
            **stats,
        }
        report.epochs.append(row)
        log.info("epoch %d: %s", epoch + 1, row)
        if callback is not None:
            callback(net, row)
    if test_split is not None:
        report.test_accuracy = net.evaluate(test_split)
    return net, report
