"""Goal-vector search and ablation.

Every routine takes an evaluator ``evaluate(gamma, seed) -> accuracy``.
``TrainingEvaluator`` is the real one (truncated training, best validation
accuracy); tests plug in cheap analytic functions instead.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import cma
import numpy as np

from .lattice import HEURISTIC_GOAL, build_lattice, goal_vector, vector_from_json
from .network import NetworkConfig, train

N_GOAL = build_lattice(3).n_atoms + 1
N_FREE = N_GOAL - 1  # the residual-entropy entry stays at 0 during search
LABELS = build_lattice(3).labels + ["res"]
CRITICAL = ("{F}{C}", "{F}{L}", "{F}{C}{L}", "{FC}{FL}")

Evaluator = Callable[[np.ndarray, int], float]


@dataclass
class Trial:
    index: int
    gamma: list
    objective: float
    seed: int
    wall_time: float
    sampler: str
    generation: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Trial":
        return cls(**json.loads(line))


@dataclass
class SearchResult:
    best: Trial
    history: list = field(default_factory=list)


def write_trials(path, trials: Iterable[Trial]) -> None:
    with open(path, "w") as fh:
        for t in trials:
            fh.write(t.to_json() + "\n")


def read_trials(path) -> list[Trial]:
    return [Trial.from_json(line) for line in Path(path).read_text().splitlines() if line.strip()]


def load_reference_goal() -> np.ndarray:
    """The shipped optimized goal: the four published critical entries, rest 0."""
    text = resources.files("infomorph").joinpath("data/optimized_goal.json").read_text()
    values, _ = vector_from_json(text)
    return values


def _full(free: np.ndarray) -> np.ndarray:
    gamma = np.zeros(N_GOAL)
    gamma[:N_FREE] = np.clip(free, -1.0, 1.0)
    return gamma


def _run(evaluate: Evaluator, gammas: Sequence[np.ndarray], seed: int, workers: int) -> list[tuple[float, float]]:
    def timed(g):
        t0 = time.perf_counter()
        return float(evaluate(g, seed)), time.perf_counter() - t0

    if workers <= 1 or len(gammas) == 1:
        return [timed(g) for g in gammas]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_timed_call, evaluate, g, seed) for g in gammas]
        return [f.result() for f in futures]


def _timed_call(evaluate, gamma, seed):
    t0 = time.perf_counter()
    return float(evaluate(gamma, seed)), time.perf_counter() - t0


class _Log:
    def __init__(self, sampler: str, seed: int, sink):
        self.sampler, self.seed, self.sink = sampler, seed, sink
        self.trials: list[Trial] = []

    def add(self, gammas, results, generation):
        for g, (obj, wall) in zip(gammas, results):
            t = Trial(len(self.trials), [float(v) for v in g], obj, self.seed, wall, self.sampler, generation)
            self.trials.append(t)
            if self.sink is not None:
                self.sink(t)

    def result(self) -> SearchResult:
        best = max(self.trials, key=lambda t: (t.objective, -t.index))
        return SearchResult(best, self.trials)


def cmaes_search(evaluate: Evaluator, budget: int, seed: int = 0, popsize: int | None = None,
                 sigma0: float = 0.3, x0=None, workers: int = 1, sink=None) -> SearchResult:
    """Maximize ``evaluate`` over the 18 free goal entries in the box [-1, 1].

    Exactly ``budget`` trials are evaluated; when the budget is not a multiple
    of the population size the final partial population is evaluated but not
    fed back to the strategy.
    """
    x0 = goal_vector(HEURISTIC_GOAL)[:N_FREE] if x0 is None else np.asarray(x0, float)[:N_FREE]
    opts = {"bounds": [-1.0, 1.0], "seed": seed + 1, "verbose": -9, "verb_log": 0, "verb_disp": 0}
    if popsize is not None:
        opts["popsize"] = popsize
    es = cma.CMAEvolutionStrategy(np.asarray(x0, dtype=float), sigma0, opts)
    if budget < es.popsize:
        raise ValueError(f"budget {budget} is smaller than the population size {es.popsize}")
    log = _Log("cmaes", seed, sink)
    generation = 0
    while len(log.trials) < budget:
        xs = es.ask()
        take = min(len(xs), budget - len(log.trials))
        gammas = [_full(x) for x in xs[:take]]
        results = _run(evaluate, gammas, seed, workers)
        log.add(gammas, results, generation)
        if take == len(xs):
            es.tell(xs, [-r[0] for r in results])
        generation += 1
    return log.result()


def random_search(evaluate: Evaluator, budget: int, seed: int = 0, workers: int = 1,
                  batch: int = 16, sink=None) -> SearchResult:
    """Uniform samples from the box, residual entry fixed to 0."""
    if budget < 1:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed)
    log = _Log("random", seed, sink)
    generation = 0
    while len(log.trials) < budget:
        take = min(batch, budget - len(log.trials))
        gammas = [_full(rng.uniform(-1, 1, N_FREE)) for _ in range(take)]
        log.add(gammas, _run(evaluate, gammas, seed, workers), generation)
        generation += 1
    return log.result()


# ------------------------------------------------------------------- ablation


@dataclass
class AblationRow:
    index: int
    label: str
    value: float
    accuracy: float
    delta: float
    retrained: bool


@dataclass
class CumulativeRow:
    step: int
    zeroed: str
    remaining: int
    accuracy: float


@dataclass
class PerturbationRow:
    kind: str
    index: int
    label: str
    value: float
    perturbed: float
    accuracy: float
    delta: float
    skipped: bool


def _mean_accuracy(evaluate: Evaluator, gamma, seeds) -> float:
    return float(np.mean([evaluate(np.asarray(gamma, float), s) for s in seeds]))


def ablate_individual(base, evaluate: Evaluator, seeds: Sequence[int] = (0,),
                      baseline: float | None = None) -> tuple[float, list[AblationRow]]:
    """Zero each non-zero entry in turn; accuracies are means over ``seeds``."""
    base = np.asarray(base, dtype=float)
    if baseline is None:
        baseline = _mean_accuracy(evaluate, base, seeds)
    rows = []
    for i, value in enumerate(base):
        if value == 0:
            rows.append(AblationRow(i, LABELS[i], 0.0, baseline, 0.0, False))
            continue
        g = base.copy()
        g[i] = 0.0
        acc = _mean_accuracy(evaluate, g, seeds)
        rows.append(AblationRow(i, LABELS[i], float(value), acc, acc - baseline, True))
    return baseline, rows


def ablate_cumulative(base, individual: Sequence[AblationRow], evaluate: Evaluator,
                      seeds: Sequence[int] = (0,), baseline: float | None = None) -> list[CumulativeRow]:
    """Zero entries one after another, least important (smallest |delta|) first."""
    base = np.asarray(base, dtype=float)
    order = sorted((r for r in individual if r.retrained), key=lambda r: (abs(r.delta), r.index))
    if baseline is None:
        baseline = _mean_accuracy(evaluate, base, seeds)
    rows = [CumulativeRow(0, "", len(order), baseline)]
    g = base.copy()
    for step, r in enumerate(order, start=1):
        g[r.index] = 0.0
        rows.append(CumulativeRow(step, r.label, len(order) - step, _mean_accuracy(evaluate, g, seeds)))
    return rows


def collapse_step(curve: Sequence[CumulativeRow], drop: float = 0.10) -> int | None:
    """First step whose accuracy lies more than ``drop`` below step 0."""
    for row in curve:
        if row.accuracy < curve[0].accuracy - drop:
            return row.step
    return None


PERTURBATIONS = ("rel+10%", "rel-10%", "abs+0.1", "abs-0.1")


def perturb_sensitivity(base, evaluate: Evaluator, seeds: Sequence[int] = (0,),
                        baseline: float | None = None) -> list[PerturbationRow]:
    """Four perturbations of every entry (4 x 19 rows), clipped to [-1, 1].

    Relative changes of a zero entry are no-ops and are skipped.
    """
    base = np.asarray(base, dtype=float)
    if baseline is None:
        baseline = _mean_accuracy(evaluate, base, seeds)
    rows = []
    for kind in PERTURBATIONS:
        for i, value in enumerate(base):
            if kind.startswith("rel"):
                new = value * (1.1 if "+" in kind else 0.9)
            else:
                new = value + (0.1 if "+" in kind else -0.1)
            new = float(np.clip(new, -1.0, 1.0))
            if new == value:
                rows.append(PerturbationRow(kind, i, LABELS[i], float(value), new, baseline, 0.0, True))
                continue
            g = base.copy()
            g[i] = new
            acc = _mean_accuracy(evaluate, g, seeds)
            rows.append(PerturbationRow(kind, i, LABELS[i], float(value), new, acc, acc - baseline, False))
    return rows


def rows_to_csv(rows: Sequence, path=None) -> str:
    import csv
    import io

    buf = io.StringIO()
    names = list(asdict(rows[0]))
    writer = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow(asdict(r))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


# ----------------------------------------------------------------- evaluator


@dataclass
class TrainingEvaluator:
    """Best validation accuracy of a truncated training run (picklable)."""

    config: NetworkConfig
    train_split: object
    val_split: object
    epochs: int = 20

    def __call__(self, gamma, seed: int) -> float:
        cfg = replace(self.config, hidden_goal=tuple(float(g) for g in gamma), epochs=self.epochs, seed=int(seed))
        _, report = train(cfg, self.train_split, self.val_split, eval_train=False)
        return report.best_validation
