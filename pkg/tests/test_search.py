import numpy as np
import pytest

from infomorph.dataset import DatasetSplit
from infomorph.lattice import OPTIMIZED_GOAL, build_lattice, goal_vector
from infomorph.network import NetworkConfig
from infomorph.search import (CRITICAL, LABELS, N_FREE, TrainingEvaluator, ablate_cumulative, ablate_individual,
                              cmaes_search, collapse_step, load_reference_goal, perturb_sensitivity, random_search,
                              read_trials, rows_to_csv, write_trials)

STAR = np.random.default_rng(100).uniform(-0.8, 0.8, N_FREE)
WEIGHTS = {label: w for label, w in zip(CRITICAL, (0.3, 0.2, 0.15, 0.15))}


def sphere(gamma, seed):
    return -float(np.sum((np.asarray(gamma)[:N_FREE] - STAR) ** 2))


def mock_accuracy(gamma, seed):
    """Chance level plus credit for the critical entries, tiny credit for the rest."""
    gamma = np.asarray(gamma)
    acc = 0.1
    for i, label in enumerate(LABELS):
        acc += WEIGHTS.get(label, 0.002) * abs(gamma[i])
    return acc + 1e-4 * seed


class Counting:
    def __init__(self, fn):
        self.fn, self.calls = fn, 0

    def __call__(self, gamma, seed):
        self.calls += 1
        return self.fn(gamma, seed)


def test_cmaes_converges_on_sphere():
    result = cmaes_search(sphere, 1500, seed=0)
    assert np.abs(np.array(result.best.gamma[:N_FREE]) - STAR).max() < 1e-2


@pytest.mark.xfail(reason="standard CMA-ES from sigma 0.3 needs about 1000-1200 evaluations in 18 dimensions", strict=False)
def test_cmaes_sphere_within_600_evaluations():
    result = cmaes_search(sphere, 600, seed=0)
    assert np.abs(np.array(result.best.gamma[:N_FREE]) - STAR).max() < 1e-2


def test_cmaes_budget_below_population():
    with pytest.raises(ValueError, match="population"):
        cmaes_search(sphere, 5, seed=0)


@pytest.mark.parametrize("budget", [12, 30])
def test_cmaes_respects_budget_box_and_residual(budget):
    result = cmaes_search(lambda g, s: float(np.sum(g)), budget, seed=1)
    assert len(result.history) == budget
    for t in result.history:
        g = np.array(t.gamma)
        assert len(g) == 19 and g[-1] == 0 and np.all(np.abs(g) <= 1)
    assert result.best.objective == max(t.objective for t in result.history)


def test_cmaes_is_reproducible():
    a = cmaes_search(sphere, 48, seed=7)
    b = cmaes_search(sphere, 48, seed=7)
    c = cmaes_search(sphere, 48, seed=8)
    assert [t.gamma for t in a.history] == [t.gamma for t in b.history]
    assert [t.gamma for t in a.history] != [t.gamma for t in c.history]


def test_cmaes_starts_from_heuristic():
    result = cmaes_search(sphere, 12, seed=0, sigma0=1e-6)
    fc = build_lattice(3).index("{F}{C}")
    assert np.isclose(result.history[0].gamma[fc], 1.0, atol=1e-4)


def test_parallel_workers_match_serial():
    a = cmaes_search(sphere, 24, seed=3, workers=1)
    b = cmaes_search(sphere, 24, seed=3, workers=2)
    assert [t.gamma for t in a.history] == [t.gamma for t in b.history]
    assert [t.objective for t in a.history] == [t.objective for t in b.history]


def test_random_search():
    a = random_search(sphere, 40, seed=2)
    b = random_search(sphere, 40, seed=2)
    assert len(a.history) == 40
    assert [t.gamma for t in a.history] == [t.gamma for t in b.history]
    assert all(abs(v) <= 1 for t in a.history for v in t.gamma)
    assert all(t.gamma[-1] == 0 for t in a.history)


def test_trial_log_round_trip(tmp_path):
    seen = []
    result = random_search(sphere, 5, seed=0, sink=seen.append)
    assert seen == result.history
    write_trials(tmp_path / "t.jsonl", result.history)
    assert read_trials(tmp_path / "t.jsonl") == result.history
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == 5


def test_reference_goal_file():
    ref = load_reference_goal()
    assert np.array_equal(ref, goal_vector(OPTIMIZED_GOAL))
    lat = build_lattice(3)
    assert ref[lat.index("{F}{C}")] == 0.98 and ref[lat.index("{F}{L}")] == -0.99
    assert ref[lat.index("{F}{C}{L}")] == 0.33 and ref[lat.index("{FC}{FL}")] == -0.97


@pytest.fixture
def base():
    g = goal_vector(OPTIMIZED_GOAL)
    g[build_lattice(3).index("{C}")] = 0.2
    g[build_lattice(3).index("{L}")] = -0.1
    return g


def test_ablate_individual(base):
    ev = Counting(mock_accuracy)
    baseline, rows = ablate_individual(base, ev, seeds=(0, 1))
    assert len(rows) == 19
    assert ev.calls == 2 * (1 + np.count_nonzero(base))
    zero = [r for r in rows if r.value == 0]
    assert all(r.delta == 0 and not r.retrained for r in zero)
    by_label = {r.label: r for r in rows}
    assert by_label["{F}{C}"].delta == pytest.approx(-0.3 * 0.98)
    assert by_label["{F}{C}"].delta < by_label["{C}"].delta < 0
    assert len(rows_to_csv(rows).splitlines()) == 20


def test_ablate_cumulative(base):
    baseline, individual = ablate_individual(base, mock_accuracy)
    curve = ablate_cumulative(base, individual, mock_accuracy, baseline=baseline)
    assert curve[0].accuracy == baseline and curve[0].step == 0
    assert [r.zeroed for r in curve[1:3]] == ["{L}", "{C}"]
    assert curve[-1].remaining == 0 and curve[-1].accuracy == pytest.approx(0.1)
    step = collapse_step(curve)
    assert curve[step].zeroed in CRITICAL
    assert all(curve[k].zeroed not in CRITICAL for k in range(1, 3))


def test_collapse_step_none_when_flat():
    _, individual = ablate_individual(np.zeros(19) + 0.0, mock_accuracy)
    assert collapse_step(ablate_cumulative(np.zeros(19), individual, mock_accuracy)) is None


def test_perturb_sensitivity(base):
    rows = perturb_sensitivity(base, mock_accuracy)
    assert len(rows) == 4 * 19
    rel_zero = [r for r in rows if r.kind.startswith("rel") and r.value == 0]
    assert rel_zero and all(r.skipped and r.delta == 0 for r in rel_zero)
    fl = next(r for r in rows if r.kind == "abs+0.1" and r.label == "{F}{L}")
    assert fl.perturbed == pytest.approx(-0.89) and np.isfinite(fl.delta) and not fl.skipped
    fc = next(r for r in rows if r.kind == "abs+0.1" and r.label == "{F}{C}")
    assert fc.perturbed == 1.0
    assert all(-1 <= r.perturbed <= 1 for r in rows)
    assert len(rows_to_csv(rows).splitlines()) == 77


def test_training_evaluator_is_deterministic(rng):
    images = rng.random((200, 784))
    labels = rng.integers(0, 10, 200)
    split = DatasetSplit(images, labels)
    ev = TrainingEvaluator(NetworkConfig(n_hidden=8, batch_size=50), split, split, epochs=1)
    a = ev(goal_vector(OPTIMIZED_GOAL), 0)
    assert 0 <= a <= 1 and a == ev(goal_vector(OPTIMIZED_GOAL), 0)
