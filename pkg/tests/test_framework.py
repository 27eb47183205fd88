import numpy as np
import pytest

from mrcalib.framework import run_calibration, run_ranges
from mrcalib.objectives import EvaluationError
from mrcalib.optimizer import Candidate
from mrcalib.params import ParameterSpace, ParameterSpec, Scale
from mrcalib.plan import default_plan, traditional_plan


def toy_space():
    specs = []
    for g in range(1, 7):
        specs.append(ParameterSpec(f"lin{g}", -1.0, 1.0, Scale.LINEAR, g, 0.1 * g))
        specs.append(ParameterSpec(f"log{g}", 0.01, 100.0, Scale.LOG10, g, 1.0))
    return ParameterSpace(tuple(specs), 6)


def quadratic(space):
    truth = space.to_search(space.truths())

    def evaluate(x_model):
        return (float(np.sum((space.to_search(x_model) - truth) ** 2)),)

    return evaluate


def small_plan():
    return default_plan().scaled(800)


def test_budget_and_monotone_evolution():
    space = toy_space()
    result = run_calibration(quadratic(space), space, small_plan(), pop_size=20, seed=1)
    assert result.evolution.size == 800
    assert (np.diff(result.evolution) <= 0).all()
    assert [r.budget for r in result.runs] == small_plan().budgets
    assert result.best.primary == result.evolution[-1]


def test_default_plan_consumes_4000():
    space = toy_space()
    result = run_calibration(quadratic(space), space, default_plan(), pop_size=50, seed=2)
    assert result.evolution.size == 4000
    assert result.evolution[-1] < result.evolution[199]


def test_shrunk_ranges_inside_original():
    space = toy_space()
    result = run_calibration(quadratic(space), space, small_plan(), pop_size=20, seed=3)
    for record in result.runs[1:]:
        for spec, rng in zip(space, record.ranges):
            assert spec.bounds.contains(rng, tol=1e-12)
    # group 1 is shrunk from run 2 on, so its range can only be narrower than the original
    g1 = space.index("lin1")
    assert result.runs[1].ranges[g1].width <= space["lin1"].bounds.width


def test_run_ranges_requires_population_for_shrunk():
    with pytest.raises(ValueError, match="shrunk"):
        run_ranges(toy_space(), default_plan(), 2, None)


def test_run_ranges_full_and_discrete_use_original():
    space = toy_space()
    pop = [Candidate(np.zeros(len(space)))] * 3
    ranges = run_ranges(space, default_plan(), 2, pop)
    for spec, rng in zip(space, ranges):
        if spec.group == 1:
            assert rng.width == 0.0
        else:
            assert rng == spec.bounds


def test_traditional_plan_runs():
    space = toy_space().single_group()
    result = run_calibration(quadratic(space), space, traditional_plan(400), pop_size=20, seed=0)
    assert result.evolution.size == 400 and len(result.runs) == 1


def test_seed_determinism():
    space = toy_space()
    a = run_calibration(quadratic(space), space, small_plan(), pop_size=20, seed=9)
    b = run_calibration(quadratic(space), space, small_plan(), pop_size=20, seed=9)
    assert np.array_equal(a.evolution, b.evolution)
    assert np.array_equal(a.archive.assignments(), b.archive.assignments())


def test_evaluator_receives_model_units():
    space = toy_space()
    seen = []

    def spy(x):
        seen.append(np.asarray(x))
        return quadratic(space)(x)

    run_calibration(spy, space, small_plan(), pop_size=20, seed=0)
    X = np.array(seen)
    lows = np.array([s.low for s in space])
    highs = np.array([s.high for s in space])
    assert (X >= lows - 1e-9).all() and (X <= highs + 1e-9).all()


def test_first_budget_smaller_than_population():
    space = toy_space()
    with pytest.raises(ValueError, match="population"):
        run_calibration(quadratic(space), space, default_plan().scaled(300), pop_size=50)


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    space = toy_space()
    plan = small_plan()
    full = run_calibration(quadratic(space), space, plan, pop_size=20, seed=5)

    calls = {"n": 0}
    inner = quadratic(space)

    def flaky(x):
        calls["n"] += 1
        if calls["n"] > sum(plan.budgets[:3]) + 7:
            raise EvaluationError("simulated crash")
        return inner(x)

    ckpt = tmp_path / "state.json"
    with pytest.raises(EvaluationError):
        run_calibration(flaky, space, plan, pop_size=20, seed=5, checkpoint=ckpt)
    assert ckpt.exists()
    resumed = run_calibration(inner, space, plan, pop_size=20, seed=5, checkpoint=ckpt)
    assert np.array_equal(resumed.evolution, full.evolution)
    assert np.array_equal(resumed.archive.assignments(), full.archive.assignments())


def test_checkpoint_plan_mismatch(tmp_path):
    space = toy_space()
    ckpt = tmp_path / "state.json"
    run_calibration(quadratic(space), space, small_plan(), pop_size=20, seed=5, checkpoint=ckpt)
    with pytest.raises(ValueError, match="different run plan"):
        run_calibration(quadratic(space), space, default_plan().scaled(900), pop_size=20, seed=5, checkpoint=ckpt)


def test_evaluation_error_carries_model_assignment():
    space = toy_space()

    def broken(x):
        raise RuntimeError("no convergence")

    with pytest.raises(EvaluationError) as info:
        run_calibration(broken, space, small_plan(), pop_size=20, seed=0)
    x = np.array(info.value.assignment)
    assert x.size == len(space)
    # log-scaled parameters are reported in model units, so they are positive
    assert (x[[space.index(f"log{g}") for g in range(1, 7)]] > 0).all()
    assert "no convergence" in str(info.value)
