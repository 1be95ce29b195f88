import math

import numpy as np
import pytest

from repgame.bounds import (
    classify_scenario,
    conditioned_law_check,
    construct_deviation,
    doob_floor,
    prior_chi,
    survival_probabilities,
    t_budget,
    verify_deviation,
)
from repgame.dynamics import simulate
from repgame.game import MixedAction
from repgame.geometry import RegionSpec
from repgame.scenarios import ACTIONS1, benchmark_scenario, drift_scenario
from repgame.strategies import StrategyProfile

from conftest import constant_profile


def spec_for(s, chi=0.5):
    return RegionSpec.from_scenario(s, "theta_star", "alpha1star", chi=chi)


@pytest.fixture(scope="module")
def jumpy():
    """theta1 and theta2 play I three times as often as the commitment type."""
    s = drift_scenario()
    mix = MixedAction(ACTIONS1, [0.7, 0.3, 0.0])
    prof = StrategyProfile.build(s, {"theta_star": MixedAction.pure(ACTIONS1, "L"), "theta1": mix, "theta2": mix})
    return s, prof


def test_t_budget_and_doob_floor_values():
    assert t_budget(0.1, 0.5, 0.1) == 2764
    assert t_budget(0.1, 0.5, 0.1) == math.ceil(1.2 * math.log(10) / 0.001)
    assert doob_floor(0.5, 0.1) == pytest.approx(1 / 6)


def test_prior_chi_of_drift_scenario(drift):
    s, prof = drift
    assert prior_chi(prof, "alpha1star", spec_for(s)) == pytest.approx(0.5, abs=1e-12)


def test_constant_beliefs_survive_with_probability_one(drift):
    s, _ = drift
    a = s.commitment_action("alpha1star")
    prof = constant_profile(s, a)
    table = survival_probabilities(s, prof, a, spec_for(s), 0.1, horizon=5)
    assert np.all(table.surv[table.in_band] == 1.0)
    plan = construct_deviation(table)
    ids = np.flatnonzero(table.in_band & (table.graph.level < 5))
    assert np.allclose(plan.probs[ids], a.probs)


def test_one_period_survival_by_hand(jumpy):
    s, prof = jumpy
    a = s.commitment_action("alpha1star")
    table = survival_probabilities(s, prof, a, spec_for(s), 0.1, horizon=1)
    assert table.root == pytest.approx(1 - a["I"], abs=1e-15)
    plan = construct_deviation(table)
    assert plan.allowed[0].tolist() == [True, False, False]
    assert plan.probs[0].tolist() == [1.0, 0.0, 0.0]


def test_empty_band_is_refused(drift):
    s, prof = drift
    with pytest.raises(ValueError, match="empty"):
        survival_probabilities(s, prof, "alpha1star", spec_for(s, chi=0.3), 0.1, horizon=3)


def test_survival_is_monotone_in_epsilon(drift):
    s, prof = drift
    roots = [survival_probabilities(s, prof, "alpha1star", spec_for(s), e, horizon=6).root
             for e in (0.05, 0.1, 0.2, 0.4)]
    assert roots == sorted(roots)


def test_root_survival_above_doob_floor(drift):
    s, prof = drift
    for horizon in (6, 50, 400):
        table = survival_probabilities(s, prof, "alpha1star", spec_for(s), 0.1, horizon=horizon)
        assert table.root >= doob_floor(0.5, 0.1)


def test_conditioned_law_equals_plan_law(drift, jumpy):
    for s, prof in (drift, jumpy):
        table = survival_probabilities(s, prof, "alpha1star", spec_for(s), 0.1, horizon=6)
        res = conditioned_law_check(s, prof, construct_deviation(table), spec_for(s))
        assert res["max_abs_difference"] <= 1e-12 and res["passed"]


def test_root_law_matches_rejection_sampling(drift):
    s, prof = drift
    T = 6
    table = survival_probabilities(s, prof, "alpha1star", spec_for(s), 0.1, horizon=T)
    plan = construct_deviation(table)
    r = simulate(s, prof, horizon=T, reps=120_000, seed=9, true_type="commitment:alpha1star",
                 alpha="alpha1star", spec=spec_for(s), record=True)
    keep = np.all(r.chi[:, 1:T + 1] < table.bound, axis=1)
    n = int(keep.sum())
    assert n >= 100_000
    assert keep.mean() == pytest.approx(table.root, abs=3 * math.sqrt(table.root * (1 - table.root) / len(keep)))
    for a in range(3):
        p = plan.probs[0, a]
        emp = float(np.mean(r.a1[keep, 0] == a))
        assert abs(emp - p) <= 3 * math.sqrt(max(p * (1 - p), 1e-12) / n) + 1e-12


def test_verify_deviation_small_run(drift):
    s, prof = drift
    table = survival_probabilities(s, prof, "alpha1star", spec_for(s), 0.1, horizon=60)
    res = verify_deviation(s, prof, construct_deviation(table), spec=spec_for(s), eps=0.1, reps=500, seed=4)
    assert res["c9"]["violations"] == 0 and res["c9"]["visited"] > 0
    assert res["far_periods"]["bound_T"] == 2764
    assert res["passed"]


def test_plan_serialises(drift):
    s, prof = drift
    table = survival_probabilities(s, prof, "alpha1star", spec_for(s), 0.1, horizon=4)
    d = construct_deviation(table).to_dict(prof, max_nodes=3)
    assert len(d["nodes"]) == 3 and d["nodes"][0]["t"] == 0
    assert d["nodes"][0]["player2_state"] == "trusting"


def test_classify_perturbed_is_statement_four(perturbed):
    c = classify_scenario(perturbed, "theta_star", "alpha1star")
    assert c["statement"] == "statement-4"
    assert c["chi"] > 1 and c["br_under_phi"] == ["G"] and not c["in_hull_of_other_commitments"]


def test_classify_pure_h_inside_is_statement_one():
    assert classify_scenario(benchmark_scenario(lam=(2.0, 2.0)), "theta_star", "H")["statement"] == "statement-1"
    assert classify_scenario(benchmark_scenario(lam=(1e-3, 1e-3)), "theta_star", "H")["statement"] == "statement-1"


def test_classify_boundary_prior_is_uncovered(bench):
    c = classify_scenario(bench, "theta_star", "H")
    assert c["statement"] == "uncovered"
    assert abs(c["lambda_margin"]) < 1e-9


def test_classify_pure_h_outside_is_statement_two():
    c = classify_scenario(benchmark_scenario(lam=(4.0, 4.0), commit_mass=0.05), "theta_star", "H")
    assert c["statement"] == "statement-2"


def test_classify_mixed_inside_is_statement_three(drift):
    s, _ = drift
    assert classify_scenario(s, "theta_star", "alpha1star")["statement"] == "statement-3"
