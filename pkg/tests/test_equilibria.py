import dataclasses
import math

import numpy as np
import pytest

from repgame.dynamics import simulate
from repgame.equilibria import (
    ConstructionError,
    beta_dynamics_check,
    build_low_payoff_equilibrium,
    check_incentives,
    cycle_payoff,
    deviation_payoff_bound,
    find_separating_pair,
    k_bar,
    motivating_example_profile,
    on_path_payoff,
)
from repgame.game import MixedAction
from repgame.scenarios import ACTIONS1, benchmark_scenario, perturbed_scenario
from repgame.strategies import Machine


@pytest.fixture(scope="module")
def example():
    return motivating_example_profile(0.1)


@pytest.fixture(scope="module")
def low_payoff(construction):
    return build_low_payoff_equilibrium(construction, "theta_star", "H", eta=0.4)


def horizon_for(delta, tol=1e-13):
    return int(math.ceil(math.log(tol) / math.log(delta)))


def test_k_bar_formula():
    assert k_bar(0.5, 0.4) == 4 == math.ceil(math.log(2.5) / math.log(4 / 3))
    assert k_bar(0.5, 0.25) == 9


def test_deviation_payoff_bound_limits():
    assert deviation_payoff_bound(4, 1, 1 - 1e-9) == pytest.approx(0.8, abs=1e-6)
    assert abs(deviation_payoff_bound(4, 20, 0.999) - 0.8) <= 0.01
    assert abs(deviation_payoff_bound(4, 1, 0.999) - 0.8) <= 0.01
    assert deviation_payoff_bound(1, 1, 1 - 1e-9) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(ValueError):
        deviation_payoff_bound(4, 1, 1.0)


def test_cycle_payoff_matches_series():
    delta, k = 0.97, 8
    series = sum((1 - delta) * delta ** t for t in range(20_000) if t % (k + 1) != k)
    assert cycle_payoff(k, delta) == pytest.approx(series, abs=1e-12)


def test_separating_pair_example():
    s = benchmark_scenario(lam=(4.0, 4.0), commit_mass=0.05)
    lp, a2p = find_separating_pair(s, "theta_star", "H")
    assert a2p == "M1" and lp.tolist() == [0.0, 4.0, 0.0]
    d_m1 = np.einsum("tij,i->tj", s.game.u2, [1, 0, 0])
    assert lp @ (d_m1[:, 1] - d_m1[:, 0]) == pytest.approx(4.0)


def test_separating_pair_none_inside_region():
    assert find_separating_pair(benchmark_scenario(lam=(2.0, 2.0)), "theta_star", "H") is None
    with pytest.raises(ConstructionError):
        build_low_payoff_equilibrium(benchmark_scenario(lam=(2.0, 2.0)), "theta_star", "H")


def test_construction_parameters(low_payoff):
    p = low_payoff.params
    assert (p.k_bar, p.k_star) == (4, 8)
    assert p.kappa == 0.5 and p.eta == 0.4
    assert p.a2_prime == "M1" and p.lambda_prime == [0.0, 4.0, 0.0]
    assert p.b7_margin > 0
    assert p.growth == pytest.approx((1 - 0.2) / 0.6)


def test_type_mixture_weights(low_payoff):
    p = low_payoff.params
    prof = low_payoff.profile
    for i, st in enumerate(prof.scenario.game.states):
        if st == "theta_star":
            continue
        lam, lam_p = p.lam[i], p.lambda_prime[i]
        subtypes = [t for t in prof.types if t.strategic and t.state == i]
        total = sum(t.weight for t in subtypes)
        prime = sum(t.weight for t in subtypes
                    if t.machine.n_states == 1 and t.machine.outputs[0, ACTIONS1.index(p.a1_prime)] == 1)
        assert prime / total == pytest.approx((lam - lam_p) / lam, abs=1e-12)


def test_on_path_payoff_closed_form_matches_simulation(low_payoff):
    delta = 0.999
    res = on_path_payoff(low_payoff, delta)
    assert res["cycle_pays_every_a1_star"]
    assert res["limit"] == pytest.approx(8 / 9)
    r = simulate(low_payoff.scenario, low_payoff.profile, delta=delta, horizon=horizon_for(delta, 1e-12),
                 reps=1, true_type="strategic:theta_star", alpha="H", record=False)
    assert r.payoff[0] == pytest.approx(res["value"], abs=1e-9)
    assert abs(r.payoff[0] - 8 / 9) <= 0.01


def test_beta_dynamics(low_payoff):
    res = beta_dynamics_check(low_payoff, horizon=4)
    assert res["passed"] and res["checked_transitions"] > 0


def test_default_eta_is_dyadic(construction):
    eq = build_low_payoff_equilibrium(construction, "theta_star", "H")
    assert eq.params.eta == 0.25 and eq.params.k_bar == 9


def test_mixed_a1_star_is_refused(perturbed):
    with pytest.raises(ConstructionError):
        build_low_payoff_equilibrium(perturbed, "theta_star", "alpha1star")


def test_example_incentives(example):
    res = check_incentives(example, 0.95, horizon=200, tol=1e-6)
    assert res["status"] == "checked" and res["passed"]
    assert res["theta_star"][0]["max_gain"] <= 1e-6
    assert res["player2"]["max_violation"] <= 1e-6
    assert res["theta_star"][0]["value_at_root"] == pytest.approx(0.5, abs=1e-12)


def test_early_h_deviation_loses(example):
    H, L = np.eye(3)[0], np.eye(3)[2]
    dev = Machine(np.array([H, L]), np.ones((2, 3, 3), dtype=int), 0)
    eq = dataclasses.replace(example, player1={**example.player1, "theta_star": dev})
    for delta in (0.9, 0.95, 0.99):
        r = simulate(eq.scenario, eq.profile, delta=delta, horizon=horizon_for(delta), reps=5, seed=1,
                     true_type="strategic:theta_star", alpha="alpha1star", record=False)
        assert np.all(r.payoff < 0.5)
        assert np.allclose(r.payoff, (1 - delta) * -0.5 + delta * 0.5, atol=1e-9)


def test_player2_m1_needs_theta1_at_least_theta2(example):
    flipped = dataclasses.replace(example, scenario=perturbed_scenario(0.1, lam=(2.5, 3.0)))
    res = check_incentives(flipped, 0.95)
    assert not res["player2"]["passed"] and res["player2"]["where"]["t"] == 0
    tie = dataclasses.replace(example, scenario=perturbed_scenario(0.1, lam=(3.0, 3.0)))
    assert check_incentives(tie, 0.95)["player2"]["passed"]


def test_planted_dominated_action_is_reported(example):
    p2 = example.player2
    out = np.array(p2.outputs)
    out[0] = [1.0, 0.0, 0.0]  # G at the root although M1 is strictly better
    bad = dataclasses.replace(example, player2=Machine(out, p2.transitions, p2.initial, p2.names))
    res = check_incentives(bad, 0.95)
    assert not res["passed"] and res["player2"]["where"]["t"] == 0


def test_incentive_check_refuses_over_budget(low_payoff):
    res = check_incentives(low_payoff, 0.999, budget=50)
    assert res["status"] == "refused" and res["passed"] is None


def test_example_needs_small_eps():
    with pytest.raises(ValueError):
        motivating_example_profile(0.6)
    assert MixedAction(ACTIONS1, [0.9, 0.1, 0]) == motivating_example_profile(0.1).scenario.commitment_action(
        "alpha1star")
