import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repgame.bounds import doob_floor
from repgame.dynamics import (
    bayes_update,
    discounted_frequency_concentration,
    initial_belief,
    kl_divergence,
    player2_action,
    predicted_action,
    simulate,
    supermartingale_check,
)
from repgame.equilibria import motivating_example_profile
from repgame.game import MixedAction
from repgame.geometry import RegionSpec
from repgame.scenarios import ACTIONS1, drift_scenario, random_profile, random_scenario
from repgame.strategies import OffPathError, StrategyProfile

from conftest import constant_profile


@pytest.fixture(scope="module")
def example():
    return motivating_example_profile(0.1)


def restricted(b, mask):
    post = np.where(mask, b.posterior, 0.0)
    return dataclasses.replace(b, posterior=post / post.sum())


def test_bayes_update_after_h_in_example(example):
    prof = example.profile
    b0 = initial_belief(prof)
    b1 = bayes_update(b0, prof, "H")
    c0, c1 = b0.cell_posterior(prof), b1.cell_posterior(prof)
    ratio0 = c0[("theta1", "strategic")] / c0[("theta_star", "gamma_alpha")]
    ratio1 = c1[("theta1", "strategic")] / c1[("theta_star", "gamma_alpha")]
    assert ratio1 == pytest.approx(ratio0 / 0.9, rel=1e-12)
    assert c1[("theta2", "strategic")] == 0.0 and c1[("theta_star", "strategic")] == 0.0


def test_player2_answers_h_with_m1(example):
    prof = example.profile
    b1 = bayes_update(initial_belief(prof), prof, "H")
    assert prof.scenario.game.actions2[int(np.argmax(player2_action(b1, prof)))] == "M1"


def test_uninformative_actions_leave_posterior_unchanged(perturbed):
    a = perturbed.commitment_action("alpha1star")
    prof = StrategyProfile.build(perturbed, {s: a for s in perturbed.game.states},
                                 MixedAction(("G", "M1", "M2"), [1, 0, 0]))
    # the L-commitment cells play L, so restrict to types that play a
    b = restricted(initial_belief(prof), prof.out1[prof.init1][:, 2] == 0)
    nb = bayes_update(b, prof, "H", "G")
    assert np.allclose(nb.posterior, b.posterior, atol=1e-15)


def test_action_only_commitment_plays_isolates_commitment(perturbed):
    L = MixedAction.pure(ACTIONS1, "L")
    prof = StrategyProfile.build(perturbed, {s: L for s in perturbed.game.states})
    nb = bayes_update(initial_belief(prof), prof, "I")
    cells = nb.cell_posterior(prof)
    assert cells[("theta_star", "gamma_alpha")] == pytest.approx(1.0)


def test_off_path_raises_without_reset(perturbed):
    L = MixedAction.pure(ACTIONS1, "L")
    H = MixedAction.pure(ACTIONS1, "H")
    from repgame.game import Plan, ReputationScenario

    plans = (Plan("gamma_L", (L, L, L)),)
    prior = {(s, c): 1 / 6 for s in perturbed.game.states for c in ("strategic", "gamma_L")}
    s = ReputationScenario(perturbed.game, plans, prior)
    prof = StrategyProfile.build(s, {st_: H for st_ in s.game.states})
    with pytest.raises(OffPathError):
        bayes_update(initial_belief(prof), prof, "I")


def test_predicted_action_examples(example, perturbed):
    a = perturbed.commitment_action("alpha1star")
    prof = constant_profile(perturbed, a)
    b = restricted(initial_belief(prof), prof.out1[prof.init1][:, 2] == 0)
    assert predicted_action(b, prof) == a
    # period 0 of the example: weighted average of L, H, I, alpha and L again
    ep = example.profile
    cells = initial_belief(ep).cell_posterior(ep)
    want = np.zeros(3)
    for (st_, ch), w in cells.items():
        if ch == "strategic":
            want[{"theta_star": 2, "theta1": 0, "theta2": 1}[st_]] += w
        elif ch == "gamma_alpha" and st_ == "theta_star":
            want += w * a.probs
        else:
            want[2] += w
    assert predicted_action(initial_belief(ep), ep).probs == pytest.approx(want, abs=1e-14)


def from_scratch_lambda(prof, alpha, a1s, a2s):
    """Likelihood ratios from the prior times the product of action probabilities."""
    K = len(prof.types)
    weight = prof.prior.astype(float).copy()
    states = prof.init1.copy()
    for a1, a2 in zip(a1s, a2s):
        weight = weight * prof.out1[states, a1]
        states = prof.trans1[states, a1, a2]
    commit = prof.commitment_mask(alpha)
    num = np.zeros(prof.scenario.game.m)
    for k in range(K):
        if prof.types[k].strategic:
            num[prof.types[k].state] += weight[k]
    return num / weight[commit].sum()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_posterior_mass_and_likelihood_consistency(seed):
    rng = np.random.default_rng(seed)
    s = random_scenario(rng)
    prof = random_profile(rng, s)
    alpha = s.commitment_action(s.commitment_actions[0])
    b = initial_belief(prof)
    a1s, a2s = [], []
    for _ in range(6):
        a1 = int(rng.choice(len(alpha.probs), p=alpha.probs))
        q = player2_action(b, prof)
        a2 = int(rng.choice(len(q), p=q))
        b = bayes_update(b, prof, a1, a2)
        a1s.append(a1)
        a2s.append(a2)
        assert b.posterior.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(b.likelihood(prof, alpha), from_scratch_lambda(prof, alpha, a1s, a2s),
                           rtol=1e-12, atol=1e-12)


def test_posterior_is_a_martingale_under_the_prior_measure():
    rng = np.random.default_rng(3)
    s = random_scenario(np.random.default_rng(11), m=2, n1=2, n2=2)
    prof = random_profile(np.random.default_rng(12), s, myopic_prob=1.0)
    R = 10_000
    total = np.zeros(len(prof.types))
    sq = np.zeros(len(prof.types))
    for _ in range(R):
        b = initial_belief(prof)
        k = int(rng.choice(len(prof.types), p=b.posterior))
        state = prof.init1[k]
        for _ in range(3):
            a1 = int(rng.choice(prof.out1.shape[1], p=prof.out1[state]))
            q = player2_action(b, prof)
            a2 = int(rng.choice(len(q), p=q))
            b = bayes_update(b, prof, a1, a2)
            state = prof.trans1[state, a1, a2]
        total += b.posterior
        sq += b.posterior ** 2
    mean = total / R
    sd = np.sqrt(np.maximum(sq / R - mean ** 2, 0) / R)
    prior = prof.prior / prof.prior.sum()
    assert np.all(np.abs(mean - prior) <= 3 * sd + 1e-12)


def test_kl_divergence_is_nonnegative_and_exact():
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert kl_divergence([0.5, 0.5], [1, 0]) == math.inf
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0
    q = np.array([0.9, 0.1]) + np.array([1e-9, -1e-9])
    assert kl_divergence([0.9, 0.1], q) >= 0.0


@settings(max_examples=200, deadline=None)
@given(p=st.lists(st.floats(0, 1), min_size=3, max_size=3).filter(lambda v: sum(v) > 0.01),
       q=st.lists(st.floats(1e-6, 1), min_size=3, max_size=3))
def test_pinsker_inequality(p, q):
    p = np.array(p) / sum(p)
    q = np.array(q) / sum(q)
    kl = kl_divergence(p, q)
    assert kl >= 0
    assert np.abs(p - q).sum() <= math.sqrt(2 * kl) + 1e-12


@pytest.mark.parametrize("delta", [0.9, 0.95, 0.99])
def test_example_payoff_of_theta_star(example, delta):
    T = math.ceil(math.log(1e-13) / math.log(delta))
    r = simulate(example.scenario, example.profile, delta=delta, horizon=T, reps=3,
                 true_type="strategic:theta_star", alpha="alpha1star", record=False)
    assert np.all(np.abs(r.payoff - 0.5) <= 1e-9 + r.remainder)


def test_constant_beliefs_have_no_upcrossings(perturbed):
    a = perturbed.commitment_action("alpha1star")
    prof = constant_profile(perturbed, a)
    r = simulate(perturbed, prof, horizon=50, reps=20, true_type="commitment:alpha1star", alpha=a,
                 theta_star="theta_star")
    assert np.all(r.upcrossings == 0)
    alive = r.a1 >= 0
    assert np.allclose(r.chi[:, :50][alive], r.chi0, rtol=1e-12, atol=0)


def test_simulation_is_thread_and_backend_deterministic(drift):
    s, prof = drift
    kw = dict(horizon=60, reps=1200, seed=5, true_type="prior", alpha="alpha1star")
    one = simulate(s, prof, threads=1, **kw)
    four = simulate(s, prof, threads=4, **kw)
    for f in ("payoff", "a1", "a2", "chi", "kl", "upcrossings", "true_types"):
        assert np.array_equal(getattr(one, f), getattr(four, f), equal_nan=True)
    numpy = simulate(s, prof, backend="numpy", **kw)
    assert np.array_equal(one.a1, numpy.a1) and np.array_equal(one.a2, numpy.a2)
    assert np.allclose(one.payoff, numpy.payoff, rtol=1e-12, atol=1e-12)


def test_kl_and_pinsker_on_traces(drift):
    s, prof = drift
    r = simulate(s, prof, horizon=200, reps=300, seed=2, true_type="commitment:alpha1star", alpha="alpha1star")
    alive = r.a1 >= 0
    assert np.all(r.kl[alive] >= 0)
    assert np.all(r.l1[alive] <= np.sqrt(2 * r.kl[alive]) + 1e-12)


def test_doob_floor_on_example_with_chi_two_thirds(example):
    s = drift_scenario(chi0=2 / 3)
    eq = dataclasses.replace(example, scenario=s)
    spec = RegionSpec.from_scenario(s, "theta_star", "alpha1star")
    r = simulate(s, eq.profile, horizon=300, reps=10_000, seed=1, true_type="commitment:alpha1star",
                 alpha="alpha1star", spec=spec, far_eps=0.1, record=False)
    assert r.chi0 == pytest.approx(2 / 3)
    p0 = float(np.mean(r.upcrossings == 0))
    assert p0 >= doob_floor(2 / 3, 0.1) - 3 * math.sqrt(p0 * (1 - p0) / 10_000)


def test_trace_csv_and_summary(drift):
    s, prof = drift
    r = simulate(s, prof, horizon=5, reps=2, alpha="alpha1star")
    lines = r.to_csv().strip().splitlines()
    assert lines[0] == "rep,t,a1,a2,u1,chi,kl,l1"
    assert len(lines) == 1 + 10
    summ = r.summary()
    assert summ["replications"] == 2 and "truncation_remainder" in summ["discounted_payoff"]
    assert len(r[0].history(s.game)) == 5


def test_supermartingale_equality_when_types_mimic(perturbed):
    a = perturbed.commitment_action("alpha1star")
    prof = constant_profile(perturbed, a)
    r = supermartingale_check(perturbed, prof, a, horizon=4)
    assert abs(r["max_violation"]) <= 1e-12


def test_supermartingale_example_from_period_one(example):
    r = supermartingale_check(example.scenario, example.profile, "alpha1star", horizon=5)
    assert r["passed"]


def test_supermartingale_refuses_deep_trees(perturbed):
    a = perturbed.commitment_action("alpha1star")
    with pytest.raises(ValueError):
        supermartingale_check(perturbed, constant_profile(perturbed, a), a, horizon=9)


def test_concentration_point_mass_and_report_only_regime():
    H = MixedAction.pure(ACTIONS1, "H")
    c = discounted_frequency_concentration(H, 0.99, reps=50)
    assert c["tails"]["0.1"]["H"] == 0.0
    assert c["mean_frequency"]["H"] == pytest.approx(1.0 - c["remainder"], abs=1e-12)
    low = discounted_frequency_concentration(MixedAction(ACTIONS1, [0.5, 0.5, 0]), 0.5, reps=50)
    assert not low["in_regime"]
