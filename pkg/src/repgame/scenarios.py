"""Ready-made scenarios: the three-state example game, its mixed-commitment
variant, a drifting-belief scenario for the Monte Carlo checks, the
low-payoff construction example, and random scenarios for property tests."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .game import STRATEGIC, MixedAction, Plan, ReputationScenario, StageGame, random_mixed

STATES = ("theta_star", "theta1", "theta2")
ACTIONS1 = ("H", "I", "L")
ACTIONS2 = ("G", "M1", "M2")

F = Fraction
U1 = [
    [[1, F(-1, 2), F(-1, 2)], [2, 0, 0], [3, F(1, 2), F(1, 2)]],
    [[2, 1, -1], [2, 1, -1], [3, F(3, 2), 0]],
    [[2, -1, 1], [2, -1, 1], [3, 0, F(3, 2)]],
]
U2 = [
    [[3, 0, 0], [-1, F(-1, 2), F(-1, 2)], [F(-3, 2), -1, -1]],
    [[F(1, 2), F(3, 2), 0], [0, 1, F(-1, 2)], [-1, -1, -1]],
    [[F(1, 2), 0, F(3, 2)], [0, F(-1, 2), 1], [-1, -1, -1]],
]


def example_game() -> StageGame:
    return StageGame(STATES, ACTIONS1, ACTIONS2, np.array(U1, dtype=float), np.array(U2, dtype=float))


def _fill_prior(game, plans, fixed, total=1.0):
    """Spread the mass left over by ``fixed`` evenly across the remaining cells."""
    chars = (STRATEGIC,) + tuple(p.name for p in plans)
    cells = [(s, c) for c in chars for s in game.states]
    rest = [c for c in cells if c not in fixed]
    left = total - sum(fixed.values())
    if left <= 0 or not rest:
        raise ValueError("fixed prior cells leave no mass for the remaining cells")
    prior = dict(fixed)
    prior.update({c: left / len(rest) for c in rest})
    return prior


def benchmark_scenario(lam=(3.0, 3.0), commit_mass=0.1, theta_star_mass=0.25, delta=0.9) -> ReputationScenario:
    """Commitment actions {H, L}; H is played only in theta_star.

    ``lam`` sets the strategic masses of theta1, theta2 as multiples of the
    H-commitment mass.
    """
    g = example_game()
    H = MixedAction.pure(ACTIONS1, "H")
    L = MixedAction.pure(ACTIONS1, "L")
    plans = (Plan("gamma_H", (H, L, L)), Plan("gamma_L", (L, L, L)))
    fixed = {
        ("theta_star", "gamma_H"): commit_mass,
        ("theta1", STRATEGIC): lam[0] * commit_mass,
        ("theta2", STRATEGIC): lam[1] * commit_mass,
        ("theta_star", STRATEGIC): theta_star_mass,
    }
    return ReputationScenario(g, plans, _fill_prior(g, plans, fixed), delta)


def mixed_commitment(eps: float) -> MixedAction:
    return MixedAction(ACTIONS1, [1 - eps, eps, 0.0], name="alpha1star")


def perturbed_scenario(eps=0.1, lam=(3.0, 3.0), commit_mass=0.1, theta_star_mass=0.25, delta=0.9) -> ReputationScenario:
    """The example game with the H commitment replaced by (1-eps)H + eps*I."""
    g = example_game()
    a = mixed_commitment(eps)
    L = MixedAction.pure(ACTIONS1, "L")
    plans = (Plan("gamma_alpha", (a, L, L)), Plan("gamma_L", (L, L, L)))
    fixed = {
        ("theta_star", "gamma_alpha"): commit_mass,
        ("theta1", STRATEGIC): lam[0] * commit_mass,
        ("theta2", STRATEGIC): lam[1] * commit_mass,
        ("theta_star", STRATEGIC): theta_star_mass,
    }
    return ReputationScenario(g, plans, _fill_prior(g, plans, fixed), delta, {"alpha1star": a})


def drift_scenario(chi0=0.5, eps=0.1, commit_mass=0.1, theta_star_mass=0.6, delta=0.99) -> ReputationScenario:
    """Mixed commitment 0.9H + 0.1I with theta1, theta2 masses set so the
    chi statistic starts at ``chi0`` (split evenly between the two states)."""
    psi = 3.0 - 3.5 * eps  # tie point of the G vs M1 comparison under (1-eps)H + eps*I
    lam = chi0 / 2 * psi
    return perturbed_scenario(eps, (lam, lam), commit_mass, theta_star_mass, delta)


def construction_scenario(lam=(4.0, 4.0), h_mass=0.08, theta_star_mass=0.1, delta=0.999) -> ReputationScenario:
    """Commitment actions {H, alpha} with alpha = H/2 + I/4 + L/4 fully mixed.

    H is committed to only in theta_star, so the H-conditional state
    distribution is a point mass there.
    """
    g = example_game()
    H = MixedAction.pure(ACTIONS1, "H")
    alpha = MixedAction(ACTIONS1, [0.5, 0.25, 0.25], name="alpha_mix")
    plans = (Plan("gamma_H", (H, alpha, alpha)), Plan("gamma_mix", (alpha, alpha, alpha)))
    fixed = {
        ("theta_star", "gamma_H"): h_mass,
        ("theta1", STRATEGIC): lam[0] * h_mass,
        ("theta2", STRATEGIC): lam[1] * h_mass,
        ("theta_star", STRATEGIC): theta_star_mass,
    }
    return ReputationScenario(g, plans, _fill_prior(g, plans, fixed), delta, {"alpha_mix": alpha})


def random_scenario(rng: np.random.Generator, m=None, n1=None, n2=None, n_plans=None, delta=0.9) -> ReputationScenario:
    """Random full-support scenario with small integer-ish payoffs."""
    m = m or int(rng.integers(1, 4))
    n1 = n1 or int(rng.integers(2, 4))
    n2 = n2 or int(rng.integers(2, 4))
    n_plans = n_plans or int(rng.integers(1, 3))
    states = tuple(f"s{i}" for i in range(m))
    a1 = tuple(f"a{i}" for i in range(n1))
    a2 = tuple(f"b{i}" for i in range(n2))
    u1 = rng.integers(-4, 5, size=(m, n1, n2)) / 2.0
    u2 = rng.integers(-4, 5, size=(m, n1, n2)) / 2.0 + rng.normal(0, 1e-3, size=(m, n1, n2))
    g = StageGame(states, a1, a2, u1, u2)
    plans = []
    for j in range(n_plans):
        acts = []
        for _ in range(m):
            if rng.random() < 0.4:
                acts.append(MixedAction.pure(a1, a1[int(rng.integers(n1))]))
            else:
                acts.append(MixedAction(a1, random_mixed(rng, n1, zero_prob=0.2)))
        plans.append(Plan(f"plan{j}", tuple(acts)))
    chars = (STRATEGIC,) + tuple(p.name for p in plans)
    w = rng.dirichlet(np.ones(m * len(chars))) * 0.9 + 0.1 / (m * len(chars))
    prior = {(s, c): float(w[k]) for k, (s, c) in enumerate((s, c) for c in chars for s in states)}
    return ReputationScenario(g, tuple(plans), prior, delta)


def drift_profile(s: ReputationScenario):
    """Machine profile for ``drift_scenario`` whose beliefs drift under the commitment measure.

    theta1 mixes 0.8H + 0.2I and theta2 0.97H + 0.03L every period,
    theta_star plays L, and player 2 plays G until L is first observed and
    M1 from then on.
    """
    from .strategies import Machine, StrategyProfile

    g = s.game
    n1, n2 = len(g.actions1), len(g.actions2)
    player1 = {
        "theta_star": MixedAction.pure(ACTIONS1, "L"),
        "theta1": MixedAction(ACTIONS1, [0.8, 0.2, 0.0]),
        "theta2": MixedAction(ACTIONS1, [0.97, 0.0, 0.03]),
    }
    tr = np.zeros((2, n1, n2), dtype=np.int64)
    tr[0, g.a1_index("L")] = 1
    tr[1] = 1
    p2 = Machine(np.eye(n2)[[g.a2_index("G"), g.a2_index("M1")]], tr, 0, ("trusting", "wary"))
    return StrategyProfile.build(s, player1, p2)


def random_profile(rng: np.random.Generator, s: ReputationScenario, max_states: int = 3, myopic_prob: float = 0.5):
    """Random machine strategies for every strategic type and for player 2.

    Strategic types get machines with up to ``max_states`` states and random
    mixed outputs; player 2 is myopic with probability ``myopic_prob``.
    """
    from .strategies import Machine, MyopicBestReply, StrategyProfile

    g = s.game
    n1, n2 = len(g.actions1), len(g.actions2)

    def machine(n_out):
        k = int(rng.integers(1, max_states + 1))
        out = np.array([random_mixed(rng, n_out, zero_prob=0.2) for _ in range(k)])
        return Machine(out, rng.integers(0, k, size=(k, n1, n2)), 0)

    player1 = {st: machine(n1) for st in g.states}
    player2 = MyopicBestReply() if rng.random() < myopic_prob else machine(n2)
    return StrategyProfile.build(s, player1, player2)
