"""Survival of the chi band, the conditioned deviation strategy and its verification,
plus the scenario classifier.

Histories are enumerated as a level-keyed tree collapsed by belief state
(see ``trees``) under the commitment measure: player 1 draws from the
commitment action and player 2 follows the profile. Nodes whose chi has
left the band are kept as leaves but never expanded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dynamics import bayes_update, initial_belief, player2_action, replication_uniforms
from .game import ReputationScenario, best_reply_set, commitment_payoff
from .geometry import (
    RegionSpec,
    chi_statistic,
    in_convex_hull,
    in_lambda,
    lambda_margin,
    lambda_underline_distance,
    prior_likelihood,
)
from .strategies import StrategyProfile
from .trees import DEFAULT_BUDGET, HistoryGraph, enumerate_histories

BOUNDARY_TOL = 1e-9


def t_budget(mu_alpha: float, chi: float, eps: float) -> int:
    """Expected-count bound on periods with a far prediction: ceil(-2 (chi+eps) ln mu(alpha) / eps^3)."""
    return int(math.ceil(-2.0 * (chi + eps) * math.log(mu_alpha) / eps ** 3 - 1e-9))


def doob_floor(chi: float, eps: float) -> float:
    """Lower bound eps/(chi+eps) on the probability that chi never crosses from chi to chi+eps."""
    return eps / (chi + eps)


def prior_chi(profile: StrategyProfile, alpha, spec: RegionSpec) -> float:
    """chi at the empty history."""
    commit = profile.commitment_mask(profile.scenario.commitment_action(alpha))
    w = profile.strategic_state_matrix() @ spec.weights
    return float(profile.prior @ w / profile.prior[commit].sum())


def node_chi(graph: HistoryGraph, profile: StrategyProfile, alpha, spec: RegionSpec) -> np.ndarray:
    commit = profile.commitment_mask(alpha)
    w = profile.strategic_state_matrix() @ spec.weights
    den = graph.post[:, commit].sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, (graph.post @ w) / np.where(den > 0, den, 1.0), np.inf)


@dataclass
class SurvivalTable:
    graph: HistoryGraph
    chi: np.ndarray  # (N,)
    surv: np.ndarray  # (N,)
    bound: float  # chi + eps
    alpha: object
    horizon: int

    @property
    def root(self) -> float:
        return float(self.surv[0])

    @property
    def in_band(self) -> np.ndarray:
        return self.chi < self.bound

    def summary(self) -> dict:
        return {
            "root_survival": self.root,
            "band_bound": self.bound,
            "horizon": self.horizon,
            "nodes": int(self.graph.n_nodes),
            "truncation": "finite-horizon survival overestimates the infinite-horizon event",
        }


def survival_probabilities(s: ReputationScenario, profile: StrategyProfile, alpha, spec: RegionSpec,
                           eps: float, horizon: int, budget: int = DEFAULT_BUDGET) -> SurvivalTable:
    """Probability, from every reachable node, that chi stays below chi+eps through ``horizon``.

    Computed by backward induction under the commitment measure:
    surv = sum_a1 alpha(a1) sum_a2 sigma2(a2) 1{child in band} surv(child),
    with surv = 1 at in-band nodes of the last level and 0 out of band.
    """
    a = s.commitment_action(alpha)
    bound = spec.chi + eps
    commit = profile.commitment_mask(a)
    w = profile.strategic_state_matrix() @ spec.weights

    def chi_of(post):
        return (post @ w) / post[:, commit].sum(axis=1)

    root_chi = chi_of((profile.prior / profile.prior.sum())[None, :])[0]
    if not root_chi < bound:
        raise ValueError(f"chi at the root is {root_chi:g} >= chi + eps = {bound:g}: the band event is empty")
    graph = enumerate_histories(profile, horizon, a1_allowed=a.probs > 0,
                                expand=lambda post, st, p2: chi_of(post) < bound, budget=budget)
    chi = node_chi(graph, profile, a, spec)
    surv = np.where(chi < bound, 1.0, 0.0)
    alpha_p = a.probs
    for lev in range(horizon - 1, -1, -1):
        ids = np.flatnonzero((graph.level == lev) & (chi < bound))
        if ids.size == 0:
            continue
        ch = graph.child[ids]  # (n, n1, n2)
        live = ch >= 0
        vals = np.where(live, surv[np.where(live, ch, 0)], 0.0)
        surv[ids] = np.einsum("a,nab,nb->n", alpha_p, vals, graph.p2_dist[ids])
    return SurvivalTable(graph, chi, surv, bound, a, horizon)


@dataclass
class DeviationPlan:
    table: SurvivalTable
    probs: np.ndarray  # (N, n1) conditional law of player 1's action
    allowed: np.ndarray  # (N, n1) bool
    dead_ends: list  # in-band nodes whose every continuation leaves the band

    def to_dict(self, profile: StrategyProfile, max_nodes: int | None = None) -> dict:
        g = profile.scenario.game
        gr = self.table.graph
        names2 = None if profile.myopic else profile.player2.names
        nodes = []
        ids = np.flatnonzero((gr.level < self.table.horizon) & self.table.in_band)
        if max_nodes is not None:
            ids = ids[:max_nodes]
        for n in ids:
            machine = {}
            for k, t in enumerate(profile.types):
                if t.strategic and t.machine.n_states > 1:
                    machine[t.label] = t.machine.names[int(gr.states[n, k] - profile.type_offset[k])]
            nodes.append({
                "node": int(n),
                "t": int(gr.level[n]),
                "player2_state": names2[gr.p2[n]] if names2 else "myopic",
                "machine_states": machine,
                "chi": float(self.table.chi[n]),
                "survival": float(self.table.surv[n]),
                "allowed": [g.actions1[j] for j in np.flatnonzero(self.allowed[n])],
                "probabilities": {g.actions1[j]: float(p) for j, p in enumerate(self.probs[n]) if p > 0},
            })
        return {
            "alpha": self.table.alpha.label(),
            "band_bound": self.table.bound,
            "horizon": self.table.horizon,
            "root_survival": self.table.root,
            "dead_ends": [int(n) for n in self.dead_ends],
            "nodes": nodes,
        }


def construct_deviation(table: SurvivalTable) -> DeviationPlan:
    """Condition the commitment action on staying in the band.

    P(a1 | h) is proportional to alpha(a1) times the survival probability
    after a1; out of the band (and at dead ends) the plan plays alpha.
    """
    gr = table.graph
    a = table.alpha.probs
    N, n1, _ = gr.child.shape
    probs = np.tile(a, (N, 1))
    allowed = np.zeros((N, n1), dtype=bool)
    dead = []
    ids = np.flatnonzero((gr.level < table.horizon) & table.in_band)
    ch = gr.child[ids]
    live = ch >= 0
    vals = np.where(live, table.surv[np.where(live, ch, 0)], 0.0)
    after = np.einsum("nab,nb->na", vals, gr.p2_dist[ids])  # survival after each a1
    inband = np.where(live, table.in_band[np.where(live, ch, 0)], False)
    allowed[ids] = inband.any(axis=2) & (a > 0)[None, :]
    weight = a[None, :] * after
    tot = weight.sum(axis=1)
    ok = tot > 0
    probs[ids[ok]] = weight[ok] / tot[ok, None]
    dead = ids[~ok].tolist()
    return DeviationPlan(table, probs, allowed, dead)


def verify_deviation(s: ReputationScenario, profile: StrategyProfile, plan: DeviationPlan, alpha=None,
                     spec: RegionSpec | None = None, eps: float | None = None, reps: int = 10_000,
                     seed: int = 0, delta: float | None = None, backend: str | None = None) -> dict:
    """Simulate the plan against player 2 and check the three conclusions.

    (a) chi stays below chi + eps at every reached history (hard check);
    (b) share of paths whose discounted action frequency is within eps of
    alpha in every coordinate; (c) mean number of periods whose predicted
    action is more than eps from alpha in L1, against the expected-count bound.
    """
    table = plan.table
    a = table.alpha
    spec_chi = table.bound - eps if (spec is None and eps is not None) else (spec.chi if spec is not None else None)
    eps = table.bound - spec_chi if eps is None else eps
    delta = s.delta if delta is None else delta
    gr = table.graph
    T = table.horizon
    _, U = replication_uniforms(seed, range(reps), T)
    impl = kernels.get_backend(backend)
    a1s, _, nodes = impl.walk_tree(U, gr.child, plan.probs, gr.p2_dist, 0)
    visited = nodes[nodes >= 0]
    chi_vis = table.chi[visited]
    bad = chi_vis >= table.bound
    c9 = {"violations": int(bad.sum()), "visited": int(visited.size), "passed": not bool(bad.any())}
    if bad.any():
        r, t = np.argwhere((nodes >= 0) & (table.chi[np.maximum(nodes, 0)] >= table.bound))[0]
        g = s.game
        c9["first_violation"] = {"rep": int(r), "t": int(t), "history": [g.actions1[x] for x in a1s[r, :t]]}
    pred = gr.predicted(profile)
    l1 = np.abs(pred - a.probs[None, :]).sum(axis=1)
    steps = nodes[:, :T]
    far = np.where(steps >= 0, l1[np.maximum(steps, 0)] > eps, False).sum(axis=1)
    mu_alpha = float((s.prior_array[:, 1:] * s.commitment_cells(a)).sum())
    budget = t_budget(mu_alpha, spec_chi, eps)
    freq = impl.discounted_frequencies(a1s, delta, len(s.game.actions1))
    rem = 1.0 - delta ** T
    close = np.all(np.abs(freq / rem - a.probs[None, :]) <= eps, axis=1)
    p_close = float(close.mean())
    return {
        "replications": reps,
        "horizon": T,
        "chi_bound": table.bound,
        "c9": c9,
        "frequency": {
            "delta": delta,
            "epsilon": eps,
            "share_within_epsilon": p_close,
            "binomial_sigma": math.sqrt(p_close * (1 - p_close) / reps),
            "empirical_beta": 1 - p_close,
        },
        "far_periods": {
            "epsilon": eps,
            "mean": float(far.mean()),
            "std": float(far.std(ddof=1)) if reps > 1 else 0.0,
            "bound_T": budget,
            "mu_alpha": mu_alpha,
            "passed": bool(far.mean() <= budget),
        },
        "root_survival": table.root,
        "doob_floor": doob_floor(spec_chi, eps),
        "passed": bool(c9["passed"] and far.mean() <= budget),
    }


def conditioned_law_check(s: ReputationScenario, profile: StrategyProfile, plan: DeviationPlan,
                          spec: RegionSpec) -> dict:
    """Compare the plan's path law with the commitment measure conditioned on the band, path by path.

    The oracle replays every raw history with ``bayes_update`` and
    recomputes chi from scratch; the plan side follows the collapsed tree.
    Only small horizons are enumerable.
    """
    table = plan.table
    a = table.alpha
    T = table.horizon
    if T > 8:
        raise ValueError("raw path enumeration is limited to horizon 8")
    gr = table.graph
    supp = np.flatnonzero(a.probs > 0)
    paths = []  # (commitment probability, in band, plan probability)

    def chi_of(b):
        return chi_statistic(b.likelihood(profile, a), spec)

    def walk(b, node, p_commit, p_plan, depth):
        if depth == T:
            paths.append((p_commit, True, p_plan))
            return
        q = player2_action(b, profile)
        for a1 in supp:
            for a2 in np.flatnonzero(q > 0):
                nb = bayes_update(b, profile, int(a1), int(a2))
                pc = p_commit * a.probs[a1] * q[a2]
                child = gr.child[node, a1, a2] if node >= 0 else -1
                pp = p_plan * plan.probs[node, a1] * q[a2] if node >= 0 else 0.0
                if not chi_of(nb) < table.bound:
                    paths.append((pc, False, pp))
                    continue
                walk(nb, int(child), pc, pp, depth + 1)

    walk(initial_belief(profile), 0, 1.0, 1.0, 0)
    pc = np.array([p[0] for p in paths])
    inside = np.array([p[1] for p in paths])
    pp = np.array([p[2] for p in paths])
    event = pc[inside].sum()
    target = np.where(inside, pc / event, 0.0)
    diff = float(np.abs(target - pp).max())
    return {"paths": len(paths), "event_probability": float(event), "root_survival": table.root,
            "max_abs_difference": diff, "passed": diff <= 1e-12 and abs(event - table.root) <= 1e-12}


def classify_scenario(s: ReputationScenario, theta_star, alpha) -> dict:
    """Which side of the characterisation the prior falls on, with boundary distances."""
    g = s.game
    a = s.commitment_action(alpha)
    lam, phi = prior_likelihood(s, a)
    spec = RegionSpec.from_scenario(s, theta_star, a)
    chi0 = chi_statistic(lam, spec)
    margin, dist = lambda_margin(lam, theta_star, a, s)
    br_phi = best_reply_set(g, phi, a)
    others = [x for x in s.commitment_actions if x != a]
    hull = in_convex_hull(a, others)
    out = {
        "theta_star": g.states[g.state_index(theta_star)],
        "alpha": a.label(),
        "pure": a.is_pure,
        "lambda": dict(zip(g.states, lam.tolist())),
        "commitment_payoff": commitment_payoff(s, theta_star, a),
        "in_lambda": in_lambda(lam, theta_star, a, s),
        "lambda_margin": margin,
        "lambda_boundary_distance": dist,
        "chi": chi0,
        "in_lambda_underline": chi0 < 1.0,
        "lambda_underline_distance": lambda_underline_distance(lam, spec),
        "br_under_phi": list(br_phi),
        "br_under_phi_singleton": len(br_phi) == 1,
        "in_hull_of_other_commitments": hull,
    }
    if a.is_pure:
        if margin > BOUNDARY_TOL:
            verdict = ("statement-1", "payoff guarantee: prior likelihood vector in the commitment region")
        elif margin < -BOUNDARY_TOL and len(br_phi) == 1:
            verdict = ("statement-2", "failure construction applies: outside the closure, unique reply under phi")
        else:
            verdict = ("uncovered", "boundary or non-singleton reply under phi")
    else:
        if chi0 < 1.0 - BOUNDARY_TOL:
            verdict = ("statement-3", "payoff guarantee: chi < 1")
        elif chi0 > 1.0 + BOUNDARY_TOL and len(br_phi) == 1 and not hull:
            verdict = ("statement-4", "failure construction applies: chi > 1, unique reply, outside the hull")
        else:
            verdict = ("uncovered", "boundary, non-singleton reply under phi, or inside the hull")
    out["statement"], out["explanation"] = verdict
    return out


__all__ = [
    "DeviationPlan",
    "SurvivalTable",
    "classify_scenario",
    "conditioned_law_check",
    "construct_deviation",
    "doob_floor",
    "prior_chi",
    "survival_probabilities",
    "t_budget",
    "verify_deviation",
]
