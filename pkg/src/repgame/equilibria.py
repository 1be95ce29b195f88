"""Executable equilibrium constructions and a numerical incentive checker.

Two constructions are provided: the low-payoff profile for the three-state
example game with a mixed commitment action, and the general recipe that
drives a patient type's payoff down when the prior likelihood vector lies
outside the closure of the commitment region (``build_low_payoff_equilibrium``).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .game import (
    STRATEGIC,
    MixedAction,
    ReputationScenario,
    TIE_TOL,
    best_reply_set,
    unique_best_reply,
)
from .geometry import box_vertices, lambda_margin, prior_likelihood
from .scenarios import ACTIONS1, perturbed_scenario
from .scenario_io import scenario_from_dict, scenario_to_dict
from .strategies import (
    Machine,
    MyopicBestReply,
    StrategyProfile,
    machine_from_dict,
    machine_to_dict,
)
from .trees import TreeBudgetError, enumerate_histories


class ConstructionError(ValueError):
    """The preconditions of a construction fail."""


@dataclass
class EquilibriumMachine:
    """A strategy profile together with the inputs needed to rebuild it."""

    scenario: ReputationScenario
    player1: dict  # state -> Machine | MixedAction | [(weight, Machine)]
    player2: object  # Machine or MyopicBestReply
    off_path: dict  # player-2 state name -> {"state|characteristic": weight}
    name: str
    theta_star: str
    params: "ConstructionParams | None" = None

    def __post_init__(self):
        self.profile = StrategyProfile.build(self.scenario, self.player1, self.player2, self.off_path or None)

    def to_dict(self) -> dict:
        g = self.scenario.game
        p1 = {}
        for st, spec in self.player1.items():
            parts = spec if isinstance(spec, (list, tuple)) else [(1.0, spec)]
            mix = []
            for w, m in parts:
                if isinstance(m, MixedAction):
                    m = Machine.stationary(m, len(g.actions1), len(g.actions2))
                mix.append({"weight": float(w), "strategy": machine_to_dict(m, g.actions1, g.actions1, g.actions2)})
            p1[st] = {"mixture": mix}
        p2 = ({"myopic": True} if isinstance(self.player2, MyopicBestReply)
              else machine_to_dict(self.player2, g.actions2, g.actions1, g.actions2))
        return {
            "construction": self.name,
            "theta_star": self.theta_star,
            "scenario": scenario_to_dict(self.scenario),
            "profile": {"player1": p1, "player2": p2, "off_path_beliefs": self.off_path},
            "params": self.params.to_dict() if self.params is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EquilibriumMachine":
        s = scenario_from_dict(d["scenario"])
        g = s.game
        p1 = {}
        for st, spec in d["profile"]["player1"].items():
            parts = spec["mixture"] if "mixture" in spec else [{"weight": 1.0, "strategy": spec}]
            p1[st] = [(float(part["weight"]), machine_from_dict(part["strategy"], g.actions1, g.actions1, g.actions2))
                      for part in parts]
        p2spec = d["profile"].get("player2", {"myopic": True})
        p2 = MyopicBestReply() if p2spec.get("myopic") else machine_from_dict(p2spec, g.actions2, g.actions1, g.actions2)
        params = ConstructionParams.from_dict(d["params"]) if d.get("params") else None
        return cls(s, p1, p2, d["profile"].get("off_path_beliefs") or {}, d.get("construction", "custom"),
                   d["theta_star"], params)


# -- the example-game construction ----------------------------------------------


def _switch(n1, n2, first, then):
    """Two-state machine: play ``first`` once, then ``then`` forever."""
    return Machine(np.array([first, then]), np.ones((2, n1, n2), dtype=np.int64), 0, ("first", "after"))


def motivating_example_profile(eps: float = 0.1, delta: float = 0.9) -> EquilibriumMachine:
    """Low-payoff equilibrium of the example game with commitment (1-eps)H + eps*I.

    theta_star plays L forever and earns 1/2 per period; theta1 opens with H
    and theta2 with I, after which both mimic the commitment action; player 2
    answers H with M1 and I with M2, and after any later L mixes M1 and M2
    evenly forever.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    s = perturbed_scenario(eps, lam=(3.0, 3.0), commit_mass=0.1, theta_star_mass=0.25, delta=delta)
    g = s.game
    n1, n2 = len(g.actions1), len(g.actions2)
    alpha = s.commitment_action("alpha1star").probs
    e1 = np.eye(n1)
    H, I, L = (g.a1_index(a) for a in ("H", "I", "L"))
    player1 = {
        "theta_star": MixedAction.pure(ACTIONS1, "L"),
        "theta1": _switch(n1, n2, e1[H], alpha),
        "theta2": _switch(n1, n2, e1[I], alpha),
    }
    names = ("init", "afterH", "afterI", "afterL0", "punish")
    M1, M2 = g.a2_index("M1"), g.a2_index("M2")
    e2 = np.eye(n2)
    split = 0.5 * (e2[M1] + e2[M2])
    out = np.array([e2[M1], e2[M1], e2[M2], split, split])
    tr = np.zeros((5, n1, n2), dtype=np.int64)
    tr[0, H], tr[0, I], tr[0, L] = 1, 2, 3
    tr[1] = 1
    tr[1, L] = 4
    tr[2] = 2
    tr[2, L] = 4
    tr[3] = 3
    tr[4] = 4
    p2 = Machine(out, tr, 0, names)
    reset = {"theta1|strategic": 0.5, "theta2|strategic": 0.5}
    return EquilibriumMachine(s, player1, p2, {"punish": reset, "afterL0": reset}, "example-low-payoff",
                              "theta_star")


# -- the general construction ---------------------------------------------------


def _advantages(s, alpha_probs, a2, a2_star):
    """Per-state u2(theta, alpha, a2) - u2(theta, alpha, a2*)."""
    per_state = np.einsum("tij,i->tj", s.game.u2, alpha_probs)
    return per_state[:, a2] - per_state[:, a2_star]


def find_separating_pair(s: ReputationScenario, theta_star, a1_star):
    """A pair (lambda', a2') certifying that a1_star's commitment region is missed.

    Returns ``(lambda_prime, a2_prime)`` or None when the prior likelihood
    vector lies in the closure of the region. Among valid answers the first
    competitor in action order wins, then the first box vertex.
    """
    g = s.game
    a = s.commitment_action(a1_star)
    if not a.is_pure:
        raise ConstructionError("the separating pair is defined for a pure commitment action")
    star = g.a2_index(unique_best_reply(g, theta_star, a))
    i_star = g.state_index(theta_star)
    lam, phi = prior_likelihood(s, a)
    margin, _ = lambda_margin(lam, theta_star, a, s)
    if margin >= -TIE_TOL:
        return None
    base = np.einsum("t,tij,i->j", phi, g.u2, a.probs)
    br_phi = best_reply_set(g, phi, a)
    verts = box_vertices(lam)
    verts[:, i_star] = 0.0
    verts = np.unique(verts, axis=0)
    order = np.lexsort(tuple(verts[:, j] for j in reversed(range(g.m))) + ((verts > 0).sum(axis=1),))
    verts = verts[order]

    def ok(lp, j):
        d = _advantages(s, a.probs, j, star)
        return lp @ d > TIE_TOL and base[j] - base[star] + lp @ d > TIE_TOL

    if br_phi == (g.actions2[star],):
        for j in range(len(g.actions2)):
            if j == star:
                continue
            for v in verts:
                if ok(v, j):
                    return v, g.actions2[j]
        return None
    if len(br_phi) != 1:
        return None
    j = g.a2_index(br_phi[0])
    d = _advantages(s, a.probs, j, star)
    for th in range(g.m):
        if th == i_star or d[th] <= TIE_TOL:
            continue
        lp = np.zeros(g.m)
        lp[th] = lam[th]
        if ok(lp, j):
            return lp, g.actions2[j]
    return None


@dataclass
class ConstructionParams:
    theta_star: str
    a1_star: str
    a2_star: str
    a2_prime: str
    a1_prime: str
    lambda_prime: list
    lam: list
    epsilon: float
    eta: float
    kappa: float
    k_bar: int
    k_star: int
    T1: int
    beta_bar: float
    beta_under: float
    beta_bar_by_action: dict
    alpha_hat: dict
    b7_margin: float
    growth: float  # (1 - eta/2)/(1 - eta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ConstructionParams":
        return cls(**d)


def dyadic_below(pred, start: int = 1, stop: int = 40) -> float:
    """Largest 2^-j (j >= start) satisfying ``pred``."""
    for j in range(start, stop + 1):
        x = 2.0 ** -j
        if pred(x):
            return x
    raise ConstructionError("no dyadic value satisfies the requirement")


def k_bar(kappa: float, eta: float) -> int:
    """Longest run of a1* that one deviation can buy: ceil(ln(2 kappa/eta) / ln((1-eta/2)/(1-eta)))."""
    return max(1, int(math.ceil(math.log(2 * kappa / eta) / math.log((1 - eta / 2) / (1 - eta)) - 1e-12)))


def deviation_payoff_bound(kbar: int, T1: int, delta: float) -> float:
    """Upper bound on the patient type's payoff after a first deviation.

    (1 - delta^T1) + delta^T1 (1 - delta^kbar) / (1 - delta^(kbar+1)); tends
    to kbar/(kbar+1) as delta -> 1.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return (1 - delta ** T1) + delta ** T1 * (1 - delta ** kbar) / (1 - delta ** (kbar + 1))


def cycle_payoff(k_star: int, delta: float) -> float:
    """Discounted value of k_star payoffs of 1 followed by one 0, repeated."""
    return (1 - delta ** k_star) / (1 - delta ** (k_star + 1))


def _b7_margin(s, lam_p, a_idx, a2p, a2s, eta):
    """Smallest value of sum lam' [u2(., alpha', a2') - u2(., alpha', a2*)] over alpha'(a1*) >= 1 - eta.

    The expression is linear in alpha', so the minimum sits at a vertex:
    the pure a1* or (1 - eta) a1* + eta * (another action).
    """
    n1 = len(s.game.actions1)
    vals = []
    for b in range(n1):
        v = np.zeros(n1)
        v[a_idx] = 1.0
        if b != a_idx:
            v[a_idx] = 1 - eta
            v[b] = eta
        vals.append(lam_p @ _advantages(s, v, a2p, a2s))
    return float(min(vals))


def _rotation(n1, n2, a1_star, a1_prime, k_star):
    """theta*'s open-loop cycle: every action once, then k_star a1* and one a1'."""
    seq = list(range(n1)) + [a1_star] * k_star + [a1_prime]
    n = len(seq)
    out = np.eye(n1)[seq]
    nxt = [i + 1 for i in range(n - 1)] + [n1]
    tr = np.repeat(np.array(nxt, dtype=np.int64)[:, None, None], n1, axis=1).repeat(n2, axis=2)
    names = tuple(f"open{i}" for i in range(n1)) + tuple(f"cycle{i}" for i in range(k_star + 1))
    return Machine(out, tr, 0, names), seq


def _shadow(seq, n1, n2, on, off):
    """Play ``on`` while player 1's actions match theta*'s cycle ``seq``; ``off`` forever after a mismatch."""
    n = len(seq)
    out = np.array([on] * n + [off])
    tr = np.full((n + 1, n1, n2), n, dtype=np.int64)
    for i, a in enumerate(seq):
        tr[i, a, :] = i + 1 if i + 1 < n else n1
    names = tuple(f"track{i}" for i in range(n)) + ("off",)
    return Machine(out, tr, 0, names)


def build_low_payoff_equilibrium(s: ReputationScenario, theta_star, a1_star, eta: float | None = None,
                                 delta: float | None = None) -> EquilibriumMachine:
    """Assemble the low-payoff construction for a pure commitment action outside its region.

    Player 1's payoff is replaced by the indicator of (theta*, a1*, a2*).
    ``eta`` defaults to the largest dyadic value that keeps every other
    commitment action's weight on a1* below 1 - eta.
    """
    g = s.game
    a = s.commitment_action(a1_star)
    if not a.is_pure:
        raise ConstructionError("a1_star must be a pure commitment action")
    ai = int(np.flatnonzero(a.probs)[0])
    theta_star = g.states[g.state_index(theta_star)]
    i_star = g.state_index(theta_star)
    a2s_label = unique_best_reply(g, theta_star, a)
    a2s = g.a2_index(a2s_label)
    pair = find_separating_pair(s, theta_star, a1_star)
    if pair is None:
        raise ConstructionError("the prior likelihood vector lies in the closure of the commitment region")
    lam_p, a2p_label = pair
    a2p = g.a2_index(a2p_label)
    lam, phi = prior_likelihood(s, a)

    others = [x for x in s.commitment_actions if x != a]
    mixed = [x for x in others if not x.is_pure]
    top = max((x.probs[ai] for x in others), default=0.0)
    if top >= 1:
        raise ConstructionError("another commitment action puts all weight on a1*")
    kappa = 1 - min((x.probs[ai] for x in others), default=0.0)

    base = np.einsum("t,tij,i->j", phi, g.u2, a.probs)
    d_star = _advantages(s, a.probs, a2p, a2s)
    c_phi = base[a2p] - base[a2s]

    def b3(e):
        return c_phi + (1 - e) * (lam_p @ d_star) > 0

    epsilon = dyadic_below(b3) if mixed else 0.0
    if eta is None:
        eta = dyadic_below(lambda x: top < 1 - x and _b7_margin(s, lam_p, ai, a2p, a2s, x) > 0)
    if not (0 < eta < 1 and top < 1 - eta):
        raise ConstructionError(f"eta={eta} does not keep other commitment actions below 1 - eta")
    b7 = _b7_margin(s, lam_p, ai, a2p, a2s, eta)
    if b7 <= 0:
        raise ConstructionError(f"eta={eta} breaks the strict preference for a2' (margin {b7:g})")
    growth = (1 - eta / 2) / (1 - eta)
    kb = k_bar(kappa, eta)
    k_star = 2 * kb
    a1_prime = next(j for j in range(len(g.actions1)) if j != ai)

    prior = s.prior_array
    n1, n2 = len(g.actions1), len(g.actions2)
    alpha_hat, beta_bar_by, beta_ratio = {}, {}, {}
    for x in mixed:
        tilde = np.where(np.arange(n1) == ai, 0.0, x.probs / (1 - x.probs[ai]))
        hat = (1 - eta / 2) * np.eye(n1)[ai] + (eta / 2) * tilde
        alpha_hat[x.label()] = hat
        lam_x, phi_x = prior_likelihood(s, x)
        base_x = np.einsum("t,tij,i->j", phi_x, g.u2, x.probs)
        c0 = base_x[a2p] - base_x[a2s]
        c1 = lam_p @ _advantages(s, hat, a2p, a2s)
        beta_bar_by[x.label()] = max(0.0, -c0 / c1)
        mass_sigma = sum(prior[t, 0] * (epsilon / len(mixed)) * lam_p[t] / lam[t]
                         for t in range(g.m) if t != i_star and lam[t] > 0)
        commit_mass = (prior[:, 1:] * s.commitment_cells(x)).sum()
        beta_ratio[x.label()] = mass_sigma / commit_mass
    beta_bar = 2 * max(beta_bar_by.values(), default=0.0)
    beta_under = min(beta_ratio.values(), default=0.0)
    if beta_bar > 0 and beta_under > 0:
        T1 = max(1, int(math.ceil(math.log(beta_bar / beta_under) / math.log(growth) - 1e-12)))
    else:
        T1 = 1

    rot, seq = _rotation(n1, n2, ai, a1_prime, k_star)
    player1 = {theta_star: rot}
    e1 = np.eye(n1)
    for t, st in enumerate(g.states):
        if t == i_star:
            continue
        parts = []
        if lam[t] > 0:
            w_prime = (lam[t] - lam_p[t]) / lam[t]
            w_star = (1 - epsilon) * lam_p[t] / lam[t]
        else:
            w_prime, w_star = 1.0, 0.0
        if w_prime > 0:
            parts.append((w_prime, Machine.stationary(e1[a1_prime], n1, n2)))
        if w_star > 0:
            parts.append((w_star, Machine.stationary(e1[ai], n1, n2)))
        for x in mixed:
            w = (epsilon / len(mixed)) * lam_p[t] / lam[t] if lam[t] > 0 else 0.0
            if w > 0:
                parts.append((w, _shadow(seq, n1, n2, x.probs, alpha_hat[x.label()])))
        player1[st] = parts
    u1 = np.zeros_like(g.u1)
    u1[i_star, ai, a2s] = 1.0
    s2 = s.with_game(g.with_u1(u1))
    if delta is not None:
        s2 = ReputationScenario(s2.game, s2.plans, s2.prior, delta, s2.named_actions)
    params = ConstructionParams(
        theta_star=theta_star, a1_star=g.actions1[ai], a2_star=a2s_label, a2_prime=a2p_label,
        a1_prime=g.actions1[a1_prime], lambda_prime=lam_p.tolist(), lam=lam.tolist(), epsilon=epsilon,
        eta=float(eta), kappa=float(kappa), k_bar=kb, k_star=k_star, T1=T1, beta_bar=float(beta_bar),
        beta_under=float(beta_under), beta_bar_by_action={k: float(v) for k, v in beta_bar_by.items()},
        alpha_hat={k: dict(zip(g.actions1, v.tolist())) for k, v in alpha_hat.items()}, b7_margin=b7,
        growth=growth,
    )
    return EquilibriumMachine(s2, player1, MyopicBestReply(), {}, "low-payoff-construction", theta_star, params)


def on_path_payoff(eq: EquilibriumMachine, delta: float) -> dict:
    """Closed-form discounted payoff of theta*'s on-path cycle.

    The opening periods are replayed exactly; from then on the cycle pays
    1 in each a1* period provided player 2 answers with a2*, which is
    checked along one full cycle.
    """
    from .dynamics import bayes_update, initial_belief, player2_action

    p = eq.params
    g = eq.scenario.game
    prof = eq.profile
    n1 = len(g.actions1)
    k = prof.type_index(f"{p.theta_star}|{STRATEGIC}")
    i_star = g.state_index(p.theta_star)
    b = initial_belief(prof)
    value = 0.0
    cycle_ok = True
    for t in range(n1 + 2 * (p.k_star + 1)):
        a1 = int(np.argmax(prof.out1[b.machine_states[k]]))
        a2 = int(np.argmax(player2_action(b, prof)))
        u = g.u1[i_star, a1, a2]
        if t < n1:
            value += (1 - delta) * delta ** t * u
        elif g.actions1[a1] == p.a1_star and g.actions2[a2] != p.a2_star:
            cycle_ok = False
        b = bayes_update(b, prof, a1, a2)
    value += delta ** n1 * cycle_payoff(p.k_star, delta)
    return {"value": value, "cycle_pays_every_a1_star": cycle_ok, "limit": p.k_star / (p.k_star + 1)}


def beta_dynamics_check(eq: EquilibriumMachine, horizon: int = 4) -> dict:
    """Exact check of the growth of beta_t(alpha) at histories off theta*'s path.

    beta_t(alpha) is the posterior mass of strategic types following the
    shadow strategy for alpha over the mass of the alpha commitment cells.
    After a1* it must grow by at least (1 - eta/2)/(1 - eta); after any other
    action it may shrink by at most eta/(2 kappa).
    """
    p = eq.params
    prof = eq.profile
    g = eq.scenario.game
    ai = g.a1_index(p.a1_star)
    graph = enumerate_histories(prof, horizon, level_keyed=True)
    worst = {"after_a1_star": math.inf, "after_other": math.inf}
    checked = 0
    for label in p.alpha_hat:
        x = eq.scenario.commitment_action(label)
        commit = prof.commitment_mask(x)
        shadow = np.array([t.strategic and t.machine.names[-1] == "off" for t in prof.types])
        off_state = np.array([t.machine.n_states - 1 + off for t, off in zip(prof.types, prof.type_offset)])
        for n in range(graph.n_nodes):
            if graph.level[n] >= horizon:
                continue
            is_off = shadow & (graph.states[n] == off_state)
            if not is_off.any():
                continue
            post = graph.post[n]
            beta = post[is_off].sum() / post[commit].sum()
            for a1 in range(len(g.actions1)):
                for a2 in np.flatnonzero(graph.p2_dist[n] > 0):
                    c = graph.child[n, a1, a2]
                    if c < 0:
                        continue
                    cp = graph.post[c]
                    if cp[commit].sum() <= 0:
                        continue
                    nxt = cp[shadow].sum() / cp[commit].sum()
                    if a1 == ai:
                        worst["after_a1_star"] = min(worst["after_a1_star"], nxt / beta - p.growth)
                    else:
                        worst["after_other"] = min(worst["after_other"], nxt / beta - p.eta / (2 * p.kappa))
                    checked += 1
    return {"checked_transitions": checked, "min_margin": worst,
            "passed": checked > 0 and min(worst.values()) >= -1e-9}


# -- incentive checking -------------------------------------------------------


def _path_to(graph, target):
    """Shortest observed history from the root to ``target``."""
    prev = {0: None}
    q = deque([0])
    while q:
        n = q.popleft()
        if n == target:
            break
        for a1, a2 in np.argwhere(graph.child[n] >= 0):
            c = int(graph.child[n, a1, a2])
            if c not in prev:
                prev[c] = (n, int(a1), int(a2))
                q.append(c)
    out = []
    n = target
    while prev.get(n) is not None:
        n, a1, a2 = prev[n]
        out.append((a1, a2))
    return out[::-1]


def _type_values(graph, profile, k, u1, delta, iters):
    """Value of type k following its machine at every node, with the one-shot deviation Q table."""
    N = graph.n_nodes
    n1 = profile.out1.shape[1]
    sigma = profile.out1[graph.states[:, k]]  # (N, n1)
    q2 = graph.p2_dist  # (N, n2)
    reward = q2 @ u1.T  # (N, n1)
    child = graph.child
    valid = child >= 0
    safe = np.where(valid, child, 0)
    # a deviation is evaluable only if every player-2 reply leads somewhere known
    known = np.all(valid | (q2[:, None, :] == 0), axis=2)  # (N, n1)
    rows, cols, vals = [], [], []
    for a1 in range(n1):
        for b in range(q2.shape[1]):
            w = sigma[:, a1] * q2[:, b]
            m = (w > 0) & valid[:, a1, b]
            rows.append(np.flatnonzero(m))
            cols.append(child[m, a1, b])
            vals.append(w[m])
    P = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    r = (sigma * reward).sum(axis=1)
    own_known = np.all(known | (sigma == 0), axis=1)
    if graph.closed and own_known.all():
        V = spsolve((sparse.identity(N, format="csc") - delta * P).tocsc(), (1 - delta) * r)
        exact = True
    else:
        V = np.zeros(N)
        for _ in range(iters):
            V = (1 - delta) * r + delta * (P @ V)
        exact = False
    cont = np.einsum("nab,nb->na", V[safe] * valid, q2)
    Q = (1 - delta) * reward + delta * cont
    Q = np.where(known, Q, np.nan)
    return V, Q, exact


def check_incentives(eq, delta: float, horizon: int = 200, tol: float = 1e-6, theta_star=None,
                     budget: int = 200_000) -> dict:
    """Player 2's best replies and theta*'s one-shot deviations at every reachable node.

    ``eq`` is an EquilibriumMachine or a StrategyProfile (then
    ``theta_star`` is required). The node set is the closure of the public
    history tree under all of player 1's actions, collapsed by machine
    states and posterior. Continuation values are solved exactly when the
    closure is finite, otherwise by ``horizon`` rounds of value iteration
    (truncation remainder delta^horizon * max|u1| reported).
    """
    prof = eq.profile if isinstance(eq, EquilibriumMachine) else eq
    theta_star = theta_star or eq.theta_star
    g = prof.scenario.game
    try:
        graph = enumerate_histories(prof, horizon, level_keyed=False, budget=budget)
    except TreeBudgetError as e:
        return {"status": "refused", "reason": str(e), "nodes": e.count, "budget": e.budget, "passed": None}
    N = graph.n_nodes
    remainder = 0.0 if graph.closed else float(delta ** horizon * np.abs(g.u1).max())

    # player 2
    acts = prof.out1[graph.states]  # (N, K, n1)
    v2 = np.einsum("nk,nka,kab->nb", graph.post, acts, prof.u2_types)
    best = v2.max(axis=1)
    worst_used = np.where(graph.p2_dist > 0, v2, np.inf).min(axis=1)
    p2_gap = best - worst_used
    j2 = int(np.argmax(p2_gap))
    p2_report = {
        "max_violation": float(p2_gap[j2]),
        "passed": bool(p2_gap[j2] <= tol),
        "where": _describe(graph, prof, j2),
    }

    # theta*'s subtypes
    i = g.state_index(theta_star)
    subtypes = [k for k, t in enumerate(prof.types) if t.strategic and t.state == i]
    p1_reports = []
    gains_all = []
    for k in subtypes:
        V, Q, exact = _type_values(graph, prof, k, g.u1[i], delta, horizon)
        gain = np.nanmax(Q, axis=1) - V
        usable = np.isfinite(gain) if graph.closed else np.isfinite(gain) & (graph.level < horizon // 2)
        gain = np.where(usable, gain, -np.inf)
        j = int(np.argmax(gain))
        gains_all.append(gain[j])
        p1_reports.append({
            "type": prof.types[k].label,
            "max_gain": float(gain[j]),
            "passed": bool(gain[j] <= tol + remainder),
            "where": _describe(graph, prof, j),
            "best_deviation": g.actions1[int(np.nanargmax(Q[j]))] if np.isfinite(Q[j]).any() else None,
            "value_at_root": float(V[0]),
            "exact_solve": exact,
            "nodes_checked": int(usable.sum()),
        })
    return {
        "status": "checked",
        "delta": delta,
        "tolerance": tol,
        "nodes": N,
        "closed": bool(graph.closed),
        "truncation_remainder": remainder,
        "player2": p2_report,
        "theta_star": p1_reports,
        "passed": bool(p2_report["passed"] and all(r["passed"] for r in p1_reports)),
    }


def _describe(graph, prof, n):
    g = prof.scenario.game
    hist = _path_to(graph, n)
    names = prof.player2.names if not prof.myopic else None
    return {
        "node": int(n),
        "history": [f"{g.actions1[a]}/{g.actions2[b]}" for a, b in hist],
        "t": len(hist),
        "player2_state": names[graph.p2[n]] if names else "myopic",
    }


__all__ = [
    "ConstructionError",
    "ConstructionParams",
    "EquilibriumMachine",
    "beta_dynamics_check",
    "build_low_payoff_equilibrium",
    "check_incentives",
    "cycle_payoff",
    "deviation_payoff_bound",
    "find_separating_pair",
    "k_bar",
    "motivating_example_profile",
    "on_path_payoff",
]
