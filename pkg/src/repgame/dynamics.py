"""Bayesian belief updating, Monte Carlo simulation and the trackers built on it.

Replication ``r`` of a run with seed ``s`` draws everything from
``numpy.random.default_rng([s, r])``: first one uniform that picks the true
type, then a (horizon, 2) block of uniforms for player 1's and player 2's
actions. Results therefore do not depend on chunking, thread count or
kernel backend.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .game import STRATEGIC, MixedAction, ReputationScenario, ScenarioError, TIE_TOL
from .geometry import RegionSpec, prior_likelihood
from .strategies import OffPathError, StrategyProfile
from .trees import OFFPATH_MASS, enumerate_histories

CHUNK = 512


@dataclass(frozen=True)
class BeliefState:
    posterior: np.ndarray  # (K,) over the profile's types
    machine_states: np.ndarray  # (K,) global machine-state index per type
    p2_state: int
    t: int = 0

    def cell_posterior(self, profile: StrategyProfile) -> dict:
        """Posterior aggregated to (state, characteristic) cells."""
        g = profile.scenario.game
        out = {}
        for p, ty in zip(self.posterior, profile.types):
            key = (g.states[ty.state], ty.characteristic)
            out[key] = out.get(key, 0.0) + float(p)
        return out

    def likelihood(self, profile: StrategyProfile, alpha) -> np.ndarray:
        """lambda(h) for commitment action ``alpha``, in state order."""
        a = profile.scenario.commitment_action(alpha)
        den = self.posterior[profile.commitment_mask(a)].sum()
        num = self.posterior @ profile.strategic_state_matrix()
        if den <= 0:
            return np.full(num.shape, np.inf)
        return num / den

    def chi(self, profile: StrategyProfile, alpha, spec: RegionSpec) -> float:
        return float(self.likelihood(profile, alpha) @ spec.weights)


def initial_belief(profile: StrategyProfile) -> BeliefState:
    return BeliefState(profile.prior / profile.prior.sum(), profile.init1.copy(), profile.init2, 0)


def predicted_action(b: BeliefState, profile: StrategyProfile) -> MixedAction:
    """Posterior-weighted average of every type's current mixed action."""
    p = b.posterior @ profile.out1[b.machine_states]
    p = np.clip(p, 0.0, None)
    return MixedAction(profile.scenario.game.actions1, p / p.sum())


def player2_action(b: BeliefState, profile: StrategyProfile) -> np.ndarray:
    if profile.myopic:
        acts = profile.out1[b.machine_states]
        v = np.einsum("k,ka,kab->b", b.posterior, acts, profile.u2_types)
        out = np.zeros(v.shape[0])
        out[int(np.argmax(v >= v.max() - TIE_TOL))] = 1.0
        return out
    return profile.out2[b.p2_state].copy()


def bayes_update(b: BeliefState, profile: StrategyProfile, a1, a2=None) -> BeliefState:
    """Condition on player 1's action and advance every machine.

    ``a2`` defaults to player 2's action when that action is pure. Raises
    OffPathError when no type could have played ``a1`` and the profile has
    no off-path belief for the resulting player-2 state.
    """
    g = profile.scenario.game
    i = g.a1_index(a1) if isinstance(a1, str) else int(a1)
    if a2 is None:
        q = player2_action(b, profile)
        if np.count_nonzero(q) != 1:
            raise ValueError("player 2 mixes here; pass the observed a2")
        j = int(np.flatnonzero(q)[0])
    else:
        j = g.a2_index(a2) if isinstance(a2, str) else int(a2)
    post = b.posterior * profile.out1[b.machine_states, i]
    states = profile.trans1[b.machine_states, i, j]
    p2 = int(profile.trans2[b.p2_state, i, j])
    total = post.sum()
    if total < OFFPATH_MASS:
        if profile.has_reset[p2]:
            post = profile.reset[p2].copy()
        else:
            raise OffPathError(f"action {g.actions1[i]} has zero probability at t={b.t}", b.t)
    else:
        post = post / total
    return BeliefState(post, states, p2, b.t + 1)


def kl_divergence(p, q) -> float:
    """d(p || q) in nats over the support of p."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    s = p > 0
    if np.any(q[s] <= 0):
        return math.inf
    ps, qs = p[s], q[s]
    with np.errstate(over="ignore"):
        x = qs / ps - 1.0
    # p log(p/q) - p + q is nonnegative per term; log1p keeps it accurate when q is close to p
    near = np.abs(x) < 0.5
    terms = np.where(near, ps * (np.where(near, x, 0.0) - np.log1p(np.where(near, x, 0.0))),
                     ps * np.log(ps / qs) - ps + qs)
    return float(terms.sum() + q[~s].sum())


def chi_weights(profile: StrategyProfile, alpha: MixedAction, spec: RegionSpec):
    """Per-type numerator and denominator weights of the chi statistic."""
    commit = profile.commitment_mask(alpha).astype(float)
    w = profile.strategic_state_matrix() @ spec.weights
    return commit, w


def default_theta_star(s: ReputationScenario, alpha: MixedAction) -> str:
    _, phi = prior_likelihood(s, alpha)
    return s.game.states[int(np.argmax(phi))]


# -- simulation ---------------------------------------------------------------


@dataclass
class TraceRecord:
    rep: int
    true_type: str
    a1: np.ndarray
    a2: np.ndarray
    u1: np.ndarray
    chi: np.ndarray
    kl: np.ndarray
    l1: np.ndarray
    payoff: float
    discounted_frequency: np.ndarray  # normalised to sum to 1
    upcrossings: int
    aborted_at: int  # -1 if the trace ran to the horizon

    @property
    def off_path(self) -> bool:
        return self.aborted_at >= 0

    def history(self, game) -> list:
        n = self.a1.shape[0] if self.aborted_at < 0 else self.aborted_at + 1
        return [(game.actions1[x], game.actions2[y]) for x, y in zip(self.a1[:n], self.a2[:n]) if x >= 0]

    def lambda_path(self, profile: StrategyProfile, alpha) -> np.ndarray:
        """Exact lambda(h^t) along the recorded history, by replaying Bayes' rule."""
        b = initial_belief(profile)
        out = [b.likelihood(profile, alpha)]
        for x, y in zip(self.a1, self.a2):
            if x < 0:
                break
            b = bayes_update(b, profile, int(x), int(y))
            out.append(b.likelihood(profile, alpha))
        return np.array(out)


@dataclass
class SimulationResult(Sequence):
    scenario: ReputationScenario
    alpha: MixedAction
    delta: float
    horizon: int
    seed: int
    true_types: np.ndarray
    type_labels: tuple
    payoff: np.ndarray
    freq: np.ndarray  # raw truncated discounted frequencies (sum to 1 - delta^T)
    far_count: np.ndarray
    kl_sum: np.ndarray
    upcrossings: np.ndarray
    chi_max: np.ndarray
    aborted_at: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    u1: np.ndarray
    chi: np.ndarray
    kl: np.ndarray
    l1: np.ndarray
    band: tuple
    far_eps: float
    chi0: float
    backend: str = kernels.BACKEND
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.payoff.shape[0]

    def __getitem__(self, r):
        if isinstance(r, slice):
            return [self[i] for i in range(*r.indices(len(self)))]
        if not self.recorded:
            raise IndexError("paths were not recorded for this run (record=False)")
        rem = 1.0 - self.delta ** self.horizon
        return TraceRecord(
            rep=int(r),
            true_type=self.type_labels[self.true_types[r]],
            a1=self.a1[r],
            a2=self.a2[r],
            u1=self.u1[r],
            chi=self.chi[r],
            kl=self.kl[r],
            l1=self.l1[r],
            payoff=float(self.payoff[r]),
            discounted_frequency=self.freq[r] / rem if rem > 0 else self.freq[r],
            upcrossings=int(self.upcrossings[r]),
            aborted_at=int(self.aborted_at[r]),
        )

    @property
    def recorded(self) -> bool:
        return self.a1.shape[0] == len(self)

    @property
    def remainder(self) -> float:
        """Bound on the discounted payoff mass beyond the horizon: delta^T * max|u1|."""
        return float(self.delta ** self.horizon * np.abs(self.scenario.game.u1).max())

    def summary(self) -> dict:
        R = len(self)
        p0 = float(np.mean(self.upcrossings == 0))
        return {
            "replications": R,
            "horizon": self.horizon,
            "delta": self.delta,
            "seed": self.seed,
            "alpha": self.alpha.label(),
            "backend": self.backend,
            "chi0": self.chi0,
            "band": list(self.band),
            "discounted_payoff": {
                "mean": float(self.payoff.mean()),
                "std": float(self.payoff.std(ddof=1)) if R > 1 else 0.0,
                "min": float(self.payoff.min()),
                "max": float(self.payoff.max()),
                "truncation_remainder": self.remainder,
            },
            "kl_sum": {
                "mean": float(self.kl_sum.mean()),
                "std": float(self.kl_sum.std(ddof=1)) if R > 1 and np.isfinite(self.kl_sum).all() else None,
                "infinite": int(np.sum(~np.isfinite(self.kl_sum))),
            },
            "far_periods": {"epsilon": self.far_eps, "mean": float(self.far_count.mean())},
            "no_upcrossing_probability": {"value": p0, "binomial_sigma": math.sqrt(p0 * (1 - p0) / R)},
            "aborted": int(np.sum(self.aborted_at >= 0)),
        }

    def to_csv(self, max_reps: int | None = None) -> str:
        """Long-format trace CSV: rep, t, a1, a2, u1, chi, kl, l1."""
        if not self.recorded:
            raise ValueError("paths were not recorded for this run")
        g = self.scenario.game
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "t", "a1", "a2", "u1", "chi", "kl", "l1"])
        reps = range(len(self)) if max_reps is None else range(min(max_reps, len(self)))
        for r in reps:
            for t in range(self.horizon):
                x = self.a1[r, t]
                if x < 0:
                    break
                w.writerow([r, t, g.actions1[x], g.actions2[self.a2[r, t]], f"{self.u1[r, t]:.12g}",
                            f"{self.chi[r, t]:.12g}", f"{self.kl[r, t]:.12g}", f"{self.l1[r, t]:.12g}"])
        return buf.getvalue()


def replication_uniforms(seed: int, reps: Sequence[int], horizon: int):
    """Per-replication (type draw, action uniforms)."""
    type_u = np.empty(len(reps))
    U = np.empty((len(reps), horizon, 2))
    for n, r in enumerate(reps):
        rng = np.random.default_rng([int(seed), int(r)])
        type_u[n] = rng.random()
        U[n] = rng.random((horizon, 2))
    return type_u, U


def _pick_types(weights, type_u):
    cum = np.cumsum(weights)
    idx = np.searchsorted(cum, type_u * cum[-1], side="right")
    return np.minimum(idx, np.flatnonzero(weights > 0)[-1]).astype(np.int64)


def simulate(s: ReputationScenario, profile: StrategyProfile, delta: float | None = None, horizon: int = 100,
             reps: int = 1, seed: int = 0, true_type="prior", alpha=None, spec: RegionSpec | None = None,
             theta_star=None, band=None, far_eps: float = 0.1, record: bool = True, threads: int = 1,
             backend: str | None = None) -> SimulationResult:
    """Monte Carlo run of ``reps`` independent plays of ``profile``.

    ``true_type`` selects the realised player-1 type: ``"prior"``,
    ``"commitment:<action>"``, ``"strategic:<state>"``, a type label or index.
    ``alpha`` is the commitment action tracked by the KL, L1 and chi columns
    (default: the first commitment action). ``spec`` defines chi; by default
    psi* for ``theta_star`` (itself defaulting to the most likely state
    under the alpha-committed cells). ``band = (a, b)`` sets the upcrossing
    band, by default ``(chi0, chi0 + far_eps)``.
    """
    if horizon < 1 or reps < 1:
        raise ValueError("horizon and reps must be at least 1")
    delta = s.delta if delta is None else float(delta)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    alpha = s.commitment_actions[0] if alpha is None else s.commitment_action(alpha)
    if spec is None:
        theta_star = theta_star or default_theta_star(s, alpha)
        spec = RegionSpec.from_scenario(s, theta_star, alpha)
    commit, w = chi_weights(profile, alpha, spec)
    den = profile.prior @ commit
    chi0 = float(profile.prior @ w / den) if den > 0 else math.inf
    band = (chi0, chi0 + far_eps) if band is None else tuple(band)
    weights = profile.true_type_weights(true_type)
    u1_types = s.game.u1[profile.type_state]
    impl = kernels.get_backend(backend)

    def run(lo, hi):
        type_u, U = replication_uniforms(seed, range(lo, hi), horizon)
        tt = _pick_types(weights, type_u)
        return tt, impl.simulate_paths(
            U, tt, profile.out1, profile.trans1, profile.init1, profile.prior / profile.prior.sum(),
            profile.out2, profile.trans2, profile.init2, profile.myopic, profile.u2_types, u1_types,
            profile.reset, profile.has_reset, alpha.probs, commit, w, delta, band[0], band[1], far_eps,
            TIE_TOL, record,
        )

    bounds = [(lo, min(lo + CHUNK, reps)) for lo in range(0, reps, CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda b: run(*b), bounds))
    else:
        parts = [run(*b) for b in bounds]
    tt = np.concatenate([p[0] for p in parts])
    cols = [np.concatenate([p[1][i] for p in parts]) for i in range(13)]
    return SimulationResult(
        scenario=s, alpha=alpha, delta=delta, horizon=horizon, seed=seed, true_types=tt,
        type_labels=tuple(t.label for t in profile.types),
        payoff=cols[0], freq=cols[1], far_count=cols[2], kl_sum=cols[3], upcrossings=cols[4],
        chi_max=cols[5], aborted_at=cols[6], a1=cols[7], a2=cols[8], u1=cols[9], chi=cols[10],
        kl=cols[11], l1=cols[12], band=band, far_eps=far_eps, chi0=chi0,
        backend=impl.__name__.rsplit("_", 1)[-1],
    )


# -- exact checks on enumerated trees -------------------------------------------


def supermartingale_check(s: ReputationScenario, profile: StrategyProfile, alpha, horizon: int = 5,
                          max_horizon: int = 8) -> dict:
    """Exact check that E[lambda_theta(h, a1)] <= lambda_theta(h) under the commitment measure.

    Walks every history the commitment type and player 2 can produce up to
    ``horizon`` and returns the largest excess over all nodes and states.
    """
    if horizon > max_horizon:
        raise ValueError(f"horizon {horizon} exceeds the enumeration limit {max_horizon}")
    a = s.commitment_action(alpha)
    supp = a.probs > 0
    graph = enumerate_histories(profile, horizon, a1_allowed=supp, level_keyed=True)
    commit = profile.commitment_mask(a)
    S = profile.strategic_state_matrix()
    worst = -math.inf
    where = None
    for n in np.flatnonzero(graph.level < horizon):
        post = graph.post[n]
        lam = post @ S / post[commit].sum()
        acts = profile.out1[graph.states[n]]  # (K, n1)
        expect = np.zeros_like(lam)
        for a1 in np.flatnonzero(supp):
            nxt = post * acts[:, a1]
            expect += a.probs[a1] * (nxt @ S) / nxt[commit].sum()
        excess = expect - lam
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst = float(excess[j])
            where = {"node": int(n), "level": int(graph.level[n]), "state": s.game.states[j]}
    return {"max_violation": worst, "nodes": int(graph.n_nodes), "horizon": horizon, "worst": where,
            "tolerance": 1e-9, "passed": bool(worst <= 1e-9)}


# -- discounted frequency concentration ---------------------------------------


def discounted_frequency_concentration(alpha, delta: float, reps: int = 10_000, seed: int = 0,
                                       etas=(0.05, 0.1, 0.2), horizon: int | None = None,
                                       backend: str | None = None) -> dict:
    """Empirical tails P(|discounted frequency of a1 - alpha(a1)| >= eta) for i.i.d. alpha streams.

    The horizon defaults to the smallest T with delta^T < 1e-9; the
    truncated frequencies are reported with their remainder delta^T.
    """
    probs = alpha.probs if isinstance(alpha, MixedAction) else np.asarray(alpha, float)
    labels = alpha.actions if isinstance(alpha, MixedAction) else tuple(range(len(probs)))
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    T = horizon or int(math.ceil(math.log(1e-9) / math.log(delta)))
    impl = kernels.get_backend(backend)
    n1 = probs.shape[0]
    freqs = []
    cum = np.cumsum(probs)
    last = int(np.flatnonzero(probs > 0)[-1])
    for lo in range(0, reps, CHUNK):
        hi = min(lo + CHUNK, reps)
        block = np.empty((hi - lo, T), dtype=np.int64)
        for n, r in enumerate(range(lo, hi)):
            u = np.random.default_rng([int(seed), int(r)]).random(T)
            block[n] = np.minimum(np.searchsorted(cum, u, side="right"), last)
        freqs.append(impl.discounted_frequencies(block, delta, n1))
    freq = np.concatenate(freqs)
    tails = {}
    for eta in etas:
        row = {}
        for a in range(n1):
            p = float(np.mean(np.abs(freq[:, a] - probs[a]) >= eta))
            row[str(labels[a])] = p
        tails[str(eta)] = row
    return {
        "delta": delta,
        "replications": reps,
        "horizon": T,
        "remainder": delta ** T,
        "alpha": dict(zip(map(str, labels), probs.tolist())),
        "tails": tails,
        "mean_frequency": dict(zip(map(str, labels), freq.mean(axis=0).tolist())),
        "in_regime": delta >= 0.99,
        "frequencies": freq,
    }


__all__ = [
    "BeliefState",
    "OffPathError",
    "SimulationResult",
    "TraceRecord",
    "bayes_update",
    "discounted_frequency_concentration",
    "initial_belief",
    "kl_divergence",
    "predicted_action",
    "simulate",
    "supermartingale_check",
    "STRATEGIC",
    "ScenarioError",
]
