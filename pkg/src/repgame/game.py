"""Stage games, commitment structures and the static best-reply machinery."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

TIE_TOL = 1e-9
SUM_TOL = 1e-9
STRATEGIC = "strategic"


class ScenarioError(ValueError):
    """Malformed scenario data (shapes, labels, probabilities)."""


class AssumptionError(ValueError):
    """An operation needs a unique best reply that does not exist."""

    def __init__(self, message, tied=()):
        super().__init__(message)
        self.tied = tuple(tied)


def parse_number(x) -> float:
    """Numbers or rational strings such as ``"3/2"``."""
    if isinstance(x, str):
        try:
            return float(Fraction(x.strip()))
        except (ValueError, ZeroDivisionError):
            raise ScenarioError(f"not a number: {x!r}") from None
    if isinstance(x, Fraction):
        return float(x)
    if isinstance(x, bool):
        raise ScenarioError(f"not a number: {x!r}")
    return float(x)


class MixedAction:
    """A probability vector over a labelled action set.

    Equality and hashing use probabilities rounded to 12 decimals so that
    commitment actions written differently (``"9/10"`` vs ``0.9``) dedupe.
    """

    __slots__ = ("actions", "probs", "name")

    def __init__(self, actions: Sequence[str], probs, name: str | None = None):
        self.actions = tuple(actions)
        p = np.asarray(probs, dtype=float).reshape(-1)
        if p.shape[0] != len(self.actions):
            raise ScenarioError(f"mixed action has {p.shape[0]} entries for {len(self.actions)} actions")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ScenarioError(f"negative or non-finite probability in {p.tolist()}")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ScenarioError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        self.probs = p
        self.name = name

    @classmethod
    def from_weights(cls, actions: Sequence[str], weights: Mapping[str, object], name=None):
        unknown = set(weights) - set(actions)
        if unknown:
            raise ScenarioError(f"unknown actions {sorted(unknown)}")
        return cls(actions, [parse_number(weights.get(a, 0.0)) for a in actions], name)

    @classmethod
    def pure(cls, actions: Sequence[str], action: str):
        actions = tuple(actions)
        if action not in actions:
            raise ScenarioError(f"unknown action {action!r}")
        p = np.zeros(len(actions))
        p[actions.index(action)] = 1.0
        return cls(actions, p, name=action)

    @property
    def weights(self) -> dict:
        return {a: float(p) for a, p in zip(self.actions, self.probs) if p > 0}

    @property
    def support(self) -> tuple:
        return tuple(a for a, p in zip(self.actions, self.probs) if p > 0)

    @property
    def support_mask(self) -> np.ndarray:
        return self.probs > 0

    @property
    def is_pure(self) -> bool:
        return len(self.support) == 1

    @property
    def key(self) -> tuple:
        return tuple(round(float(p), 12) for p in self.probs)

    def __getitem__(self, action: str) -> float:
        return float(self.probs[self.actions.index(action)])

    def __eq__(self, other):
        if not isinstance(other, MixedAction):
            return NotImplemented
        return self.actions == other.actions and self.key == other.key

    def __hash__(self):
        return hash((self.actions, self.key))

    def __repr__(self):
        body = " + ".join(f"{p:g}*{a}" for a, p in self.weights.items())
        return f"MixedAction({self.name + ': ' if self.name else ''}{body})"

    def label(self) -> str:
        if self.name:
            return self.name
        if self.is_pure:
            return self.support[0]
        return "+".join(f"{p:g}{a}" for a, p in self.weights.items())


@dataclass(frozen=True)
class StageGame:
    states: tuple
    actions1: tuple
    actions2: tuple
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions1", tuple(self.actions1))
        object.__setattr__(self, "actions2", tuple(self.actions2))
        for name in ("states", "actions1", "actions2"):
            labels = getattr(self, name)
            if len(labels) == 0:
                raise ScenarioError(f"{name} is empty")
            if len(set(labels)) != len(labels):
                raise ScenarioError(f"duplicate labels in {name}")
        shape = (len(self.states), len(self.actions1), len(self.actions2))
        for name in ("u1", "u2"):
            try:
                arr = np.array(getattr(self, name), dtype=float)
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{name} is not a numeric tensor: {exc}") from None
            if arr.shape != shape:
                raise ScenarioError(f"{name} has shape {arr.shape}, expected {shape} (state, a1, a2)")
            if not np.all(np.isfinite(arr)):
                raise ScenarioError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return len(self.states)

    def state_index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        try:
            return self.states.index(state)
        except ValueError:
            raise ScenarioError(f"unknown state {state!r}") from None

    def a1_index(self, a) -> int:
        try:
            return self.actions1.index(a)
        except ValueError:
            raise ScenarioError(f"unknown player-1 action {a!r}") from None

    def a2_index(self, a) -> int:
        try:
            return self.actions2.index(a)
        except ValueError:
            raise ScenarioError(f"unknown player-2 action {a!r}") from None

    def mixed(self, weights) -> MixedAction:
        if isinstance(weights, MixedAction):
            return weights
        if isinstance(weights, str):
            return MixedAction.pure(self.actions1, weights)
        return MixedAction.from_weights(self.actions1, weights)

    def with_u1(self, u1) -> "StageGame":
        return StageGame(self.states, self.actions1, self.actions2, u1, self.u2)


@dataclass(frozen=True)
class Plan:
    name: str
    actions: tuple  # one MixedAction per state, in state order

    def __call__(self, state_idx: int) -> MixedAction:
        return self.actions[state_idx]


@dataclass(frozen=True)
class ReputationScenario:
    game: StageGame
    plans: tuple
    prior: Mapping  # (state label, characteristic) -> weight
    delta: float = 0.9
    named_actions: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "plans", tuple(self.plans))
        names = [p.name for p in self.plans]
        if len(set(names)) != len(names):
            raise ScenarioError("duplicate plan names")
        if STRATEGIC in names:
            raise ScenarioError(f"plan name {STRATEGIC!r} is reserved")
        for p in self.plans:
            if len(p.actions) != self.game.m:
                raise ScenarioError(f"plan {p.name!r} does not cover every state")
            for a in p.actions:
                if a.actions != self.game.actions1:
                    raise ScenarioError(f"plan {p.name!r} uses a different action set")
        chars = set(self.characteristics)
        prior = {}
        for (state, ch), w in dict(self.prior).items():
            if state not in self.game.states:
                raise ScenarioError(f"prior references unknown state {state!r}")
            if ch not in chars:
                raise ScenarioError(f"prior references unknown characteristic {ch!r}")
            prior[(state, ch)] = parse_number(w)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "delta", float(self.delta))

    @property
    def characteristics(self) -> tuple:
        return (STRATEGIC,) + tuple(p.name for p in self.plans)

    @property
    def prior_array(self) -> np.ndarray:
        """Prior as an (m, 1 + #plans) array; column 0 is the strategic type."""
        out = np.zeros((self.game.m, len(self.characteristics)))
        for j, ch in enumerate(self.characteristics):
            for i, s in enumerate(self.game.states):
                out[i, j] = self.prior.get((s, ch), 0.0)
        return out

    @property
    def commitment_actions(self) -> list:
        """Deduplicated commitment actions, in plan then state order."""
        seen = []
        for p in self.plans:
            for a in p.actions:
                if a not in seen:
                    seen.append(a)
        return seen

    def commitment_action(self, ref) -> MixedAction:
        """Resolve a commitment action from a name, pure label, weights or MixedAction."""
        if isinstance(ref, MixedAction):
            cand = ref
        elif isinstance(ref, str) and ref in self.named_actions:
            cand = self.named_actions[ref]
        elif isinstance(ref, str) and ref in self.game.actions1:
            cand = MixedAction.pure(self.game.actions1, ref)
        elif isinstance(ref, Mapping):
            cand = MixedAction.from_weights(self.game.actions1, ref)
        else:
            raise ScenarioError(f"cannot resolve commitment action {ref!r}")
        for a in self.commitment_actions:
            if a == cand:
                return a
        raise ScenarioError(f"{cand!r} is not a commitment action of this scenario")

    def strategic_mass(self) -> np.ndarray:
        return self.prior_array[:, 0].copy()

    def commitment_cells(self, alpha: MixedAction) -> np.ndarray:
        """Boolean (m, #plans) mask of cells whose plan plays ``alpha``."""
        mask = np.zeros((self.game.m, len(self.plans)), dtype=bool)
        for j, p in enumerate(self.plans):
            for i in range(self.game.m):
                mask[i, j] = p.actions[i] == alpha
        return mask

    def with_prior(self, prior) -> "ReputationScenario":
        return ReputationScenario(self.game, self.plans, prior, self.delta, self.named_actions)

    def with_game(self, game: StageGame) -> "ReputationScenario":
        return ReputationScenario(game, self.plans, self.prior, self.delta, self.named_actions)


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    ties: list = field(default_factory=list)  # (state, commitment action label, tied actions)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "errors": list(self.errors),
            "warnings": list(self.warnings),
            "ties": [{"state": s, "alpha": a, "tied": list(t)} for s, a, t in self.ties],
        }


def _as_belief(game: StageGame, phi) -> np.ndarray:
    if isinstance(phi, Mapping):
        vec = np.zeros(game.m)
        for s, w in phi.items():
            vec[game.state_index(s)] = parse_number(w)
    elif isinstance(phi, (str, np.integer, int)) and not isinstance(phi, bool):
        vec = np.zeros(game.m)
        vec[game.state_index(phi)] = 1.0
    else:
        vec = np.asarray(phi, dtype=float).reshape(-1)
    if vec.shape[0] != game.m:
        raise ScenarioError(f"belief has {vec.shape[0]} entries for {game.m} states")
    return vec


def _as_mixed(game: StageGame, alpha) -> np.ndarray:
    if isinstance(alpha, MixedAction):
        if alpha.actions != game.actions1:
            raise ScenarioError("mixed action over a different action set")
        return alpha.probs
    return game.mixed(alpha).probs


def payoff_vector(u: np.ndarray, phi, alpha) -> np.ndarray:
    """Expected payoff of every a2 under state belief ``phi`` and action ``alpha``."""
    return np.einsum("t,tij,i->j", np.asarray(phi, float), u, np.asarray(alpha, float))


def expected_payoff(game: StageGame, u: np.ndarray, phi, alpha, a2) -> float:
    """Sum over states and a1 of phi(state) * alpha(a1) * u(state, a1, a2)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (game.m, len(game.actions1), len(game.actions2)):
        raise ScenarioError(f"payoff tensor shape {u.shape} does not match the game")
    j = game.a2_index(a2) if isinstance(a2, str) else int(a2)
    return float(payoff_vector(u, _as_belief(game, phi), _as_mixed(game, alpha))[j])


def argmax_set(values: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.flatnonzero(values >= values.max() - tol)


def best_reply_set(game: StageGame, phi, alpha, u2=None, tol: float = TIE_TOL) -> tuple:
    """Pure best replies of player 2, as a tuple of action labels (ties included)."""
    u2 = game.u2 if u2 is None else np.asarray(u2, dtype=float)
    vals = payoff_vector(u2, _as_belief(game, phi), _as_mixed(game, alpha))
    return tuple(game.actions2[j] for j in argmax_set(vals, tol))


def unique_best_reply(game: StageGame, state, alpha, u2=None) -> str:
    br = best_reply_set(game, state, alpha, u2)
    if len(br) != 1:
        a = alpha.label() if isinstance(alpha, MixedAction) else alpha
        raise AssumptionError(
            f"best reply to {a} in state {game.states[game.state_index(state)]} is not unique: {br}", br
        )
    return br[0]


def commitment_payoff(s: ReputationScenario, state, alpha) -> float:
    """Player 1's complete-information payoff from committing to ``alpha`` in ``state``."""
    g = s.game
    a2 = unique_best_reply(g, state, alpha)
    i = g.state_index(state)
    return float(_as_mixed(g, alpha) @ g.u1[i, :, g.a2_index(a2)])


def validate_scenario(s: ReputationScenario) -> ValidationReport:
    rep = ValidationReport()
    g = s.game
    if len(g.actions1) < 2:
        rep.errors.append("player 1 needs at least two actions")
    if len(g.actions2) < 2:
        rep.errors.append("player 2 needs at least two actions")
    if not 0.0 < s.delta < 1.0:
        rep.errors.append(f"discount factor {s.delta} outside (0, 1)")
    prior = s.prior_array
    if np.any(prior < 0):
        rep.errors.append("normalization: prior has negative weights")
    total = prior.sum()
    if abs(total - 1.0) > SUM_TOL:
        rep.errors.append(f"normalization: prior sums to {total!r}")
    for j, ch in enumerate(s.characteristics):
        for i, st in enumerate(g.states):
            if prior[i, j] <= 0:
                rep.errors.append(f"full support violated: prior({st}, {ch}) = {prior[i, j]:g}")
    for alpha in s.commitment_actions:
        for st in g.states:
            br = best_reply_set(g, st, alpha)
            if len(br) > 1:
                rep.ties.append((st, alpha.label(), br))
                rep.warnings.append(
                    f"best reply to {alpha.label()} in state {st} is not unique: {{{', '.join(br)}}}"
                )
    return rep


def random_mixed(rng: np.random.Generator, n: int, zero_prob: float = 0.3) -> np.ndarray:
    """Random point of the simplex, with some coordinates zeroed out."""
    p = rng.dirichlet(np.ones(n))
    mask = rng.random(n) < zero_prob
    if mask.all():
        mask[rng.integers(n)] = False
    p[mask] = 0.0
    return p / p.sum()
