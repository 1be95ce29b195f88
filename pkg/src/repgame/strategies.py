"""Finite-state strategies and strategy profiles over a reputation scenario.

Every strategy representation (stationary action, finite-state machine,
history-keyed table) compiles to a :class:`Machine`: an output table of mixed
actions and a transition table indexed by the observed ``(a1, a2)`` pair.
Profiles flatten all player-1 types into one array layout so the simulation
kernels can run without Python objects.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .game import (
    STRATEGIC,
    MixedAction,
    ReputationScenario,
    ScenarioError,
    TIE_TOL,
    parse_number,
)


@dataclass(frozen=True)
class Machine:
    outputs: np.ndarray  # (n_states, n_actions) mixed actions
    transitions: np.ndarray  # (n_states, n1, n2) next-state indices
    initial: int = 0
    names: tuple = ()

    def __post_init__(self):
        out = np.array(self.outputs, dtype=float)
        tr = np.array(self.transitions, dtype=np.int64)
        if out.ndim != 2 or tr.ndim != 3 or tr.shape[0] != out.shape[0]:
            raise ScenarioError("machine output/transition tables do not line up")
        if np.any(out < 0) or np.any(np.abs(out.sum(axis=1) - 1.0) > 1e-9):
            raise ScenarioError("machine outputs must be probability vectors")
        if tr.size and (tr.min() < 0 or tr.max() >= out.shape[0]):
            raise ScenarioError("machine transition points outside the state set")
        if not 0 <= self.initial < out.shape[0]:
            raise ScenarioError("machine initial state out of range")
        out.setflags(write=False)
        tr.setflags(write=False)
        object.__setattr__(self, "outputs", out)
        object.__setattr__(self, "transitions", tr)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"s{i}" for i in range(out.shape[0])))

    @property
    def n_states(self) -> int:
        return self.outputs.shape[0]

    @classmethod
    def stationary(cls, probs, n1: int, n2: int, name: str = "s0") -> "Machine":
        probs = probs.probs if isinstance(probs, MixedAction) else probs
        return cls(np.asarray(probs, float)[None, :], np.zeros((1, n1, n2), dtype=np.int64), 0, (name,))

    @classmethod
    def from_table(cls, table: Mapping, default, n1: int, n2: int) -> "Machine":
        """Compile a history-keyed table into a tree machine.

        ``table`` maps tuples of ``(a1_idx, a2_idx)`` pairs to mixed actions;
        histories missing from the table fall into an absorbing default state.
        """
        keys = sorted(table, key=lambda h: (len(h), h))
        if () not in table:
            raise ScenarioError("history table needs an entry for the empty history")
        index = {h: i for i, h in enumerate(keys)}
        dflt = len(keys)
        outputs = [np.asarray(table[h], float) for h in keys] + [np.asarray(default, float)]
        trans = np.full((len(keys) + 1, n1, n2), dflt, dtype=np.int64)
        for h, i in index.items():
            for a1 in range(n1):
                for a2 in range(n2):
                    trans[i, a1, a2] = index.get(h + ((a1, a2),), dflt)
        names = tuple("/".join(f"{a}.{b}" for a, b in h) or "root" for h in keys) + ("default",)
        return cls(np.array(outputs), trans, 0, names)

    def step(self, state: int, a1: int, a2: int) -> int:
        return int(self.transitions[state, a1, a2])


@dataclass(frozen=True)
class MyopicBestReply:
    """Player 2 best-replies to the posterior-weighted prediction; ties go to the first action."""

    tol: float = TIE_TOL


@dataclass(frozen=True)
class TypeSpec:
    state: int
    characteristic: str  # "strategic" or a plan name
    weight: float
    machine: Machine
    label: str
    commitment: MixedAction | None = None

    @property
    def strategic(self) -> bool:
        return self.characteristic == STRATEGIC


class OffPathError(RuntimeError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


@dataclass
class StrategyProfile:
    scenario: ReputationScenario
    types: tuple
    player2: object  # Machine or MyopicBestReply
    off_path: dict = field(default_factory=dict)  # player-2 machine state -> posterior over types

    def __post_init__(self):
        self.types = tuple(self.types)
        g = self.scenario.game
        n1, n2 = len(g.actions1), len(g.actions2)
        for t in self.types:
            if t.machine.outputs.shape[1] != n1 or t.machine.transitions.shape[1:] != (n1, n2):
                raise ScenarioError(f"strategy of {t.label} has the wrong action dimensions")
        if isinstance(self.player2, Machine):
            if self.player2.outputs.shape[1] != n2 or self.player2.transitions.shape[1:] != (n1, n2):
                raise ScenarioError("player-2 machine has the wrong action dimensions")
        elif not isinstance(self.player2, MyopicBestReply):
            raise ScenarioError("player 2 must be a Machine or MyopicBestReply")
        self._compile()

    # -- construction -----------------------------------------------------

    @classmethod
    def build(cls, s: ReputationScenario, player1: Mapping, player2=None, off_path=None):
        """Assemble a profile.

        ``player1`` maps state labels to a Machine, a MixedAction, or a list of
        ``(weight, Machine)`` pairs (a strategic type randomising over pure
        strategies). Commitment cells are added automatically as stationary
        types. ``off_path`` maps player-2 machine state names to beliefs over
        ``(state, characteristic)`` used when Bayes' rule is silent.
        """
        g = s.game
        n1, n2 = len(g.actions1), len(g.actions2)
        prior = s.prior_array
        types = []
        for i, st in enumerate(g.states):
            spec = player1.get(st)
            if spec is None:
                raise ScenarioError(f"no strategy for strategic type {st!r}")
            parts = _mixture(spec, n1, n2)
            total = sum(w for w, _ in parts)
            for k, (w, mach) in enumerate(parts):
                if w <= 0:
                    continue
                label = f"{st}|{STRATEGIC}" + (f"#{k}" if len(parts) > 1 else "")
                types.append(TypeSpec(i, STRATEGIC, prior[i, 0] * w / total, mach, label))
        for j, plan in enumerate(s.plans):
            for i, st in enumerate(g.states):
                a = plan.actions[i]
                types.append(
                    TypeSpec(i, plan.name, prior[i, j + 1], Machine.stationary(a, n1, n2), f"{st}|{plan.name}", a)
                )
        if player2 is None:
            player2 = MyopicBestReply()
        elif isinstance(player2, MixedAction) or (
            isinstance(player2, np.ndarray) and player2.ndim == 1
        ):
            probs = player2.probs if isinstance(player2, MixedAction) else player2
            player2 = Machine.stationary(probs, n1, n2)
        prof = cls(s, tuple(types), player2, {})
        if off_path:
            if not isinstance(player2, Machine):
                raise ScenarioError("off-path beliefs need a player-2 machine")
            for state_name, belief in off_path.items():
                if state_name not in player2.names:
                    raise ScenarioError(f"unknown player-2 machine state {state_name!r}")
                prof.off_path[player2.names.index(state_name)] = prof.belief_over_types(belief)
            prof._compile()
        return prof

    def belief_over_types(self, belief: Mapping) -> np.ndarray:
        """Spread a belief over (state, characteristic) cells onto types by prior weight."""
        post = np.zeros(len(self.types))
        for key, w in belief.items():
            st, ch = key if isinstance(key, tuple) else key.split("|", 1)
            idx = [k for k, t in enumerate(self.types)
                   if self.scenario.game.states[t.state] == st and t.characteristic == ch]
            if not idx:
                raise ScenarioError(f"no type matches {key!r}")
            sub = np.array([self.types[k].weight for k in idx])
            post[idx] += parse_number(w) * sub / sub.sum()
        if post.sum() <= 0:
            raise ScenarioError("off-path belief has no mass")
        return post / post.sum()

    def _compile(self):
        g = self.scenario.game
        n1, n2 = len(g.actions1), len(g.actions2)
        offsets = np.cumsum([0] + [t.machine.n_states for t in self.types])
        self.type_offset = offsets[:-1].astype(np.int64)
        self.out1 = np.concatenate([t.machine.outputs for t in self.types])
        self.trans1 = np.concatenate(
            [t.machine.transitions + off for t, off in zip(self.types, self.type_offset)]
        ).astype(np.int64)
        self.init1 = np.array([t.machine.initial + off for t, off in zip(self.types, self.type_offset)], np.int64)
        self.prior = np.array([t.weight for t in self.types], float)
        self.type_state = np.array([t.state for t in self.types], np.int64)
        self.strategic = np.array([t.strategic for t in self.types], bool)
        self.myopic = isinstance(self.player2, MyopicBestReply)
        p2 = Machine.stationary(np.eye(n2)[0], n1, n2) if self.myopic else self.player2
        self.out2 = p2.outputs
        self.trans2 = p2.transitions
        self.init2 = int(p2.initial)
        K = len(self.types)
        self.reset = np.zeros((p2.n_states, K))
        self.has_reset = np.zeros(p2.n_states, bool)
        for st, post in self.off_path.items():
            self.reset[st] = post
            self.has_reset[st] = True
        # u2 per type, (K, n1, n2), for myopic replies
        self.u2_types = g.u2[self.type_state]

    # -- queries ----------------------------------------------------------

    @property
    def n_types(self) -> int:
        return len(self.types)

    def type_index(self, label: str) -> int:
        for k, t in enumerate(self.types):
            if t.label == label:
                return k
        raise ScenarioError(f"no type labelled {label!r}")

    def commitment_mask(self, alpha: MixedAction) -> np.ndarray:
        return np.array([t.commitment is not None and t.commitment == alpha for t in self.types], bool)

    def strategic_state_matrix(self) -> np.ndarray:
        """(K, m) indicator of strategic types by state."""
        m = self.scenario.game.m
        out = np.zeros((self.n_types, m))
        for k, t in enumerate(self.types):
            if t.strategic:
                out[k, t.state] = 1.0
        return out

    def true_type_weights(self, spec) -> np.ndarray:
        """Sampling weights over types for a ``--true-type`` specification.

        ``"commitment:<action>"`` selects the cells playing that commitment
        action, ``"strategic:<state>"`` the strategic subtypes of a state, and
        ``"prior"`` samples from the prior. A type label or index also works.
        """
        s = self.scenario
        if isinstance(spec, (int, np.integer)):
            w = np.zeros(self.n_types)
            w[int(spec)] = 1.0
            return w
        if spec in ("prior", "sample", "sample-from-prior"):
            return self.prior / self.prior.sum()
        kind, _, ref = str(spec).partition(":")
        if kind == "commitment":
            mask = self.commitment_mask(s.commitment_action(ref))
        elif kind == "strategic":
            i = s.game.state_index(ref)
            mask = self.strategic & (self.type_state == i)
        else:
            mask = np.array([t.label == spec for t in self.types])
        if not mask.any():
            raise ScenarioError(f"true type {spec!r} matches no type")
        w = np.where(mask, self.prior, 0.0)
        return w / w.sum()

    def to_dict(self) -> dict:
        g = self.scenario.game
        return {
            "types": [
                {
                    "label": t.label,
                    "state": g.states[t.state],
                    "characteristic": t.characteristic,
                    "weight": t.weight,
                    "machine": machine_to_dict(t.machine, g.actions1, g.actions1, g.actions2),
                }
                for t in self.types
            ],
            "player2": {"myopic": True}
            if self.myopic
            else {"machine": machine_to_dict(self.player2, g.actions2, g.actions1, g.actions2)},
            "off_path_beliefs": {
                self.player2.names[st]: {t.label: float(p) for t, p in zip(self.types, post) if p > 0}
                for st, post in self.off_path.items()
            },
        }


def _mixture(spec, n1, n2):
    if isinstance(spec, Machine):
        return [(1.0, spec)]
    if isinstance(spec, MixedAction):
        return [(1.0, Machine.stationary(spec, n1, n2))]
    if isinstance(spec, (list, tuple)):
        parts = []
        for w, m in spec:
            parts.extend((w * w2, m2) for w2, m2 in _mixture(m, n1, n2))
        return parts
    raise ScenarioError(f"unsupported strategy specification {spec!r}")


# -- JSON forms --------------------------------------------------------------

def _lookup_transition(rules: Mapping, a1: str, a2: str):
    for key in (f"{a1},{a2}", f"{a1},*", a1, f"*,{a2}", "*"):
        if key in rules:
            return rules[key]
    return None


def machine_from_dict(d: Mapping, out_actions: Sequence[str], actions1, actions2) -> Machine:
    """Parse ``{"stationary": ...}``, ``{"machine": ...}`` or ``{"table": ...}``."""
    n1, n2 = len(actions1), len(actions2)

    def mixed(w):
        if isinstance(w, str):
            return MixedAction.pure(out_actions, w).probs
        return MixedAction.from_weights(out_actions, w).probs

    if "stationary" in d:
        return Machine.stationary(mixed(d["stationary"]), n1, n2)
    if "table" in d:
        table = {}
        for hist, w in d["table"].items():
            steps = []
            for tok in filter(None, hist.split(";")):
                a, _, b = tok.partition("/")
                steps.append((list(actions1).index(a), list(actions2).index(b)))
            table[tuple(steps)] = mixed(w)
        return Machine.from_table(table, mixed(d.get("default", d["table"][""])), n1, n2)
    spec = d.get("machine", d)
    names = list(spec["states"])
    outputs = np.array([mixed(spec["output"][s]) for s in names])
    trans = np.zeros((len(names), n1, n2), dtype=np.int64)
    for i, s in enumerate(names):
        rules = spec.get("transitions", {}).get(s, {})
        for x, a1 in enumerate(actions1):
            for y, a2 in enumerate(actions2):
                nxt = _lookup_transition(rules, a1, a2)
                trans[i, x, y] = i if nxt is None else names.index(nxt)
    initial = names.index(spec.get("initial", names[0]))
    return Machine(outputs, trans, initial, tuple(names))


def machine_to_dict(m: Machine, out_actions, actions1, actions2) -> dict:
    names = list(m.names)
    trans = {}
    for i, s in enumerate(names):
        rules = {}
        for x, a1 in enumerate(actions1):
            for y, a2 in enumerate(actions2):
                nxt = int(m.transitions[i, x, y])
                if nxt != i:
                    rules[f"{a1},{a2}"] = names[nxt]
        trans[s] = rules
    return {
        "machine": {
            "states": names,
            "initial": names[m.initial],
            "output": {
                s: {a: float(p) for a, p in zip(out_actions, m.outputs[i]) if p > 0} for i, s in enumerate(names)
            },
            "transitions": trans,
        }
    }


def profile_from_dict(s: ReputationScenario, d: Mapping) -> StrategyProfile:
    g = s.game
    player1 = {}
    for st, spec in d["player1"].items():
        if "mixture" in spec:
            player1[st] = [
                (parse_number(part["weight"]), machine_from_dict(part["strategy"], g.actions1, g.actions1, g.actions2))
                for part in spec["mixture"]
            ]
        else:
            player1[st] = machine_from_dict(spec, g.actions1, g.actions1, g.actions2)
    p2spec = d.get("player2", {"myopic": True})
    if p2spec.get("myopic"):
        player2 = MyopicBestReply()
    else:
        player2 = machine_from_dict(p2spec, g.actions2, g.actions1, g.actions2)
    return StrategyProfile.build(s, player1, player2, d.get("off_path_beliefs"))
