"""JSON forms of scenarios and a canonical content hash."""
from __future__ import annotations

import hashlib
import json
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .game import MixedAction, Plan, ReputationScenario, ScenarioError, StageGame, parse_number


class ParseError(ScenarioError):
    """A scenario or profile file could not be read; carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


def _tensor(data, name):
    try:
        return np.array([[[parse_number(x) for x in row] for row in mat] for mat in data], dtype=float)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ScenarioError(f"{name}: {exc}") from None


def _prior_items(prior):
    if isinstance(prior, Mapping):
        for key, w in prior.items():
            state, sep, ch = key.partition("|")
            if not sep:
                raise ScenarioError(f"prior key {key!r} must look like 'state|characteristic'")
            yield (state, ch), w
    else:
        for cell in prior:
            yield (cell["state"], cell["characteristic"]), cell["weight"]


def scenario_from_dict(d: Mapping) -> ReputationScenario:
    try:
        states, a1, a2 = d["states"], d["actions1"], d["actions2"]
        game = StageGame(states, a1, a2, _tensor(d["u1"], "u1"), _tensor(d["u2"], "u2"))
        named = {}
        for name, w in d.get("named_actions", {}).items():
            named[name] = MixedAction.from_weights(game.actions1, w, name=name)

        def resolve(spec):
            if isinstance(spec, str):
                if spec in named:
                    return named[spec]
                return MixedAction.pure(game.actions1, spec)
            return MixedAction.from_weights(game.actions1, spec)

        plans = []
        for p in d.get("plans", []):
            mapping = p["map"]
            missing = set(game.states) - set(mapping)
            if missing:
                raise ScenarioError(f"plan {p['name']!r} misses states {sorted(missing)}")
            plans.append(Plan(p["name"], tuple(resolve(mapping[s]) for s in game.states)))
        prior = {}
        for key, w in _prior_items(d["prior"]):
            if key in prior:
                raise ScenarioError(f"duplicate prior cell {key}")
            prior[key] = parse_number(w)
        return ReputationScenario(game, tuple(plans), prior, parse_number(d.get("delta", 0.9)), named)
    except KeyError as exc:
        raise ScenarioError(f"missing field {exc.args[0]!r}") from None


def _num(x):
    """Render a float as a short rational string when it is one, else as a float."""
    f = Fraction(float(x)).limit_denominator(1000)
    if abs(float(f) - float(x)) < 1e-15:
        return str(f) if f.denominator != 1 else int(f)
    return float(x)


def scenario_to_dict(s: ReputationScenario) -> dict:
    g = s.game

    def action_ref(a: MixedAction):
        for name, b in s.named_actions.items():
            if a == b:
                return name
        if a.is_pure:
            return a.support[0]
        return {k: _num(v) for k, v in a.weights.items()}

    return {
        "states": list(g.states),
        "actions1": list(g.actions1),
        "actions2": list(g.actions2),
        "u1": [[[_num(x) for x in row] for row in mat] for mat in g.u1],
        "u2": [[[_num(x) for x in row] for row in mat] for mat in g.u2],
        "named_actions": {n: {k: _num(v) for k, v in a.weights.items()} for n, a in s.named_actions.items()},
        "plans": [{"name": p.name, "map": {st: action_ref(a) for st, a in zip(g.states, p.actions)}} for p in s.plans],
        "prior": {f"{st}|{ch}": _num(w) for (st, ch), w in s.prior.items()},
        "delta": s.delta,
    }


def scenario_hash(s: ReputationScenario) -> str:
    blob = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def read_json(path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        raise ParseError(f"{path}: empty file", 1, 1)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None


def load_scenario(path) -> ReputationScenario:
    return scenario_from_dict(read_json(path))


def _clean(x):
    """Recursively replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (float, np.floating)):
        return finite_or_str(x) if not np.isnan(x) else "nan"
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dump_json(obj, path=None) -> str:
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default, allow_nan=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def finite_or_str(x):
    """JSON has no infinity; encode it as the string ``"inf"``."""
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x
