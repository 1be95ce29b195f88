"""Enumeration of public histories collapsed by belief state.

Two histories lead to the same node when every type's machine state,
player 2's machine state and the posterior (rounded to ``KEY_DECIMALS``)
coincide; the posterior of the first history reaching the node is kept.
With ``level_keyed=True`` nodes are also keyed by depth, which gives a
layered tree suitable for backward induction over a fixed horizon.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .game import TIE_TOL
from .strategies import StrategyProfile

KEY_DECIMALS = 11
DEFAULT_BUDGET = 2_000_000
OFFPATH_MASS = 1e-300
UNEXPANDED = -1
DEAD = -2


class TreeBudgetError(RuntimeError):
    def __init__(self, count, budget):
        super().__init__(f"history enumeration needs more than {budget} nodes (reached {count})")
        self.count = count
        self.budget = budget


@dataclass
class HistoryGraph:
    states: np.ndarray  # (N, K) machine state of every type
    p2: np.ndarray  # (N,) player-2 machine state
    post: np.ndarray  # (N, K) posterior over types
    level: np.ndarray  # (N,) depth of first visit
    child: np.ndarray  # (N, n1, n2) child node, UNEXPANDED or DEAD
    p2_dist: np.ndarray  # (N, n2) player 2's mixed action at the node
    closed: bool  # every reachable node was expanded
    horizon: int

    @property
    def n_nodes(self) -> int:
        return self.states.shape[0]

    def predicted(self, profile: StrategyProfile) -> np.ndarray:
        """(N, n1) posterior-weighted action of player 1 at every node."""
        return np.einsum("nk,nka->na", self.post, profile.out1[self.states])


def p2_distribution(profile: StrategyProfile, states, p2, post) -> np.ndarray:
    if not profile.myopic:
        return profile.out2[p2]
    acts = profile.out1[states]
    v = np.einsum("nk,nka,kab->nb", post, acts, profile.u2_types)
    pick = np.argmax(v >= v.max(axis=1, keepdims=True) - TIE_TOL, axis=1)
    out = np.zeros((len(p2), profile.out2.shape[1]))
    out[np.arange(len(p2)), pick] = 1.0
    return out


def _keys(states, p2, post):
    block = np.concatenate(
        [states.astype(np.float64), p2[:, None].astype(np.float64), np.round(post, KEY_DECIMALS) + 0.0], axis=1
    )
    return [row.tobytes() for row in block]


def enumerate_histories(profile: StrategyProfile, horizon: int, a1_allowed=None, expand=None,
                        level_keyed: bool = True, budget: int = DEFAULT_BUDGET) -> HistoryGraph:
    """Breadth-first enumeration of reachable nodes up to ``horizon`` periods.

    ``a1_allowed`` restricts player 1's actions (e.g. to the support of a
    commitment action); player 2's actions are restricted to the support of
    the prescribed mixed action. ``expand(post, states, p2) -> bool mask`` can
    stop expansion at some nodes. Zero-likelihood observations use the
    profile's off-path belief for the new player-2 state when one exists and
    are marked DEAD otherwise.
    """
    n1, n2 = profile.out1.shape[1], profile.out2.shape[1]
    allowed = np.ones(n1, bool) if a1_allowed is None else np.asarray(a1_allowed, bool)
    K = profile.n_types

    root_states = profile.init1[None, :].copy()
    root_p2 = np.array([profile.init2], dtype=np.int64)
    root_post = (profile.prior / profile.prior.sum())[None, :]
    chunks = {"states": [root_states], "p2": [root_p2], "post": [root_post], "level": [np.zeros(1, np.int64)],
              "dist": [p2_distribution(profile, root_states, root_p2, root_post)]}
    edges = []  # (parent ids, a1, a2, child ids)
    seen = {}
    for key in _keys(root_states, root_p2, root_post):
        seen[key] = 0
    count = 1
    f_ids = np.array([0])
    f_states, f_p2, f_post, f_dist = root_states, root_p2, root_post, chunks["dist"][0]
    closed = True
    for depth in range(horizon):
        if f_ids.size == 0:
            break
        if expand is not None:
            keep = np.asarray(expand(f_post, f_states, f_p2), bool)
            f_ids, f_states, f_p2, f_post, f_dist = f_ids[keep], f_states[keep], f_p2[keep], f_post[keep], f_dist[keep]
            if f_ids.size == 0:
                break
        if level_keyed:
            seen = {}
        new_states, new_p2, new_post = [], [], []
        new_count_start = count
        for a1 in np.flatnonzero(allowed):
            lik = profile.out1[f_states, a1]
            post = f_post * lik
            total = post.sum(axis=1)
            for a2 in range(n2):
                live = f_dist[:, a2] > 0
                if not live.any():
                    continue
                ids = f_ids[live]
                st = profile.trans1[f_states[live], a1, a2]
                q = profile.trans2[f_p2[live], a1, a2]
                ps = post[live]
                tot = total[live]
                dead = tot < OFFPATH_MASS
                reset = dead & profile.has_reset[q]
                ps = np.where(reset[:, None], profile.reset[q], ps / np.where(dead, 1.0, tot)[:, None])
                ok = ~dead | reset
                child_ids = np.full(ids.shape[0], DEAD, dtype=np.int64)
                if ok.any():
                    keys = _keys(st[ok], q[ok], ps[ok])
                    assigned = np.empty(len(keys), dtype=np.int64)
                    fresh = []
                    for n, key in enumerate(keys):
                        idx = seen.get(key)
                        if idx is None:
                            idx = count
                            seen[key] = idx
                            count += 1
                            fresh.append(n)
                        assigned[n] = idx
                    child_ids[ok] = assigned
                    if fresh:
                        fresh = np.array(fresh)
                        new_states.append(st[ok][fresh])
                        new_p2.append(q[ok][fresh])
                        new_post.append(ps[ok][fresh])
                    if count > budget:
                        raise TreeBudgetError(count, budget)
                edges.append((ids, a1, a2, child_ids))
        if new_states:
            f_states = np.concatenate(new_states)
            f_p2 = np.concatenate(new_p2)
            f_post = np.concatenate(new_post)
            f_ids = np.arange(new_count_start, count)
            f_dist = p2_distribution(profile, f_states, f_p2, f_post)
            chunks["states"].append(f_states)
            chunks["p2"].append(f_p2)
            chunks["post"].append(f_post)
            chunks["level"].append(np.full(f_ids.size, depth + 1, np.int64))
            chunks["dist"].append(f_dist)
        else:
            f_ids = np.array([], dtype=np.int64)
    else:
        # horizon reached: anything still on the frontier was not expanded
        if f_ids.size and not level_keyed:
            closed = False
    if level_keyed:
        closed = False
    child = np.full((count, n1, n2), UNEXPANDED, dtype=np.int64)
    for ids, a1, a2, cids in edges:
        child[ids, a1, a2] = cids
    return HistoryGraph(
        states=np.concatenate(chunks["states"]).reshape(-1, K),
        p2=np.concatenate(chunks["p2"]),
        post=np.concatenate(chunks["post"]).reshape(-1, K),
        level=np.concatenate(chunks["level"]),
        child=child,
        p2_dist=np.concatenate(chunks["dist"]),
        closed=closed,
        horizon=horizon,
    )
