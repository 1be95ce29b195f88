"""Likelihood-ratio vectors and the static belief regions built on them.

Vectors are numpy arrays in the scenario's state order; mappings from state
label to value are accepted wherever a vector is expected.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .game import (
    TIE_TOL,
    AssumptionError,
    MixedAction,
    ReputationScenario,
    ScenarioError,
    best_reply_set,
    commitment_payoff,
    payoff_vector,
    unique_best_reply,
)

MAX_VERTEX_DIM = 20


class BoundaryWarning(UserWarning):
    """The conditional prior alone already rejects the desired best reply."""


def as_vector(s: ReputationScenario, lam) -> np.ndarray:
    if isinstance(lam, Mapping):
        out = np.zeros(s.game.m)
        for k, v in lam.items():
            out[s.game.state_index(k)] = float(v)
        return out
    out = np.asarray(lam, dtype=float).reshape(-1)
    if out.shape[0] != s.game.m:
        raise ScenarioError(f"likelihood vector has {out.shape[0]} entries for {s.game.m} states")
    return out


def prior_likelihood(s: ReputationScenario, alpha):
    """Prior likelihood ratios lambda_theta = mu(theta)/mu(alpha) and the
    state distribution conditional on the cells committed to ``alpha``."""
    a = s.commitment_action(alpha)
    prior = s.prior_array
    cells = s.commitment_cells(a)
    commit_by_state = (prior[:, 1:] * cells).sum(axis=1)
    mass = commit_by_state.sum()
    if mass <= 0:
        raise ScenarioError(f"commitment action {a.label()} has zero prior mass")
    return prior[:, 0] / mass, commit_by_state / mass


def _setup(s, theta_star, alpha):
    a = s.commitment_action(alpha)
    g = s.game
    star = g.a2_index(unique_best_reply(g, theta_star, a))
    _, phi = prior_likelihood(s, a)
    return a, star, phi


def competitor_coefficients(s: ReputationScenario, theta_star, alpha):
    """Affine coefficients of a2*'s advantage over each competitor.

    Returns ``(competitors, c0, C)`` where the advantage of a2* over
    competitor j at likelihood vector lam is ``c0[j] + C[j] @ lam``.
    """
    a, star, phi = _setup(s, theta_star, alpha)
    g = s.game
    base = payoff_vector(g.u2, phi, a.probs)
    per_state = np.einsum("tij,i->tj", g.u2, a.probs)  # (m, n2)
    comp = [j for j in range(len(g.actions2)) if j != star]
    c0 = np.array([base[star] - base[j] for j in comp])
    C = np.array([per_state[:, star] - per_state[:, j] for j in comp]).reshape(len(comp), g.m)
    return comp, c0, C


def in_lambda_bar(lam, theta_star, alpha, s: ReputationScenario, tol: float = TIE_TOL) -> bool:
    """a2* is the unique maximiser of u2(phi, alpha, .) + sum lam_theta u2(theta, alpha, .)."""
    a, star, phi = _setup(s, theta_star, alpha)
    g = s.game
    lam = as_vector(s, lam)
    vals = payoff_vector(g.u2, phi, a.probs) + lam @ np.einsum("tij,i->tj", g.u2, a.probs)
    others = np.delete(vals, star)
    return bool(others.size == 0 or vals[star] > others.max() + tol)


def box_vertices(lam: np.ndarray) -> np.ndarray:
    m = lam.shape[0]
    if m > MAX_VERTEX_DIM:
        raise ValueError(f"{m} states means 2^{m} box vertices; refusing above {MAX_VERTEX_DIM}")
    bits = np.array(list(itertools.product((0.0, 1.0), repeat=m))).reshape(-1, m)
    return bits * lam


def in_lambda(lam, theta_star, alpha, s: ReputationScenario, tol: float = TIE_TOL) -> bool:
    """Every point of the box [0, lam] lies in Lambda-bar; checked at the 2^m vertices."""
    _, c0, C = competitor_coefficients(s, theta_star, alpha)
    verts = box_vertices(as_vector(s, lam))
    if C.shape[0] == 0:
        return True
    adv = c0[None, :] + verts @ C.T  # (vertices, competitors)
    return bool(np.all(adv > tol))


def lambda_margin(lam, theta_star, alpha, s: ReputationScenario):
    """Worst-case advantage of a2* over the box [0, lam] and its distance to the boundary.

    The worst vertex zeroes every coordinate with a nonnegative coefficient,
    so the margin for competitor j is ``c0 + sum_theta min(0, C_j,theta) lam_theta``.
    Returns ``(margin, distance)``; distance is signed (negative outside).
    """
    _, c0, C = competitor_coefficients(s, theta_star, alpha)
    lam = as_vector(s, lam)
    if C.shape[0] == 0:
        return np.inf, np.inf
    neg = np.minimum(C, 0.0)
    margins = c0 + neg @ lam
    norms = np.linalg.norm(neg, axis=1)
    # a constant constraint is infinitely far unless it is exactly tight
    with np.errstate(invalid="ignore"):
        flat = np.where(margins == 0, 0.0, np.sign(margins) * np.inf)
    dists = np.where(norms > 0, margins / np.where(norms > 0, norms, 1.0), flat)
    j = int(np.argmin(dists))
    return float(margins.min()), float(dists[j])


def lambda_bar_distance(lam, theta_star, alpha, s: ReputationScenario) -> float:
    """Signed Euclidean distance from lam to the boundary of Lambda-bar (negative outside)."""
    _, c0, C = competitor_coefficients(s, theta_star, alpha)
    lam = as_vector(s, lam)
    if C.shape[0] == 0:
        return np.inf
    adv = c0 + C @ lam
    norms = np.linalg.norm(C, axis=1)
    with np.errstate(divide="ignore"):
        d = np.where(norms > 0, adv / np.where(norms > 0, norms, 1.0), np.sign(adv) * np.inf)
    return float(d.min())


def theta_b_set(theta_star, alpha, s: ReputationScenario) -> tuple:
    """States whose own best reply to alpha excludes a2*(theta_star, alpha)."""
    g = s.game
    a = s.commitment_action(alpha)
    star = unique_best_reply(g, theta_star, a)
    return tuple(st for st in g.states if star not in best_reply_set(g, st, a))


def _psi(s, theta, theta_star, alpha, tol=TIE_TOL):
    a, star, phi = _setup(s, theta_star, alpha)
    g = s.game
    i = g.state_index(theta)
    if g.states[i] not in theta_b_set(theta_star, a, s):
        return np.inf, False
    base = payoff_vector(g.u2, phi, a.probs)
    own = a.probs @ g.u2[i]
    d0 = np.delete(base[star] - base, star)
    d1 = np.delete(own[star] - own, star)
    if np.any(d0 < -tol):
        return 0.0, True
    ties = [d0[j] / -d1[j] for j in range(d0.shape[0]) if d1[j] < -tol]
    return (float(min(ties)) if ties else np.inf), False


def psi_star(theta, theta_star, alpha, s: ReputationScenario) -> float:
    """Largest weight psi on state theta at which a2* still maximises
    u2(phi, alpha, .) + psi * u2(theta, alpha, .); +inf outside Theta^b."""
    val, flagged = _psi(s, theta, theta_star, alpha)
    if flagged:
        warnings.warn(
            "a2* is not a best reply under the commitment-conditional belief alone; psi* set to 0",
            BoundaryWarning,
            stacklevel=2,
        )
    return val


def psi_vector(theta_star, alpha, s: ReputationScenario):
    """(psi*, flags) over all states."""
    vals, flags = zip(*(_psi(s, st, theta_star, alpha) for st in s.game.states))
    return np.array(vals, dtype=float), np.array(flags, dtype=bool)


@dataclass(frozen=True)
class RegionSpec:
    psi: np.ndarray  # per state, +inf allowed
    chi: float = 1.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float).reshape(-1)
        if np.any(~(psi > 0)):
            raise ScenarioError("psi entries must be positive (use inf for unconstrained states)")
        if not self.chi > 0:
            raise ScenarioError("chi must be positive")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "chi", float(self.chi))

    @classmethod
    def from_scenario(cls, s: ReputationScenario, theta_star, alpha, chi: float = 1.0) -> "RegionSpec":
        psi, _ = psi_vector(theta_star, alpha, s)
        return cls(np.where(psi > 0, psi, np.finfo(float).tiny), chi)

    @property
    def weights(self) -> np.ndarray:
        """1/psi with infinite psi mapped to 0."""
        return np.where(np.isinf(self.psi), 0.0, 1.0 / self.psi)

    def with_chi(self, chi: float) -> "RegionSpec":
        return RegionSpec(self.psi, chi)


def chi_statistic(lam, spec: RegionSpec) -> float:
    lam = np.asarray(list(lam.values()) if isinstance(lam, Mapping) else lam, dtype=float)
    return float(lam @ spec.weights)


def in_lambda_underline(lam, spec: RegionSpec) -> bool:
    return chi_statistic(lam, spec) < spec.chi


def lambda_underline_distance(lam, spec: RegionSpec) -> float:
    """Signed distance to the hyperplane sum lam/psi = chi (positive inside)."""
    w = spec.weights
    n = np.linalg.norm(w)
    if n == 0:
        return np.inf
    return float((spec.chi - chi_statistic(lam, spec)) / n)


def in_convex_hull(alpha, others: Sequence, tol: float = 1e-9) -> bool:
    """Whether ``alpha`` is a convex combination of ``others``.

    By Caratheodory it suffices to try subsets of at most dim+1 points, each
    solved as a small least-squares system with a sum-to-one row.
    """
    target = alpha.probs if isinstance(alpha, MixedAction) else np.asarray(alpha, float)
    pts = [o.probs if isinstance(o, MixedAction) else np.asarray(o, float) for o in others]
    if not pts:
        return False
    n = target.shape[0]
    P = np.array(pts)
    for size in range(1, min(len(pts), n + 1) + 1):
        for idx in itertools.combinations(range(len(pts)), size):
            A = np.vstack([P[list(idx)].T, np.ones(size)])
            b = np.append(target, 1.0)
            w, *_ = np.linalg.lstsq(A, b, rcond=None)
            if np.all(w >= -tol) and np.linalg.norm(A @ w - b) <= tol:
                return True
    return False


def imperfect_monitoring_bound(s: ReputationScenario, theta_star, alpha, chi0):
    """(1 - chi0) * v + chi0 * min_a2 u1(theta*, alpha, a2).

    Exact when ``chi0`` is a Fraction (payoff entries are converted exactly).
    Values of chi0 above 1 are allowed but warned about.
    """
    g = s.game
    a = s.commitment_action(alpha)
    if chi0 < 0:
        raise ValueError("chi0 must be nonnegative")
    if chi0 > 1:
        warnings.warn(f"chi0 = {float(chi0):g} > 1: the bound is below the worst stage payoff", stacklevel=2)
    v = commitment_payoff(s, theta_star, a)
    i = g.state_index(theta_star)
    worst = float(np.min(a.probs @ g.u1[i]))
    if isinstance(chi0, Fraction):
        v, worst = Fraction(v), Fraction(worst)
        return v + chi0 * (worst - v)
    return v + chi0 * (worst - v)


def region_summary(s: ReputationScenario, theta_star, alpha, lam=None) -> dict:
    """Everything the regions command reports for one (theta*, alpha) pair."""
    a = s.commitment_action(alpha)
    lam0, phi = prior_likelihood(s, a)
    lam = lam0 if lam is None else as_vector(s, lam)
    spec = RegionSpec.from_scenario(s, theta_star, a)
    psi, flags = psi_vector(theta_star, a, s)
    margin, dist = lambda_margin(lam, theta_star, a, s)
    return {
        "theta_star": s.game.states[s.game.state_index(theta_star)],
        "alpha": a.label(),
        "a2_star": unique_best_reply(s.game, theta_star, a),
        "phi": dict(zip(s.game.states, phi.tolist())),
        "lambda": dict(zip(s.game.states, lam.tolist())),
        "theta_b": list(theta_b_set(theta_star, a, s)),
        "psi_star": dict(zip(s.game.states, psi.tolist())),
        "psi_flags": [st for st, f in zip(s.game.states, flags) if f],
        "chi": chi_statistic(lam, spec),
        "in_lambda_bar": in_lambda_bar(lam, theta_star, a, s),
        "in_lambda": in_lambda(lam, theta_star, a, s),
        "in_lambda_underline": in_lambda_underline(lam, spec),
        "lambda_margin": margin,
        "lambda_boundary_distance": dist,
        "lambda_bar_boundary_distance": lambda_bar_distance(lam, theta_star, a, s),
        "lambda_underline_boundary_distance": lambda_underline_distance(lam, spec),
        "tolerance": TIE_TOL,
    }


__all__ = [
    "AssumptionError",
    "BoundaryWarning",
    "RegionSpec",
    "as_vector",
    "box_vertices",
    "chi_statistic",
    "competitor_coefficients",
    "imperfect_monitoring_bound",
    "in_convex_hull",
    "in_lambda",
    "in_lambda_bar",
    "in_lambda_underline",
    "lambda_bar_distance",
    "lambda_margin",
    "lambda_underline_distance",
    "prior_likelihood",
    "psi_star",
    "psi_vector",
    "region_summary",
    "theta_b_set",
]
