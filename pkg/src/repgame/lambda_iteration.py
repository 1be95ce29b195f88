"""Grid approximation of the monotone region iteration that grows a
size-xi seed set up to the chi < 1 region.

The grid lives on the Theta^b coordinates (states whose psi* is finite);
the other coordinates never enter the chi statistic. All regions involved
are down-closed, so membership of an off-grid point is tested by rounding
each coordinate up to the grid, which never overstates membership.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .game import ReputationScenario, ScenarioError
from .geometry import psi_vector

MIN_AXIS_POINTS = 10
MAX_GRID_DIM = 3


@dataclass
class GridRegion:
    coords: tuple  # state labels of the grid axes
    step: float
    upper: np.ndarray  # per-axis maximum
    mask: np.ndarray  # flat boolean membership, C order

    @property
    def dims(self) -> tuple:
        return tuple(int(round(u / self.step)) + 1 for u in self.upper)

    def __post_init__(self):
        self.upper = np.asarray(self.upper, dtype=float)
        self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
        if self.mask.size != int(np.prod(self.dims)):
            raise ValueError("membership size does not match the grid")

    def points(self) -> np.ndarray:
        return grid_points(self.dims, self.step)

    def grid(self) -> np.ndarray:
        return self.mask.reshape(self.dims)

    def with_mask(self, mask) -> "GridRegion":
        return GridRegion(self.coords, self.step, self.upper, mask)

    def __contains__(self, lam) -> bool:
        lam = np.asarray(lam, dtype=float)
        idx = np.ceil(lam / self.step - 1e-9).astype(int)
        if np.any(idx >= self.dims):
            return False
        return bool(self.grid()[tuple(np.maximum(idx, 0))])

    def count(self) -> int:
        return int(self.mask.sum())


def grid_points(dims, step) -> np.ndarray:
    axes = [np.arange(d) * step for d in dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([x.reshape(-1) for x in mesh], axis=1)


def hausdorff_cells(a: GridRegion, b: GridRegion) -> float:
    """Hausdorff distance between two grid sets, in grid cells."""
    A, B = a.grid(), b.grid()
    if not A.any() and not B.any():
        return 0.0
    if not A.any() or not B.any():
        return np.inf
    to_b = ndimage.distance_transform_edt(~B)
    to_a = ndimage.distance_transform_edt(~A)
    return float(max(to_b[A].max(), to_a[B].max()))


def _intercept_candidates(psi_i, step, grid_max, n_log=64):
    """Intercepts below psi_i: grid multiples, log-spaced values hugging
    psi_i, and psi_i itself less a hair."""
    top = min(psi_i, grid_max + step)
    mult = np.arange(1, int(np.ceil(top / step)) + 1) * step
    r = np.geomspace(1e-4, 0.999, n_log)
    near = psi_i * (1.0 - r)
    c = np.concatenate([mult, near, [psi_i * (1 - 1e-9)]])
    c = c[(c > 0) & (c < psi_i)]
    return np.unique(c)


def size_xi_simplices(psi: np.ndarray, xi: float, n_log: int = 64) -> np.ndarray:
    """Inverse intercepts of simplices whose lower set has at most one coordinate above xi.

    One axis (the long one) takes intercept psi_i(1 - r), r log-spaced in
    [1e-4, 0.999]; every other axis gets the largest intercept t that keeps
    each pair of coordinates from both exceeding xi: xi/t_i + xi/t_j >= 1.
    """
    m = psi.shape[0]
    out = []
    r = np.geomspace(1e-4, 0.999, n_log)
    for i in range(m):
        for long in psi[i] * (1.0 - r):
            t = np.empty(m)
            t[i] = long
            for j in range(m):
                if j == i:
                    continue
                cap = xi * long / (long - xi) if long > xi else np.inf
                if m > 2:
                    cap = min(cap, 2 * xi)
                t[j] = min(cap, psi[j] * (1 - 1e-9))
            if np.all(t > 0) and np.all(t < psi):
                out.append(1.0 / t)
    return np.array(out).reshape(-1, m)


def _size_xi_ok(inv_t: np.ndarray, xi: float) -> bool:
    m = inv_t.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            if xi * (inv_t[i] + inv_t[j]) < 1.0 - 1e-12:
                return False
    return True


def adversarial_profiles(alpha_probs: np.ndarray, m: int, eps_dirs: int, seed: int = 0) -> np.ndarray:
    """Per-type action profiles as likelihood ratios r[j, a, i] = alpha_i(a)/alpha*(a), a in supp alpha*.

    Dirichlet-random profiles plus every combination of pure actions per type
    (the extreme points of the profile set).
    """
    rng = np.random.default_rng(seed)
    n1 = alpha_probs.shape[0]
    supp = np.flatnonzero(alpha_probs > 0)
    profiles = []
    if n1 ** m <= 4096:
        for combo in np.ndindex(*([n1] * m)):
            P = np.zeros((m, n1))
            P[np.arange(m), combo] = 1.0
            profiles.append(P)
    for _ in range(eps_dirs):
        P = rng.dirichlet(np.ones(n1) * rng.choice([0.3, 1.0, 3.0]), size=m)
        profiles.append(P)
    P = np.array(profiles)  # (J, m, n1)
    ratios = P[:, :, supp] / alpha_probs[supp][None, None, :]
    return np.ascontiguousarray(np.transpose(ratios, (0, 2, 1)))  # (J, |supp|, m)


@dataclass
class IterationReport:
    coords: tuple
    psi: list
    xi: float
    eps: float
    step: float
    upper: list
    n_profiles: int
    iterations: int
    converged: bool
    counts: list = field(default_factory=list)
    hausdorff_cells: float = np.inf
    target_count: int = 0
    backend: str = kernels.BACKEND

    def to_dict(self) -> dict:
        return {
            "coords": list(self.coords),
            "psi": self.psi,
            "xi": self.xi,
            "epsilon": self.eps,
            "grid_step": self.step,
            "grid_max": self.upper,
            "profiles_sampled": self.n_profiles,
            "iterations": self.iterations,
            "converged": self.converged,
            "member_counts": self.counts,
            "hausdorff_cells": self.hausdorff_cells,
            "target_count": self.target_count,
            "backend": self.backend,
        }


def target_region(psi: np.ndarray, chi: float, coords, step, upper) -> GridRegion:
    g = GridRegion(coords, step, upper, np.zeros(int(np.prod([int(round(u / step)) + 1 for u in upper])), bool))
    return g.with_mask(g.points() @ (1.0 / psi) < chi)


def lambda_k_iteration(s: ReputationScenario, theta_star, alpha, xi: float, eps: float,
                       grid_step: float = 0.05, grid_max: float = 4.0, max_k: int = 50,
                       n_profiles: int = 512, seed: int = 0):
    """Run the region iteration on a grid.

    Returns ``(regions, report)`` where ``regions[k]`` is Lambda^k as a
    GridRegion. The quantifier over opponent behaviour is approximated by
    ``n_profiles`` random per-type profiles plus all pure-action
    combinations; each profile is also rescaled to the smallest size that is
    still informative (norm of the belief move equal to eps).
    """
    if xi <= 0 or eps <= 0:
        raise ValueError("xi and eps must be positive")
    a = s.commitment_action(alpha)
    psi_all, _ = psi_vector(theta_star, a, s)
    keep = np.isfinite(psi_all)
    coords = tuple(st for st, k in zip(s.game.states, keep) if k)
    m = len(coords)
    if m == 0:
        raise ScenarioError("Theta^b is empty: every likelihood vector is already in the region")
    if m > MAX_GRID_DIM:
        raise ScenarioError(f"grid iteration supports at most {MAX_GRID_DIM} constrained states, got {m}")
    psi = psi_all[keep]
    upper = np.full(m, float(grid_max))
    dims = tuple(int(round(u / grid_step)) + 1 for u in upper)
    if min(dims) < MIN_AXIS_POINTS:
        raise ValueError(f"grid too coarse: {min(dims)} points per axis (need {MIN_AXIS_POINTS})")
    pts = grid_points(dims, grid_step)
    target = target_region(psi, 1.0, coords, grid_step, upper)
    in_under = target.mask

    seed_inv = size_xi_simplices(psi, xi)
    seed_inv = seed_inv[[_size_xi_ok(v, xi) for v in seed_inv]]
    _, lam0 = kernels.cover_by_simplices(pts, seed_inv, np.ones(len(pts), dtype=bool))
    regions = [target.with_mask(lam0 & in_under)]

    cands = [_intercept_candidates(p, grid_step, grid_max) for p in psi]
    inv_all = 1.0 / np.array(np.meshgrid(*cands, indexing="ij")).reshape(m, -1).T

    ratios = adversarial_profiles(a.probs, m, n_profiles, seed)
    counts = [regions[0].count()]
    converged = False
    k = 0
    for k in range(1, max_k + 1):
        prev = regions[-1].mask
        passes, _ = kernels.informative_hat_check(pts, ratios, eps, prev, np.array(dims), grid_step)
        hat = in_under & (prev | passes)
        allowed = prev | hat
        _, covered = kernels.cover_by_simplices(pts, inv_all, allowed)
        new = prev | (covered & in_under)
        regions.append(target.with_mask(new))
        counts.append(int(new.sum()))
        if np.array_equal(new, prev):
            converged = True
            break
    report = IterationReport(
        coords=coords,
        psi=psi.tolist(),
        xi=xi,
        eps=eps,
        step=grid_step,
        upper=upper.tolist(),
        n_profiles=int(ratios.shape[0]),
        iterations=k,
        converged=converged,
        counts=counts,
        hausdorff_cells=hausdorff_cells(regions[-1], target),
        target_count=target.count(),
    )
    return regions, report


def regions_csv(coords, step, upper, columns: dict) -> str:
    """CSV of grid points with one 0/1 membership column per named region."""
    dims = tuple(int(round(u / step)) + 1 for u in upper)
    pts = grid_points(dims, step)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"lambda_{c}" for c in coords] + list(columns))
    cols = [np.asarray(v, dtype=bool).reshape(-1) for v in columns.values()]
    for n, p in enumerate(pts):
        w.writerow([f"{x:.10g}" for x in p] + [int(c[n]) for c in cols])
    return buf.getvalue()
