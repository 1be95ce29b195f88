"""Vectorised numpy implementations of the hot loops.

Each function has the same signature and output as its numba twin in
``_numba.py``; the numpy versions vectorise across replications or grid
points instead of looping.
"""
import numpy as np

OFFPATH_MASS = 1e-300


def _sample(p, u):
    """Row-wise inverse-CDF draw: first index whose running sum exceeds ``u``."""
    cum = np.cumsum(p, axis=1)
    idx = (u[:, None] >= cum).sum(axis=1)
    last = p.shape[1] - 1 - np.argmax(p[:, ::-1] > 0, axis=1)
    return np.minimum(idx, last)


def _first_argmax(v, tol):
    best = v.max(axis=1, keepdims=True)
    return np.argmax(v >= best - tol, axis=1)


def _kl_terms(alpha, pred, supp):
    # sum over supp of alpha log(alpha/pred) - alpha + pred, plus pred off supp; every term is >= 0
    # and the log1p form avoids cancellation when pred is close to alpha
    a = np.where(supp, alpha, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = (pred - a) / a
        near = np.abs(x) < 0.5
        xn = np.where(near, x, 0.0)
        far = a * np.log(a / np.where(pred > 0, pred, 1.0)) - a + pred
        on = np.where(supp & (pred > 0), np.where(near, a * (xn - np.log1p(xn)), far), 0.0)
    return on.sum(axis=1) + np.where(supp, 0.0, pred).sum(axis=1)


def simulate_paths(uniforms, true_type, out1, trans1, init1, prior, out2, trans2, init2, myopic,
                   u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, delta,
                   band_a, band_b, far_eps, tie_tol, record):
    R, T, _ = uniforms.shape
    n1 = out1.shape[1]
    rows = np.arange(R)
    s1 = np.tile(init1, (R, 1))
    post = np.tile(prior, (R, 1))
    p2 = np.full(R, init2, dtype=np.int64)
    alive = np.ones(R, dtype=bool)
    supp = alpha > 0

    payoff = np.zeros(R)
    freq = np.zeros((R, n1))
    far = np.zeros(R, dtype=np.int64)
    kl_sum = np.zeros(R)
    up = np.zeros(R, dtype=np.int64)
    abort_t = np.full(R, -1, dtype=np.int64)
    nrec = R if record else 0
    rec_a1 = np.full((nrec, T), -1, dtype=np.int64)
    rec_a2 = np.full((nrec, T), -1, dtype=np.int64)
    rec_u1 = np.full((nrec, T), np.nan)
    rec_chi = np.full((nrec, T + 1), np.nan)
    rec_kl = np.full((nrec, T), np.nan)
    rec_l1 = np.full((nrec, T), np.nan)

    def chi_of(post):
        den = post @ commit
        num = post @ chi_w
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)

    chi = chi_of(post)
    chi_max = chi.copy()
    below = chi <= band_a
    if record:
        rec_chi[:, 0] = chi
    disc = 1.0
    for t in range(T):
        if not alive.any():
            break
        acts = out1[s1]  # (R, K, n1)
        pred = np.einsum("rk,rka->ra", post, acts)
        if myopic:
            v = np.einsum("rk,rka,kab->rb", post, acts, u2_types)
            a2dist = np.zeros((R, out2.shape[1]))
            a2dist[rows, _first_argmax(v, tie_tol)] = 1.0
        else:
            a2dist = out2[p2]
        own = acts[rows, true_type]
        a1 = _sample(own, uniforms[:, t, 0])
        a2 = _sample(a2dist, uniforms[:, t, 1])
        u = u1_types[true_type, a1, a2]

        kl = np.where(np.any(supp & (pred <= 0), axis=1), np.inf, _kl_terms(alpha, pred, supp))
        l1 = np.abs(alpha - pred).sum(axis=1)

        w = (1.0 - delta) * disc
        payoff = np.where(alive, payoff + w * u, payoff)
        freq[rows[alive], a1[alive]] += w
        far += (alive & (l1 > far_eps)).astype(np.int64)
        kl_sum = np.where(alive, kl_sum + kl, kl_sum)
        if record:
            rec_a1[alive, t] = a1[alive]
            rec_a2[alive, t] = a2[alive]
            rec_u1[alive, t] = u[alive]
            rec_kl[alive, t] = kl[alive]
            rec_l1[alive, t] = l1[alive]

        post = post * out1[s1, a1[:, None]]
        s1 = trans1[s1, a1[:, None], a2[:, None]]
        p2 = trans2[p2, a1, a2]
        total = post.sum(axis=1)
        dead = total < OFFPATH_MASS
        use_reset = dead & has_reset[p2]
        post[use_reset] = reset[p2[use_reset]]
        total = np.where(use_reset, 1.0, total)
        newly_aborted = alive & dead & ~use_reset
        abort_t[newly_aborted] = t
        alive &= ~newly_aborted
        post = post / np.where(total > 0, total, 1.0)[:, None]

        chi_new = chi_of(post)
        chi = np.where(alive, chi_new, chi)
        chi_max = np.where(alive, np.maximum(chi_max, chi), chi_max)
        completed = alive & below & (chi >= band_b)
        up += completed.astype(np.int64)
        below = np.where(alive, np.where(chi <= band_a, True, np.where(completed, False, below)), below)
        if record:
            rec_chi[alive, t + 1] = chi[alive]
        disc *= delta
    return payoff, freq, far, kl_sum, up, chi_max, abort_t, rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1


def discounted_frequencies(a1, delta, n1):
    R, T = a1.shape
    w = (1.0 - delta) * delta ** np.arange(T)
    out = np.zeros((R, n1))
    for a in range(n1):
        out[:, a] = (a1 == a) @ w
    return out


def count_upcrossings(x, a, b):
    R, T = x.shape
    below = np.zeros(R, dtype=bool)
    count = np.zeros(R, dtype=np.int64)
    for t in range(T):
        xt = x[:, t]
        done = below & (xt >= b)
        count += done
        below = np.where(xt <= a, True, np.where(done, False, below))
    return count


def walk_tree(uniforms, child, p1, p2, root):
    R, T, _ = uniforms.shape
    node = np.full(R, root, dtype=np.int64)
    nodes = np.full((R, T + 1), -1, dtype=np.int64)
    a1s = np.full((R, T), -1, dtype=np.int64)
    a2s = np.full((R, T), -1, dtype=np.int64)
    nodes[:, 0] = node
    for t in range(T):
        live = node >= 0
        if not live.any():
            break
        idx = np.where(live, node, 0)
        a1 = _sample(p1[idx], uniforms[:, t, 0])
        a2 = _sample(p2[idx], uniforms[:, t, 1])
        nxt = child[idx, a1, a2]
        a1s[live, t] = a1[live]
        a2s[live, t] = a2[live]
        node = np.where(live, nxt, -1)
        nodes[:, t + 1] = node
    return a1s, a2s, nodes


def cover_by_simplices(points, inv_psi, allowed, chunk=1024):
    bad_pts = points[~allowed]
    S = inv_psi.shape[0]
    valid = np.ones(S, dtype=bool)
    covered = np.zeros(points.shape[0], dtype=bool)
    for lo in range(0, S, chunk):
        block = inv_psi[lo:lo + chunk]
        if bad_pts.shape[0]:
            valid[lo:lo + chunk] = (bad_pts @ block.T).min(axis=0) >= 1.0
        ok = block[valid[lo:lo + chunk]]
        if ok.shape[0]:
            covered |= ((points @ ok.T) < 1.0).any(axis=1)
    return valid, covered


def _member(lam, member, dims, step):
    idx = np.ceil(lam / step - 1e-9).astype(np.int64)
    idx = np.maximum(idx, 0)
    inside = np.all(idx < dims, axis=-1)
    idx = np.minimum(idx, dims - 1)
    flat = np.ravel_multi_index(tuple(np.moveaxis(idx, -1, 0)), tuple(dims))
    return inside & member[flat]


def informative_hat_check(points, ratios, eps, member, dims, step):
    N, m = points.shape
    dims = np.asarray(dims, dtype=np.int64)
    passes = np.ones(N, dtype=bool)
    informative = np.zeros(N, dtype=bool)
    for j in range(ratios.shape[0]):
        D = points[:, None, :] * (1.0 - ratios[j][None, :, :])  # (N, A, m)
        nd = np.sqrt((D ** 2).sum(axis=2)).max(axis=1)
        inf_j = nd >= eps * (1.0 - 1e-12)
        if not inf_j.any():
            continue
        informative |= inf_j
        scale = np.where(inf_j, eps / np.where(nd > 0, nd, 1.0), 0.0)
        for t in (scale, np.ones(N)):
            lam = points[:, None, :] - t[:, None, None] * D
            ok = _member(lam, member, dims, step).any(axis=1)
            passes &= ~inf_j | ok
    return passes, informative
