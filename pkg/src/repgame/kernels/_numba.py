"""numba-compiled versions of the hot loops (one replication or grid point per iteration)."""
import math

import numpy as np
from numba import config, njit, prange

# the bundled TBB is often too old; omp/workqueue are always usable
config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

OFFPATH_MASS = 1e-300


@njit(cache=True)
def _sample(p, u):
    acc = 0.0
    last = -1
    for j in range(p.shape[0]):
        acc += p[j]
        if p[j] > 0:
            last = j
        if u < acc:
            return j
    return last


@njit(cache=True)
def _chi(post, commit, chi_w):
    num = 0.0
    den = 0.0
    for k in range(post.shape[0]):
        num += post[k] * chi_w[k]
        den += post[k] * commit[k]
    if den > 0:
        return num / den
    return np.inf


@njit(cache=True, nogil=True)
def _simulate_one(r, uniforms, k_true, out1, trans1, init1, prior, out2, trans2, init2, myopic,
                  u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, delta,
                  band_a, band_b, far_eps, tie_tol, record,
                  payoff, freq, far, kl_sum, up, chi_max, abort_t,
                  rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1):
    T = uniforms.shape[1]
    K = init1.shape[0]
    n1 = out1.shape[1]
    n2 = out2.shape[1]
    s1 = init1.copy()
    post = prior.copy()
    p2 = init2
    pred = np.empty(n1)
    v = np.empty(n2)
    a2dist = np.empty(n2)
    chi = _chi(post, commit, chi_w)
    cmax = chi
    below = chi <= band_a
    if record:
        rec_chi[r, 0] = chi
    disc = 1.0
    for t in range(T):
        for a in range(n1):
            acc = 0.0
            for k in range(K):
                acc += post[k] * out1[s1[k], a]
            pred[a] = acc
        if myopic:
            for b in range(n2):
                acc = 0.0
                for k in range(K):
                    for a in range(n1):
                        acc += post[k] * out1[s1[k], a] * u2_types[k, a, b]
                v[b] = acc
            best = v.max()
            pick = 0
            for b in range(n2):
                if v[b] >= best - tie_tol:
                    pick = b
                    break
            for b in range(n2):
                a2dist[b] = 1.0 if b == pick else 0.0
        else:
            for b in range(n2):
                a2dist[b] = out2[p2, b]
        a1 = _sample(out1[s1[k_true]], uniforms[r, t, 0])
        a2 = _sample(a2dist, uniforms[r, t, 1])
        u = u1_types[k_true, a1, a2]

        kl = 0.0
        l1 = 0.0
        for a in range(n1):
            l1 += abs(alpha[a] - pred[a])
            if alpha[a] > 0:
                if pred[a] <= 0:
                    kl = np.inf
                elif kl != np.inf:
                    x = (pred[a] - alpha[a]) / alpha[a]
                    if abs(x) < 0.5:
                        kl += alpha[a] * (x - math.log1p(x))
                    else:
                        kl += alpha[a] * math.log(alpha[a] / pred[a]) - alpha[a] + pred[a]
            elif kl != np.inf:
                kl += pred[a]

        w = (1.0 - delta) * disc
        payoff[r] += w * u
        freq[r, a1] += w
        if l1 > far_eps:
            far[r] += 1
        kl_sum[r] += kl
        if record:
            rec_a1[r, t] = a1
            rec_a2[r, t] = a2
            rec_u1[r, t] = u
            rec_kl[r, t] = kl
            rec_l1[r, t] = l1

        total = 0.0
        for k in range(K):
            post[k] *= out1[s1[k], a1]
            s1[k] = trans1[s1[k], a1, a2]
            total += post[k]
        p2 = trans2[p2, a1, a2]
        if total < OFFPATH_MASS:
            if has_reset[p2]:
                for k in range(K):
                    post[k] = reset[p2, k]
                total = 1.0
            else:
                abort_t[r] = t
                break
        for k in range(K):
            post[k] /= total

        chi = _chi(post, commit, chi_w)
        if chi > cmax:
            cmax = chi
        if chi <= band_a:
            below = True
        elif below and chi >= band_b:
            up[r] += 1
            below = False
        if record:
            rec_chi[r, t + 1] = chi
        disc *= delta
    chi_max[r] = cmax


@njit(cache=True, parallel=True)
def _simulate_all(uniforms, true_type, out1, trans1, init1, prior, out2, trans2, init2, myopic,
                  u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, delta,
                  band_a, band_b, far_eps, tie_tol, record,
                  payoff, freq, far, kl_sum, up, chi_max, abort_t,
                  rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1):
    for r in prange(uniforms.shape[0]):
        _simulate_one(r, uniforms, true_type[r], out1, trans1, init1, prior, out2, trans2, init2, myopic,
                      u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, delta,
                      band_a, band_b, far_eps, tie_tol, record,
                      payoff, freq, far, kl_sum, up, chi_max, abort_t,
                      rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1)


def simulate_paths(uniforms, true_type, out1, trans1, init1, prior, out2, trans2, init2, myopic,
                   u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, delta,
                   band_a, band_b, far_eps, tie_tol, record):
    R, T, _ = uniforms.shape
    n1 = out1.shape[1]
    payoff = np.zeros(R)
    freq = np.zeros((R, n1))
    far = np.zeros(R, dtype=np.int64)
    kl_sum = np.zeros(R)
    up = np.zeros(R, dtype=np.int64)
    chi_max = np.zeros(R)
    abort_t = np.full(R, -1, dtype=np.int64)
    nrec = R if record else 0
    rec_a1 = np.full((nrec, T), -1, dtype=np.int64)
    rec_a2 = np.full((nrec, T), -1, dtype=np.int64)
    rec_u1 = np.full((nrec, T), np.nan)
    rec_chi = np.full((nrec, T + 1), np.nan)
    rec_kl = np.full((nrec, T), np.nan)
    rec_l1 = np.full((nrec, T), np.nan)
    _simulate_all(uniforms, true_type, out1, trans1, init1, prior, out2, trans2, np.int64(init2), bool(myopic),
                  u2_types, u1_types, reset, has_reset, alpha, commit, chi_w, float(delta),
                  float(band_a), float(band_b), float(far_eps), float(tie_tol), bool(record),
                  payoff, freq, far, kl_sum, up, chi_max, abort_t,
                  rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1)
    return payoff, freq, far, kl_sum, up, chi_max, abort_t, rec_a1, rec_a2, rec_u1, rec_chi, rec_kl, rec_l1


@njit(cache=True, parallel=True)
def _discounted_frequencies(a1, delta, n1):
    R, T = a1.shape
    out = np.zeros((R, n1))
    for r in prange(R):
        disc = 1.0 - delta
        for t in range(T):
            out[r, a1[r, t]] += disc
            disc *= delta
    return out


def discounted_frequencies(a1, delta, n1):
    return _discounted_frequencies(np.ascontiguousarray(a1, dtype=np.int64), float(delta), int(n1))


@njit(cache=True, parallel=True)
def _count_upcrossings(x, a, b):
    R, T = x.shape
    count = np.zeros(R, dtype=np.int64)
    for r in prange(R):
        below = False
        for t in range(T):
            if x[r, t] <= a:
                below = True
            elif below and x[r, t] >= b:
                count[r] += 1
                below = False
    return count


def count_upcrossings(x, a, b):
    return _count_upcrossings(np.ascontiguousarray(x, dtype=np.float64), float(a), float(b))


@njit(cache=True, parallel=True)
def _walk_tree(uniforms, child, p1, p2, root, a1s, a2s, nodes):
    R, T, _ = uniforms.shape
    for r in prange(R):
        node = root
        nodes[r, 0] = node
        for t in range(T):
            if node < 0:
                break
            a1 = _sample(p1[node], uniforms[r, t, 0])
            a2 = _sample(p2[node], uniforms[r, t, 1])
            a1s[r, t] = a1
            a2s[r, t] = a2
            node = child[node, a1, a2]
            nodes[r, t + 1] = node


def walk_tree(uniforms, child, p1, p2, root):
    R, T, _ = uniforms.shape
    nodes = np.full((R, T + 1), -1, dtype=np.int64)
    a1s = np.full((R, T), -1, dtype=np.int64)
    a2s = np.full((R, T), -1, dtype=np.int64)
    _walk_tree(uniforms, child, p1, p2, np.int64(root), a1s, a2s, nodes)
    return a1s, a2s, nodes


@njit(cache=True, parallel=True)
def _cover(points, inv_psi, allowed, valid, covered):
    N, m = points.shape
    S = inv_psi.shape[0]
    for s in prange(S):
        ok = True
        for p in range(N):
            if allowed[p]:
                continue
            d = 0.0
            for i in range(m):
                d += points[p, i] * inv_psi[s, i]
            if d < 1.0:
                ok = False
                break
        valid[s] = ok
    for p in prange(N):
        for s in range(S):
            if not valid[s]:
                continue
            d = 0.0
            for i in range(m):
                d += points[p, i] * inv_psi[s, i]
            if d < 1.0:
                covered[p] = True
                break


def cover_by_simplices(points, inv_psi, allowed):
    valid = np.zeros(inv_psi.shape[0], dtype=np.bool_)
    covered = np.zeros(points.shape[0], dtype=np.bool_)
    _cover(points, inv_psi, allowed, valid, covered)
    return valid, covered


@njit(cache=True)
def _member(lam, member, dims, step):
    flat = 0
    for i in range(lam.shape[0]):
        idx = int(math.ceil(lam[i] / step - 1e-9))
        if idx < 0:
            idx = 0
        if idx >= dims[i]:
            return False
        flat = flat * dims[i] + idx
    return member[flat]


@njit(cache=True, parallel=True)
def _hat(points, ratios, eps, member, dims, step, passes, informative):
    N, m = points.shape
    J, A, _ = ratios.shape
    for p in prange(N):
        D = np.empty((A, m))
        lam = np.empty(m)
        ok_all = True
        inf_any = False
        for j in range(J):
            nd = 0.0
            for a in range(A):
                sq = 0.0
                for i in range(m):
                    D[a, i] = points[p, i] * (1.0 - ratios[j, a, i])
                    sq += D[a, i] * D[a, i]
                if math.sqrt(sq) > nd:
                    nd = math.sqrt(sq)
            if nd < eps * (1.0 - 1e-12):
                continue
            inf_any = True
            for variant in range(2):
                t = eps / nd if variant == 0 else 1.0
                ok = False
                for a in range(A):
                    for i in range(m):
                        lam[i] = points[p, i] - t * D[a, i]
                    if _member(lam, member, dims, step):
                        ok = True
                        break
                if not ok:
                    ok_all = False
                    break
            if not ok_all:
                break
        passes[p] = ok_all
        informative[p] = inf_any


def informative_hat_check(points, ratios, eps, member, dims, step):
    N = points.shape[0]
    passes = np.zeros(N, dtype=np.bool_)
    informative = np.zeros(N, dtype=np.bool_)
    _hat(points, ratios, float(eps), member, np.asarray(dims, dtype=np.int64), float(step), passes, informative)
    return passes, informative
