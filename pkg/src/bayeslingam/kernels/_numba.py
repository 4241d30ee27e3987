"""Loop kernels compiled with numba. Mirrors ``_numpy`` one for one."""

import math

import numpy as np
from numba import njit

from .. import special

_log_erfcx = special.log_erfcx
_dlog_erfcx = special.dlog_erfcx

LOG_SQRT_PI = 0.5 * math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def gl_loglik_grad(y, Xp, b, alpha, log_beta, eps):
    """GL log-likelihood of residuals ``y - Xp @ b`` and its gradient.

    Gradient layout is ``[b_0, ..., b_{p-1}, alpha, log_beta]``. With
    ``eps == 0`` the exact ``|r|`` is used (subgradient 0 at r == 0).
    """
    n_obs = y.shape[0]
    p = b.shape[0]
    beta = math.exp(log_beta)
    sb = math.sqrt(beta)
    u = alpha / (2.0 * sb)
    log_z = LOG_SQRT_PI - 0.5 * log_beta + _log_erfcx(u)
    g_u = _dlog_erfcx(u)
    grad = np.zeros(p + 2)
    s_abs = 0.0
    s_sq = 0.0
    for m in range(n_obs):
        r = y[m]
        for j in range(p):
            r -= b[j] * Xp[m, j]
        if eps > 0.0:
            a = math.sqrt(r * r + eps)
            da = r / a
        else:
            a = abs(r)
            da = 1.0 if r > 0.0 else (-1.0 if r < 0.0 else 0.0)
        s_abs += a
        s_sq += r * r
        d_r = -alpha * da - 2.0 * beta * r
        for j in range(p):
            grad[j] -= d_r * Xp[m, j]
    value = -alpha * s_abs - beta * s_sq - n_obs * log_z
    grad[p] = -s_abs - n_obs * g_u / (2.0 * sb)
    grad[p + 1] = -beta * s_sq - n_obs * (-0.5 - 0.5 * g_u * u)
    return value, grad


@njit(cache=True)
def gl_loglik(y, Xp, b, alpha, log_beta):
    n_obs = y.shape[0]
    beta = math.exp(log_beta)
    u = alpha / (2.0 * math.sqrt(beta))
    log_z = LOG_SQRT_PI - 0.5 * log_beta + _log_erfcx(u)
    s_abs = 0.0
    s_sq = 0.0
    for m in range(n_obs):
        r = y[m]
        for j in range(b.shape[0]):
            r -= b[j] * Xp[m, j]
        s_abs += abs(r)
        s_sq += r * r
    return -alpha * s_abs - beta * s_sq - n_obs * log_z


@njit(cache=True)
def mog_loglik_grad(y, Xp, b, gamma, mu, log_sigma):
    """MoG log-likelihood of residuals and gradient.

    Gradient layout is ``[b, gamma, mu, log_sigma]``.
    """
    n_obs = y.shape[0]
    p = b.shape[0]
    k = gamma.shape[0]
    gmax = gamma.max()
    w = np.exp(gamma - gmax)
    pi = w / w.sum()
    log_pi = np.log(pi)
    sigma = np.exp(log_sigma)
    lc = np.empty(k)
    grad = np.zeros(p + 3 * k)
    value = 0.0
    for m in range(n_obs):
        r = y[m]
        for j in range(p):
            r -= b[j] * Xp[m, j]
        cmax = -np.inf
        for c in range(k):
            z = (r - mu[c]) / sigma[c]
            lc[c] = log_pi[c] - log_sigma[c] - 0.5 * LOG_2PI - 0.5 * z * z
            if lc[c] > cmax:
                cmax = lc[c]
        tot = 0.0
        for c in range(k):
            tot += math.exp(lc[c] - cmax)
        lse = cmax + math.log(tot)
        value += lse
        d_r = 0.0
        for c in range(k):
            resp = math.exp(lc[c] - lse)
            z = (r - mu[c]) / sigma[c]
            d_r -= resp * z / sigma[c]
            grad[p + c] += resp - pi[c]
            grad[p + k + c] += resp * z / sigma[c]
            grad[p + 2 * k + c] += resp * (z * z - 1.0)
        for j in range(p):
            grad[j] -= d_r * Xp[m, j]
    return value, grad


@njit(cache=True)
def gl_metropolis(y, Xp, theta0, temp, base_scale, mult0, normals, log_u,
                  n_burn, batch, target, prior_mean, prior_sd):
    """Random-walk Metropolis on ``temp * loglik + logprior`` for a GL family.

    ``theta = [b, alpha, log_beta]``. The proposal is
    ``theta + mult * base_scale * normals[s]``; ``mult`` is tuned on the
    log scale after each burn-in batch toward the ``target`` acceptance rate.
    Returns the post-burn-in log-likelihood trace, post-burn-in samples, the
    final state, the tuned multiplier and the post-burn-in accept count.
    """
    n_steps, d = normals.shape
    p = d - 2
    theta = theta0.copy()
    ll = gl_loglik(y, Xp, theta[:p], theta[p], theta[p + 1])
    lp = 0.0
    for i in range(d):
        z = (theta[i] - prior_mean[i]) / prior_sd[i]
        lp -= 0.5 * z * z
    mult = mult0
    n_keep = n_steps - n_burn
    ll_trace = np.empty(n_keep)
    samples = np.empty((n_keep, d))
    prop = np.empty(d)
    acc_batch = 0
    acc_keep = 0
    for s in range(n_steps):
        for i in range(d):
            prop[i] = theta[i] + mult * base_scale[i] * normals[s, i]
        lp_new = 0.0
        for i in range(d):
            z = (prop[i] - prior_mean[i]) / prior_sd[i]
            lp_new -= 0.5 * z * z
        ll_new = gl_loglik(y, Xp, prop[:p], prop[p], prop[p + 1])
        if log_u[s] < temp * (ll_new - ll) + (lp_new - lp):
            for i in range(d):
                theta[i] = prop[i]
            ll = ll_new
            lp = lp_new
            if s < n_burn:
                acc_batch += 1
            else:
                acc_keep += 1
        if s < n_burn:
            if (s + 1) % batch == 0:
                mult *= math.exp(2.0 * (acc_batch / batch - target))
                acc_batch = 0
        else:
            ll_trace[s - n_burn] = ll
            for i in range(d):
                samples[s - n_burn, i] = theta[i]
    return ll_trace, samples, theta, mult, acc_keep


@njit(cache=True)
def enumerate_dag_masks(n, perms, n_dags):
    """All labelled DAGs on ``n`` nodes as parent bitmasks, unsorted.

    A DAG is emitted for ordering ``perm`` iff ``perm`` is its topological
    order with smallest-index tie-breaking, so each DAG appears exactly once.
    Returns ``(masks, codes)`` where ``codes`` packs edge j->i at bit j*n+i.
    """
    n_pairs = n * (n - 1) // 2
    pa = np.empty(n_pairs, np.int64)
    pb = np.empty(n_pairs, np.int64)
    q = 0
    for a in range(n):
        for b in range(a + 1, n):
            pa[q] = a
            pb[q] = b
            q += 1
    masks = np.zeros((n_dags, n), np.uint8)
    codes = np.zeros(n_dags, np.int64)
    par = np.zeros(n, np.int64)
    out = 0
    for pi in range(perms.shape[0]):
        perm = perms[pi]
        for sub in range(1 << n_pairs):
            for i in range(n):
                par[i] = 0
            for e in range(n_pairs):
                if (sub >> e) & 1:
                    par[perm[pb[e]]] |= 1 << perm[pa[e]]
            ok = True
            remaining = (1 << n) - 1
            for t in range(n):
                v = perm[t]
                for u in range(v):
                    if (remaining >> u) & 1 and (par[u] & remaining) == 0:
                        ok = False
                        break
                if not ok:
                    break
                remaining &= ~(1 << v)
            if ok:
                code = 0
                for i in range(n):
                    masks[out, i] = par[i]
                    for j in range(n):
                        if (par[i] >> j) & 1:
                            code |= 1 << (j * n + i)
                codes[out] = code
                out += 1
    return masks[:out], codes[:out]


@njit(cache=True)
def dag_scores(masks, table):
    n_dags, n = masks.shape
    out = np.empty(n_dags)
    for k in range(n_dags):
        s = 0.0
        for i in range(n):
            s += table[i, masks[k, i]]
        out[k] = s
    return out


@njit(cache=True)
def class_keys(masks, n_words):
    """Skeleton plus v-structure bitsets; equal rows <=> Markov equivalent.

    Column 0 holds the skeleton (bit per unordered pair); v-structure
    ``a -> c <- b`` sets bit ``c * n_pairs + pair(a, b)`` spread over the
    remaining columns, 62 bits per column.
    """
    n_dags, n = masks.shape
    n_pairs = n * (n - 1) // 2
    pidx = np.zeros((n, n), np.int64)
    q = 0
    for a in range(n):
        for b in range(a + 1, n):
            pidx[a, b] = q
            pidx[b, a] = q
            q += 1
    keys = np.zeros((n_dags, n_words), np.int64)
    for k in range(n_dags):
        skel = 0
        for i in range(n):
            for j in range(n):
                if (masks[k, i] >> j) & 1:
                    skel |= 1 << pidx[i, j]
        keys[k, 0] = skel
        for c in range(n):
            m = masks[k, c]
            for a in range(n):
                if not (m >> a) & 1:
                    continue
                for b in range(a + 1, n):
                    if not (m >> b) & 1:
                        continue
                    if (skel >> pidx[a, b]) & 1:
                        continue
                    bit = c * n_pairs + pidx[a, b]
                    keys[k, 1 + bit // 62] |= 1 << (bit % 62)
    return keys
