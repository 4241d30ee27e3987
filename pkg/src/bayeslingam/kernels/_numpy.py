"""Vectorised numpy versions of the kernels in ``_numba``.

Same signatures and return conventions; results agree to floating-point
summation order.
"""

import math

import numpy as np

from .. import special

LOG_SQRT_PI = 0.5 * math.log(math.pi)
LOG_2PI = math.log(2.0 * math.pi)


def _resid(y, Xp, b):
    if b.shape[0] == 0:
        return y.copy()
    return y - Xp @ b


def gl_loglik_grad(y, Xp, b, alpha, log_beta, eps):
    n_obs = y.shape[0]
    p = b.shape[0]
    beta = math.exp(log_beta)
    sb = math.sqrt(beta)
    u = alpha / (2.0 * sb)
    log_z = LOG_SQRT_PI - 0.5 * log_beta + special.log_erfcx(u)
    g_u = special.dlog_erfcx(u)
    r = _resid(y, Xp, b)
    if eps > 0.0:
        a = np.sqrt(r * r + eps)
        da = r / a
    else:
        a = np.abs(r)
        da = np.sign(r)
    s_abs = a.sum()
    s_sq = (r * r).sum()
    grad = np.empty(p + 2)
    if p:
        d_r = -alpha * da - 2.0 * beta * r
        grad[:p] = -(d_r @ Xp)
    value = -alpha * s_abs - beta * s_sq - n_obs * log_z
    grad[p] = -s_abs - n_obs * g_u / (2.0 * sb)
    grad[p + 1] = -beta * s_sq - n_obs * (-0.5 - 0.5 * g_u * u)
    return value, grad


def gl_loglik(y, Xp, b, alpha, log_beta):
    beta = math.exp(log_beta)
    u = alpha / (2.0 * math.sqrt(beta))
    log_z = LOG_SQRT_PI - 0.5 * log_beta + special.log_erfcx(u)
    r = _resid(y, Xp, b)
    return -alpha * np.abs(r).sum() - beta * (r * r).sum() - y.shape[0] * log_z


def mog_loglik_grad(y, Xp, b, gamma, mu, log_sigma):
    p = b.shape[0]
    k = gamma.shape[0]
    w = np.exp(gamma - gamma.max())
    pi = w / w.sum()
    sigma = np.exp(log_sigma)
    r = _resid(y, Xp, b)
    z = (r[:, None] - mu[None, :]) / sigma[None, :]
    lc = np.log(pi) - log_sigma - 0.5 * LOG_2PI - 0.5 * z * z
    cmax = lc.max(axis=1)
    lse = cmax + np.log(np.exp(lc - cmax[:, None]).sum(axis=1))
    resp = np.exp(lc - lse[:, None])
    grad = np.empty(p + 3 * k)
    d_r = -(resp * z / sigma).sum(axis=1)
    if p:
        grad[:p] = -(d_r @ Xp)
    grad[p:p + k] = resp.sum(axis=0) - y.shape[0] * pi
    grad[p + k:p + 2 * k] = (resp * z).sum(axis=0) / sigma
    grad[p + 2 * k:] = (resp * (z * z - 1.0)).sum(axis=0)
    return lse.sum(), grad


def gl_metropolis(y, Xp, theta0, temp, base_scale, mult0, normals, log_u,
                  n_burn, batch, target, prior_mean, prior_sd):
    n_steps, d = normals.shape
    p = d - 2
    theta = theta0.copy()
    ll = gl_loglik(y, Xp, theta[:p], theta[p], theta[p + 1])
    lp = -0.5 * (((theta - prior_mean) / prior_sd) ** 2).sum()
    mult = mult0
    n_keep = n_steps - n_burn
    ll_trace = np.empty(n_keep)
    samples = np.empty((n_keep, d))
    acc_batch = 0
    acc_keep = 0
    for s in range(n_steps):
        prop = theta + mult * base_scale * normals[s]
        lp_new = -0.5 * (((prop - prior_mean) / prior_sd) ** 2).sum()
        ll_new = gl_loglik(y, Xp, prop[:p], prop[p], prop[p + 1])
        if log_u[s] < temp * (ll_new - ll) + (lp_new - lp):
            theta = prop
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
            samples[s - n_burn] = theta
    return ll_trace, samples, theta, mult, acc_keep


def enumerate_dag_masks(n, perms, n_dags):
    n_pairs = n * (n - 1) // 2
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    subs = np.arange(1 << n_pairs, dtype=np.int64)
    bits = [(subs >> e) & 1 for e in range(n_pairs)]
    all_masks = []
    all_codes = []
    for perm in perms:
        par = np.zeros((subs.shape[0], n), np.int64)
        code = np.zeros(subs.shape[0], np.int64)
        for e, (a, b) in enumerate(pairs):
            j, i = perm[a], perm[b]
            par[:, i] |= bits[e] << j
            code |= bits[e] << (j * n + i)
        ok = np.ones(subs.shape[0], bool)
        remaining = (1 << n) - 1
        for t in range(n):
            v = perm[t]
            for u in range(v):
                if (remaining >> u) & 1:
                    ok &= (par[:, u] & remaining) != 0
            remaining &= ~(1 << v)
        all_masks.append(par[ok].astype(np.uint8))
        all_codes.append(code[ok])
    masks = np.concatenate(all_masks) if all_masks else np.zeros((0, n), np.uint8)
    codes = np.concatenate(all_codes) if all_codes else np.zeros(0, np.int64)
    return masks, codes


def dag_scores(masks, table):
    n = masks.shape[1]
    out = np.zeros(masks.shape[0])
    for i in range(n):
        out += table[i, masks[:, i]]
    return out


def class_keys(masks, n_words):
    n_dags, n = masks.shape
    n_pairs = n * (n - 1) // 2
    m = masks.astype(np.int64)
    pidx = {}
    q = 0
    for a in range(n):
        for b in range(a + 1, n):
            pidx[a, b] = pidx[b, a] = q
            q += 1
    keys = np.zeros((n_dags, n_words), np.int64)
    for i in range(n):
        for j in range(n):
            if i != j:
                keys[:, 0] |= ((m[:, i] >> j) & 1) << pidx[i, j]
    skel = keys[:, 0]
    for c in range(n):
        for a in range(n):
            for b in range(a + 1, n):
                if c in (a, b):
                    continue
                hit = ((m[:, c] >> a) & 1) & ((m[:, c] >> b) & 1)
                hit &= 1 - ((skel >> pidx[a, b]) & 1)
                bit = c * n_pairs + pidx[a, b]
                keys[:, 1 + bit // 62] |= hit << (bit % 62)
    return keys
