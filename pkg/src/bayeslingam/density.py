"""Disturbance densities: the GL (Gaussian-Laplace) and MoG families.

GL:  p(e) = exp(-alpha |e| - beta e^2) / Z(alpha, beta), beta = exp(log_beta)
MoG: p(e) = sum_j softmax(gamma)_j N(e; mu_j, exp(log_sigma_j)^2)

Every underlying real parameter gets an independent Gaussian prior whose
mean and standard deviation live in :class:`DensitySpec`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import special

LOG_2PI = math.log(2.0 * math.pi)
GL = "gl"
MOG = "mog"


@dataclass(frozen=True)
class GlParams:
    alpha: float
    log_beta: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.log_beta)):
            raise ValueError("GL parameters must be finite")

    @property
    def beta(self) -> float:
        return math.exp(self.log_beta)

    def to_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.log_beta])

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "log_beta": self.log_beta}


@dataclass(frozen=True)
class MogParams:
    gamma: tuple[float, ...]
    mu: tuple[float, ...]
    log_sigma: tuple[float, ...]

    def __post_init__(self):
        for name in ("gamma", "mu", "log_sigma"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        k = len(self.gamma)
        if k < 1 or len(self.mu) != k or len(self.log_sigma) != k:
            raise ValueError("gamma, mu and log_sigma need the same length k >= 1")

    @property
    def k(self) -> int:
        return len(self.gamma)

    @property
    def weights(self) -> np.ndarray:
        return softmax(np.asarray(self.gamma))

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(np.asarray(self.log_sigma))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.gamma, self.mu, self.log_sigma])

    def to_json(self) -> dict:
        return {"gamma": list(self.gamma), "mu": list(self.mu), "log_sigma": list(self.log_sigma)}


@dataclass(frozen=True)
class DensitySpec:
    """Density family choice plus Gaussian hyperpriors ``(mean, sd)``."""

    family: str = GL
    mog_components: int = 2
    alpha_prior: tuple[float, float] = (0.0, 1.0)
    log_beta_prior: tuple[float, float] = (0.0, 1.0)
    gamma_prior: tuple[float, float] = (0.0, 1.0)
    mu_prior: tuple[float, float] = (0.0, 1.0)
    log_sigma_prior: tuple[float, float] = (0.0, 1.0)
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.family not in (GL, MOG):
            raise ValueError(f"unknown density family {self.family!r}; expected 'gl' or 'mog'")
        if self.family == MOG and self.mog_components < 1:
            raise ValueError("mog_components must be >= 1")
        for name in ("alpha_prior", "log_beta_prior", "gamma_prior", "mu_prior", "log_sigma_prior"):
            m, s = getattr(self, name)
            object.__setattr__(self, name, (float(m), float(s)))
            if not s > 0:
                raise ValueError(f"{name} standard deviation must be > 0")

    @property
    def n_params(self) -> int:
        return 2 if self.family == GL else 3 * self.mog_components

    def _hyper(self):
        if "hyper" not in self._cache:
            if self.family == GL:
                pairs = [self.alpha_prior, self.log_beta_prior]
            else:
                k = self.mog_components
                pairs = [self.gamma_prior] * k + [self.mu_prior] * k + [self.log_sigma_prior] * k
            arr = np.array(pairs, dtype=float)
            self._cache["hyper"] = (arr[:, 0].copy(), arr[:, 1].copy())
        return self._cache["hyper"]

    @property
    def prior_mean(self) -> np.ndarray:
        return self._hyper()[0]

    @property
    def prior_sd(self) -> np.ndarray:
        return self._hyper()[1]

    def unpack(self, vec) -> GlParams | MogParams:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} density parameters, got shape {vec.shape}")
        if self.family == GL:
            return GlParams(float(vec[0]), float(vec[1]))
        k = self.mog_components
        return MogParams(vec[:k], vec[k:2 * k], vec[2 * k:])

    def params_from_json(self, obj: dict) -> GlParams | MogParams:
        if self.family == GL:
            return GlParams(float(obj["alpha"]), float(obj["log_beta"]))
        return MogParams(obj["gamma"], obj["mu"], obj["log_sigma"])


# ---------------------------------------------------------------------------
# GL


def gl_log_z(params: GlParams) -> float:
    """Log normaliser of the GL density.

    Uses ``log Z = 0.5 log(pi / beta) + log erfcx(alpha / (2 sqrt(beta)))``,
    which stays finite where the textbook ``exp(a^2/4b)(1 - erf(.))`` form
    overflows or cancels.
    """
    u = params.alpha / (2.0 * math.sqrt(params.beta))
    return 0.5 * (math.log(math.pi) - params.log_beta) + special.log_erfcx(u)


def _abs(e, smooth):
    if smooth > 0.0:
        a = np.sqrt(e * e + smooth)
        return a, e / a
    return np.abs(e), np.sign(e)


def gl_logpdf(e, params: GlParams, smooth: float = 0.0):
    e = np.asarray(e, dtype=float)
    a, _ = _abs(e, smooth)
    out = -params.alpha * a - params.beta * e * e - gl_log_z(params)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# MoG


def softmax(gamma) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    w = np.exp(g - g.max())
    return w / w.sum()


def _mog_terms(e, params: MogParams):
    e = np.asarray(e, dtype=float)
    mu = np.asarray(params.mu)
    ls = np.asarray(params.log_sigma)
    sig = np.exp(ls)
    z = (e[..., None] - mu) / sig
    lc = np.log(params.weights) - ls - 0.5 * LOG_2PI - 0.5 * z * z
    cmax = lc.max(axis=-1, keepdims=True)
    lse = cmax[..., 0] + np.log(np.exp(lc - cmax).sum(axis=-1))
    return z, sig, lc, lse


def mog_logpdf(e, params: MogParams):
    lse = _mog_terms(e, params)[3]
    return float(lse) if lse.ndim == 0 else lse


# ---------------------------------------------------------------------------
# shared API


def logpdf(e, params, smooth: float = 0.0):
    if isinstance(params, GlParams):
        return gl_logpdf(e, params, smooth)
    return mog_logpdf(e, params)


def grad_logpdf(e, params, smooth: float = 0.0):
    """Gradient of the log-density with respect to ``e`` and the parameters.

    Returns ``(d_e, d_params)``. ``d_params`` has a trailing axis ordered as
    :meth:`GlParams.to_vector` / :meth:`MogParams.to_vector`. For GL at
    ``e == 0`` the subgradient 0 is used unless ``smooth > 0``.
    """
    e = np.asarray(e, dtype=float)
    if isinstance(params, GlParams):
        a, da = _abs(e, smooth)
        beta = params.beta
        u = params.alpha / (2.0 * math.sqrt(beta))
        g_u = special.dlog_erfcx(u)
        d_e = -params.alpha * da - 2.0 * beta * e
        d_alpha = -a - g_u / (2.0 * math.sqrt(beta))
        d_lb = -beta * e * e + 0.5 + 0.5 * g_u * u
        d_par = np.stack(np.broadcast_arrays(d_alpha, d_lb), axis=-1)
    else:
        z, sig, lc, lse = _mog_terms(e, params)
        resp = np.exp(lc - lse[..., None])
        d_e = -(resp * z / sig).sum(axis=-1)
        d_par = np.concatenate([resp - params.weights, resp * z / sig, resp * (z * z - 1.0)], axis=-1)
    if e.ndim == 0:
        return float(d_e), d_par
    return d_e, d_par


def log_prior(params, spec: DensitySpec) -> float:
    vec = params.to_vector()
    if vec.shape != (spec.n_params,):
        raise ValueError("parameters do not match the density spec")
    z = (vec - spec.prior_mean) / spec.prior_sd
    return float(np.sum(-0.5 * z * z - np.log(spec.prior_sd) - 0.5 * LOG_2PI))


def sample_prior(spec: DensitySpec, rng: np.random.Generator):
    return spec.unpack(rng.normal(spec.prior_mean, spec.prior_sd))


def init_params(residuals, spec: DensitySpec):
    """Moment-matched starting point for optimisation.

    GL starts at the Gaussian with the residual variance (alpha = 0). MoG
    starts with equal weights, means at evenly spaced quantiles and
    ``sigma = sd / k``.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size < 2 or not np.all(np.isfinite(r)):
        raise ValueError("need at least two finite residuals")
    var = r.var(ddof=1)
    if not var > 0:
        raise ValueError("residuals have zero variance (degenerate data)")
    if spec.family == GL:
        return GlParams(0.0, -math.log(2.0 * var))
    k = spec.mog_components
    mu = np.quantile(r, (np.arange(k) + 0.5) / k)
    return MogParams(np.zeros(k), mu, np.full(k, math.log(math.sqrt(var) / k)))
