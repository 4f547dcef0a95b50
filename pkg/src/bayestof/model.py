"""Single-path and two-path generative models of per-pixel responses.

Parameter vectors are ordered ``(t, rho, lam)`` for the single-path model and
``(t, rho, lam, t2, rho2)`` for the two-path model.  Functions whose name starts
with ``batch_`` take arrays with a leading batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .curves import ResponseCurveSet

SP, TP = "sp", "tp"
PARAM_NAMES = {SP: ("t", "rho", "lam"), TP: ("t", "rho", "lam", "t2", "rho2")}
LOG_2PI = np.log(2.0 * np.pi)


def ndim_of(kind):
    try:
        return len(PARAM_NAMES[kind])
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}") from None


@dataclass(frozen=True)
class ImagingConditions:
    t: float
    rho: float
    lam: float
    t2: Optional[float] = None
    rho2: Optional[float] = None

    @property
    def kind(self):
        return SP if self.t2 is None else TP

    def as_array(self):
        if self.t2 is None:
            return np.array([self.t, self.rho, self.lam])
        return np.array([self.t, self.rho, self.lam, self.t2, self.rho2])

    @classmethod
    def from_array(cls, theta):
        theta = [float(v) for v in theta]
        if len(theta) == 3:
            return cls(*theta)
        if len(theta) == 5:
            return cls(*theta)
        raise ValueError("parameter vector must have length 3 or 5")


@dataclass(frozen=True)
class NoiseParams:
    """Per-channel variance ``alpha * mu + K``."""

    alpha: float = 1.0
    K: float = 50.0

    def __post_init__(self):
        if self.alpha < 0 or not self.K > 0:
            raise ValueError("noise requires alpha >= 0 and K > 0")

    def scaled(self, factor):
        return NoiseParams(self.alpha * factor, self.K * factor)


@dataclass(frozen=True)
class ParamPrior:
    """Univariate prior on ``[lo, hi]``.

    kind ``uniform``; ``normal`` (truncated, params = (mean, sd));
    ``beta`` (on the rescaled unit interval, params = (a, b)).
    """

    lo: float
    hi: float
    kind: str = "uniform"
    params: tuple = ()

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty prior range [{self.lo}, {self.hi}]")
        if self.kind not in ("uniform", "normal", "beta"):
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @property
    def span(self):
        return self.hi - self.lo

    def _lognorm(self):
        if self.kind == "uniform":
            return -np.log(self.span)
        if self.kind == "normal":
            m, s = self.params
            mass = stats.norm.cdf(self.hi, m, s) - stats.norm.cdf(self.lo, m, s)
            return -np.log(s) - 0.5 * LOG_2PI - np.log(mass)
        a, b = self.params
        return -special.betaln(a, b) - np.log(self.span)

    def logpdf(self, x):
        """Log density; ``-inf`` outside the support."""
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        out = np.full(x.shape, -np.inf)
        xi = x[inside]
        out[inside] = self._logkernel(xi)[0] + self._lognorm()
        return out

    def _logkernel(self, x):
        """Unnormalised log density and its first two derivatives."""
        if self.kind == "uniform":
            z = np.zeros_like(x)
            return z, z, z
        if self.kind == "normal":
            m, s = self.params
            r = (x - m) / s
            return -0.5 * r * r, -r / s, np.full_like(x, -1.0 / s**2)
        a, b = self.params
        u = (x - self.lo) / self.span
        with np.errstate(divide="ignore", invalid="ignore"):
            la = (a - 1) * np.log(u) if a != 1 else np.zeros_like(u)
            lb = (b - 1) * np.log1p(-u) if b != 1 else np.zeros_like(u)
            d1 = ((a - 1) / u if a != 1 else 0.0) - ((b - 1) / (1 - u) if b != 1 else 0.0)
            d2 = (-(a - 1) / u**2 if a != 1 else 0.0) - ((b - 1) / (1 - u) ** 2 if b != 1 else 0.0)
        return la + lb, d1 / self.span + np.zeros_like(u), d2 / self.span**2 + np.zeros_like(u)

    def logpdf_derivs(self, x):
        """``(log p, d/dx log p, d2/dx2 log p)`` for x inside the support."""
        x = np.asarray(x, dtype=float)
        v, d1, d2 = self._logkernel(x)
        return v + self._lognorm(), d1, d2

    def sample(self, rng, size):
        if self.kind == "uniform":
            return rng.uniform(self.lo, self.hi, size)
        if self.kind == "normal":
            m, s = self.params
            a, b = (self.lo - m) / s, (self.hi - m) / s
            return stats.truncnorm.rvs(a, b, loc=m, scale=s, size=size, random_state=rng)
        a, b = self.params
        return self.lo + self.span * rng.beta(a, b, size)

    def mean(self):
        if self.kind == "uniform":
            return 0.5 * (self.lo + self.hi)
        if self.kind == "normal":
            m, s = self.params
            return stats.truncnorm.mean((self.lo - m) / s, (self.hi - m) / s, loc=m, scale=s)
        a, b = self.params
        return self.lo + self.span * a / (a + b)


@dataclass(frozen=True)
class PriorBox:
    """Independent priors on ``t, rho, lam``; two-path extras ``t2 - t`` and ``rho2``.

    ``t2 - t`` is uniform on ``[0, delta_t2]`` and ``rho2 / 2`` is Beta(a, b).
    """

    t: ParamPrior = ParamPrior(50.0, 500.0)
    rho: ParamPrior = ParamPrior(0.1, 1.5)
    lam: ParamPrior = ParamPrior(0.0, 1.0)
    delta_t2: float = 150.0
    rho2_beta: tuple = (1.0, 5.0)

    @classmethod
    def from_ranges(cls, t_range=(50.0, 500.0), rho_range=(0.1, 1.5), lambda_range=(0.0, 1.0),
                    delta_t2=150.0, rho2_beta=(1.0, 5.0)):
        return cls(ParamPrior(*t_range), ParamPrior(*rho_range), ParamPrior(*lambda_range),
                   float(delta_t2), tuple(float(v) for v in rho2_beta))

    def __post_init__(self):
        if not self.delta_t2 > 0:
            raise ValueError("delta_t2 must be positive")

    @property
    def offset(self):
        return ParamPrior(0.0, self.delta_t2)

    @property
    def rho2(self):
        return ParamPrior(0.0, 2.0, "beta", self.rho2_beta)

    def factors(self, kind):
        """Per-coordinate priors in optimiser coordinates (``t2`` replaced by ``t2 - t``)."""
        f = [self.t, self.rho, self.lam]
        if kind == TP:
            f += [self.offset, self.rho2]
        return f

    def bounds(self, kind):
        f = self.factors(kind)
        return np.array([p.lo for p in f]), np.array([p.hi for p in f])

    def sample(self, rng, size=None, kind=SP):
        """Draw parameter vectors (natural coordinates), shape ``(size, d)``."""
        shape = () if size is None else (size,)
        m = 1 if size is None else size
        cols = [p.sample(rng, m) for p in self.factors(kind)]
        theta = np.stack(cols, axis=-1)
        if kind == TP:
            theta[:, 3] += theta[:, 0]
        return theta.reshape(shape + (theta.shape[-1],))

    def log_prior(self, theta, kind):
        """Log prior density of natural-coordinate parameters (batch)."""
        return self.log_prior_opt(to_opt(theta, kind), kind)

    def log_prior_opt(self, u, kind):
        u = np.asarray(u, dtype=float)
        total = np.zeros(u.shape[:-1])
        for j, p in enumerate(self.factors(kind)):
            total = total + p.logpdf(u[..., j])
        return total

    def log_prior_derivs_opt(self, u, kind):
        """Value, gradient and (diagonal) Hessian of the log prior; u inside the box."""
        u = np.asarray(u, dtype=float)
        val = np.zeros(u.shape[:-1])
        g = np.zeros_like(u)
        h = np.zeros_like(u)
        for j, p in enumerate(self.factors(kind)):
            v, d1, d2 = p.logpdf_derivs(u[..., j])
            val = val + v
            g[..., j] = d1
            h[..., j] = d2
        return val, g, h

    def variance_t(self):
        p = self.t
        if p.kind == "uniform":
            return p.span**2 / 12.0
        xs = p.sample(np.random.default_rng(0), 200000)
        return float(np.var(xs))


# -- coordinate changes (two-path offsets) ------------------------------------

def to_opt(theta, kind):
    """Natural ``(.., t2, ..)`` -> optimiser ``(.., t2 - t, ..)`` coordinates."""
    theta = np.array(theta, dtype=float)
    if kind == TP:
        theta[..., 3] -= theta[..., 0]
    return theta


def from_opt(u, kind):
    u = np.array(u, dtype=float)
    if kind == TP:
        u[..., 3] += u[..., 0]
    return u


def _opt_jacobian(kind):
    """Matrix M with ``theta_nat = M @ u``."""
    d = ndim_of(kind)
    M = np.eye(d)
    if kind == TP:
        M[3, 0] = 1.0
    return M


# -- mean response -------------------------------------------------------------

def batch_mean(curves: ResponseCurveSet, theta, kind=SP):
    """Mean responses for natural-coordinate parameters, shape ``(B, n)``."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    t, rho, lam = theta[:, 0], theta[:, 1], theta[:, 2]
    mu = curves(t) + lam[:, None] * curves.ambient
    if kind == TP:
        mu = mu + theta[:, 4, None] * curves(theta[:, 3])
    return rho[:, None] * mu


def batch_mean_derivs(curves: ResponseCurveSet, theta, kind=SP, hessian=False):
    """Mean, Jacobian ``(B, n, d)`` and optionally Hessian ``(B, n, d, d)``.

    Derivatives are taken in natural coordinates.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    B = theta.shape[0]
    d = ndim_of(kind)
    t, rho, lam = theta[:, 0], theta[:, 1], theta[:, 2]
    C, C1, C2 = curves.derivatives(t)
    A = curves.ambient[None, :]
    r = rho[:, None]
    inner = C + lam[:, None] * A
    if kind == TP:
        t2, rho2 = theta[:, 3], theta[:, 4]
        D, D1, D2 = curves.derivatives(t2)
        q = rho2[:, None]
        inner = inner + q * D
    n = curves.n
    J = np.empty((B, n, d))
    J[:, :, 0] = r * C1
    J[:, :, 1] = inner
    J[:, :, 2] = r * A
    if kind == TP:
        J[:, :, 3] = r * q * D1
        J[:, :, 4] = r * D
    mu = r * inner
    if not hessian:
        return mu, J
    H = np.zeros((B, n, d, d))
    H[:, :, 0, 0] = r * C2
    H[:, :, 0, 1] = H[:, :, 1, 0] = C1
    H[:, :, 1, 2] = H[:, :, 2, 1] = A
    if kind == TP:
        H[:, :, 3, 3] = r * q * D2
        H[:, :, 1, 3] = H[:, :, 3, 1] = q * D1
        H[:, :, 1, 4] = H[:, :, 4, 1] = D
        H[:, :, 3, 4] = H[:, :, 4, 3] = r * D1
    return mu, J, H


def mean_response(curves: ResponseCurveSet, theta) -> np.ndarray:
    """Expected response for one set of imaging conditions."""
    if isinstance(theta, ImagingConditions):
        kind, vec = theta.kind, theta.as_array()
    else:
        vec = np.asarray(theta, dtype=float)
        kind = SP if vec.size == 3 else TP
    return batch_mean(curves, vec[None, :], kind)[0]


# -- noise -----------------------------------------------------------------------

def noise_cov_diag(mu, noise: NoiseParams) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("mean response must be non-negative")
    return noise.alpha * mu + noise.K


def _variance(mu, noise):
    # Chebyshev ripple can leave mu marginally negative where a curve is ~0;
    # the shot-noise term is switched off there
    return noise.alpha * np.maximum(mu, 0.0) + noise.K


def _shot_slope(mu, noise):
    return noise.alpha * (mu > 0)


def batch_sample(curves, theta, noise: NoiseParams, rng, kind=SP):
    mu = batch_mean(curves, theta, kind)
    return mu + np.sqrt(np.maximum(_variance(mu, noise), 0.0)) * rng.standard_normal(mu.shape)


def sample_response(curves, theta, noise: NoiseParams, rng) -> np.ndarray:
    """One noisy response vector (Gaussian, unclipped)."""
    mu = mean_response(curves, theta)
    return mu + np.sqrt(noise_cov_diag(mu, noise)) * rng.standard_normal(mu.shape)


# -- likelihood -----------------------------------------------------------------

def batch_loglik_from_mean(R, mu, noise):
    v = _variance(mu, noise)
    res = R - mu
    return -0.5 * np.sum(res * res / v + np.log(v) + LOG_2PI, axis=-1)


def batch_nll(R, theta, curves, noise, kind=SP, order=1):
    """Negative log-likelihood (without the 2 pi constant) and derivatives.

    Returns ``f`` and, for ``order >= 1``, the gradient ``(B, d)``; for
    ``order >= 2`` also the Hessian ``(B, d, d)``.  Natural coordinates.
    """
    R = np.atleast_2d(R)
    if order >= 2:
        mu, J, Hmu = batch_mean_derivs(curves, theta, kind, hessian=True)
    elif order == 1:
        mu, J = batch_mean_derivs(curves, theta, kind)
    else:
        mu = batch_mean(curves, theta, kind)
    a = _shot_slope(mu, noise)
    v = _variance(mu, noise)
    res = R - mu
    f = np.sum(0.5 * res * res / v + 0.5 * np.log(v), axis=-1)
    if order == 0:
        return f
    # derivative of each channel term with respect to its mean
    phi1 = -res / v - 0.5 * a * res * res / v**2 + 0.5 * a / v
    g = np.einsum("bn,bnd->bd", phi1, J)
    if order == 1:
        return f, g
    phi2 = 1.0 / v + 2.0 * a * res / v**2 + a * a * res * res / v**3 - 0.5 * a * a / v**2
    H = np.einsum("bn,bnd,bne->bde", phi2, J, J) + np.einsum("bn,bnde->bde", phi1, Hmu)
    return f, g, H


def batch_score_jacobian_R(R, theta, curves, noise, kind=SP):
    """Mixed derivative ``d/dR (d nll / d theta)``, shape ``(B, d, n)``."""
    mu, J = batch_mean_derivs(curves, theta, kind)
    v = _variance(mu, noise)
    res = np.atleast_2d(R) - mu
    w = -1.0 / v - _shot_slope(mu, noise) * res / v**2
    return np.einsum("bn,bnd->bdn", w, J), v


def log_likelihood(R, theta, curves, noise):
    """Log-likelihood ``log P(R | theta)`` and its gradient over theta.

    The ``-(n/2) log(2 pi)`` constant is omitted.
    """
    if isinstance(theta, ImagingConditions):
        kind, vec = theta.kind, theta.as_array()
    else:
        vec = np.asarray(theta, dtype=float)
        kind = SP if vec.size == 3 else TP
    f, g = batch_nll(np.asarray(R, dtype=float)[None, :], vec[None, :], curves, noise, kind)
    return -float(f[0]), -g[0]


def sample_prior(priors: PriorBox, rng, model_kind=SP) -> ImagingConditions:
    return ImagingConditions.from_array(priors.sample(rng, None, model_kind))
