"""Per-pixel inference of imaging conditions.

All estimators work on a batch of responses ``R`` of shape ``(P, n)`` and are
vectorised across pixels and restarts.  Single-pixel conveniences (``mle``,
``map_estimate``, ``bayes``) wrap the batch versions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special, stats

from . import model as M
from .model import SP, TP, NoiseParams, PriorBox
from .optimize import minimize_box, newton_box


class InferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class InferenceSettings:
    barrier: float = 1e-2
    support_barrier: float = 1e-6
    restarts_sp: int = 10
    restarts_tp: int = 15
    gtol: float = 1e-6
    maxiter: int = 200
    cluster_tol_t: float = 0.5
    cluster_tol: float = 1e-3
    ess_threshold: float = 100.0
    max_samples: int = 20000
    chunk: int = 64
    gamma_draws: int = 64
    hessian_ridge: float = 1e-6
    optimizer: str = "newton"

    def restarts(self, kind):
        return self.restarts_tp if kind == TP else self.restarts_sp

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return InferenceSettings(**d)


DEFAULT_SETTINGS = InferenceSettings()


@dataclass
class Estimates:
    """Batch of per-pixel estimates (natural coordinates)."""

    method: str
    kind: str
    theta: np.ndarray
    sigma_t: np.ndarray
    gamma: np.ndarray
    objective: np.ndarray
    n_converged: np.ndarray
    restarts: int
    ess: Optional[np.ndarray] = None
    n_samples: Optional[np.ndarray] = None
    k_modes: Optional[np.ndarray] = None
    flagged: Optional[np.ndarray] = None
    theta_std: Optional[np.ndarray] = None

    def __len__(self):
        return self.theta.shape[0]

    @property
    def t(self):
        return self.theta[:, 0]

    def row(self, i):
        diag = {"restarts": self.restarts, "converged": int(self.n_converged[i]),
                "objective": float(self.objective[i])}
        if self.ess is not None:
            diag.update(ess=float(self.ess[i]), n_samples=int(self.n_samples[i]),
                        k_modes=int(self.k_modes[i]), flagged=bool(self.flagged[i]))
        return Estimate(M.ImagingConditions.from_array(self.theta[i]), float(self.sigma_t[i]),
                        float(self.gamma[i]), self.method, diag)


@dataclass
class Estimate:
    theta: M.ImagingConditions
    sigma_t: float
    gamma: float
    method: str
    diagnostics: dict = field(default_factory=dict)


def ess(weights) -> float:
    """Effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    top = np.max(w) if w.size else 0.0
    if not top > 0:
        raise ValueError("all weights are zero")
    # rescale first so tiny weights do not underflow when squared
    w = w / top
    return float(np.sum(w) ** 2 / np.sum(w * w))


def _check_curves(curves, priors, kind):
    lo, hi = curves.valid_range
    t_hi = priors.t.hi + (priors.delta_t2 if kind == TP else 0.0)
    if priors.t.lo < lo or t_hi > hi:
        raise ValueError(f"curves valid on [{lo}, {hi}] but the {kind} prior needs "
                         f"[{priors.t.lo}, {t_hi}]")


def _barrier(u, lo, hi, b):
    a, c = u - lo, hi - u
    val = -b * np.sum(np.log(a) + np.log(c), axis=-1)
    g = -b * (1.0 / a - 1.0 / c)
    h = b * (1.0 / a**2 + 1.0 / c**2)
    return val, g, h


def make_objective(R, curves, noise, priors, kind, method, settings=DEFAULT_SETTINGS, order=1):
    """Objective ``fun(u, idx) -> (f, g[, H])`` in optimiser coordinates.

    ``method='mle'``: negative log-likelihood plus log-barrier.  ``method='map'``:
    negative log-posterior; a vanishing barrier keeps iterates inside the
    support of uniform factors.
    """
    R = np.atleast_2d(R)

    def fun(u, idx):
        return objective_derivs(R[idx], u, curves, noise, priors, kind, method, settings, order)

    return fun


def objective_derivs(R, u, curves, noise, priors, kind, method, settings=DEFAULT_SETTINGS,
                     order=2, include_barrier=True):
    """Value, gradient and (order 2) Hessian of the objective in optimiser coordinates."""
    R = np.atleast_2d(R)
    u = np.atleast_2d(u)
    lo, hi = priors.bounds(kind)
    Mj = M._opt_jacobian(kind)
    out = M.batch_nll(R, M.from_opt(u, kind), curves, noise, kind, order=order)
    f, g = out[0], out[1] @ Mj
    H = np.einsum("ji,bjk,kl->bil", Mj, out[2], Mj) if order >= 2 else None
    diag = np.zeros_like(u)
    if include_barrier:
        b = settings.barrier if method == "mle" else settings.support_barrier
        bv, bg, bh = _barrier(u, lo, hi, b)
        f, g, diag = f + bv, g + bg, diag + bh
    if method == "map":
        lp, lg, lh = priors.log_prior_derivs_opt(u, kind)
        f, g, diag = f - lp, g - lg, diag - lh
    if order < 2:
        return f, g
    return f, g, H + diag[:, :, None] * np.eye(u.shape[1])


def objective_hessian(R, u, curves, noise, priors, kind, method, settings=DEFAULT_SETTINGS,
                      include_barrier=True):
    return objective_derivs(R, u, curves, noise, priors, kind, method, settings, 2,
                            include_barrier)


@dataclass
class RestartRun:
    u: np.ndarray  # (P, r, d) optimiser coordinates
    f: np.ndarray  # (P, r)
    converged: np.ndarray  # (P, r)
    best: np.ndarray  # (P,) index of the selected restart


def _lexi_best(f, u, converged):
    """Index of the lowest objective; exact ties broken by lexicographic parameters."""
    P, r = f.shape
    fk = np.where(converged, f, np.inf)
    none = ~np.any(converged, axis=1)
    fk[none] = f[none]
    keys = [u[:, :, j] for j in range(u.shape[2] - 1, -1, -1)] + [fk]
    return np.lexsort(keys, axis=-1)[:, 0]


def run_restarts(R, curves, noise, priors, kind=SP, method="mle", restarts=None, rng=None,
                 settings=DEFAULT_SETTINGS, starts=None) -> RestartRun:
    """Optimise from uniformly drawn starting points for every pixel."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    _check_curves(curves, priors, kind)
    P = R.shape[0]
    d = M.ndim_of(kind)
    lo, hi = priors.bounds(kind)
    if starts is None:
        r = settings.restarts(kind) if restarts is None else int(restarts)
        rng = np.random.default_rng() if rng is None else rng
        # keep starts away from the barrier singularity
        z = rng.uniform(0.01, 0.99, size=(P, r, d))
        starts = lo + z * (hi - lo)
    starts = np.asarray(starts, dtype=float)
    r = starts.shape[1]
    newton = settings.optimizer == "newton"
    fun = make_objective(R, curves, noise, priors, kind, method, settings, 2 if newton else 1)
    rep = np.repeat(np.arange(P), r)

    def fun_flat(u, idx):
        return fun(u, rep[idx])

    solver = newton_box if newton else minimize_box
    res = solver(fun_flat, starts.reshape(P * r, d), lo, hi, gtol=settings.gtol,
                 maxiter=settings.maxiter)
    u = res.x.reshape(P, r, d)
    f = res.f.reshape(P, r)
    conv = res.converged.reshape(P, r)
    return RestartRun(u, f, conv, _lexi_best(f, u, conv))


# -- uncertainty -----------------------------------------------------------------

def batch_mle_uncertainty(R, theta, curves, noise, priors, kind=SP, settings=DEFAULT_SETTINGS,
                          method="mle"):
    """Linearised (sandwich) standard deviation of the depth estimate.

    ``dtheta/dR = -H^-1 d(grad)/dR`` at the optimum; the response covariance
    ``diag(alpha mu + K)`` is pushed through this map.
    """
    R = np.atleast_2d(R)
    theta = np.atleast_2d(theta)
    u = M.to_opt(theta, kind)
    Mj = M._opt_jacobian(kind)
    _, _, H = objective_hessian(R, u, curves, noise, priors, kind, method, settings)
    S, v = M.batch_score_jacobian_R(R, theta, curves, noise, kind)
    S = np.einsum("ji,bjn->bin", Mj, S)
    sigma = np.full(R.shape[0], np.inf)
    cond = np.linalg.cond(H)
    ok = np.isfinite(cond) & (cond < 1e14)
    if np.any(ok):
        Jac = -np.linalg.solve(H[ok], S[ok])
        cov_t = np.einsum("bn,bn,bn->b", Jac[:, 0, :], Jac[:, 0, :], v[ok])
        sigma[ok] = np.sqrt(np.maximum(cov_t, 0.0))
    return sigma


def mle_uncertainty(R, theta_hat, curves, noise, priors=None, settings=DEFAULT_SETTINGS):
    if isinstance(theta_hat, M.ImagingConditions):
        kind, vec = theta_hat.kind, theta_hat.as_array()
    else:
        vec = np.asarray(theta_hat, dtype=float)
        kind = SP if vec.size == 3 else TP
    priors = PriorBox() if priors is None else priors
    return float(batch_mle_uncertainty(np.asarray(R)[None], vec[None], curves, noise, priors,
                                       kind, settings)[0])


# -- invalidation score ------------------------------------------------------------

def quadratic_form(R, theta, curves, noise, kind):
    mu = M.batch_mean(curves, theta, kind)
    v = M._variance(mu, noise)
    res = np.atleast_2d(R) - mu
    return np.sum(res * res / v, axis=-1)


def gamma_from_quadratic(q, n, draws=None, rng=None):
    """``P(Q' >= q)`` for ``Q'`` chi-square with ``n`` dof.

    ``draws=None`` gives the exact tail; otherwise a Monte Carlo estimate with
    ``draws`` fresh responses per entry of ``q``.
    """
    q = np.asarray(q, dtype=float)
    if draws is None:
        return stats.chi2.sf(q, n)
    rng = np.random.default_rng() if rng is None else rng
    sims = rng.chisquare(n, size=q.shape + (draws,))
    return np.mean(sims >= q[..., None], axis=-1)


def gaussian_gamma(R, mean, var, weights=None, draws=None, rng=None):
    """Invalidation score of ``R`` under a mixture of diagonal Gaussians.

    ``mean`` and ``var`` have shape ``(m, n)`` (one row per parameter sample)
    and ``weights`` are the (unnormalised) posterior weights of the rows.
    """
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    var = np.broadcast_to(np.asarray(var, dtype=float), mean.shape)
    R = np.asarray(R, dtype=float)
    q = np.sum((R - mean) ** 2 / var, axis=-1)
    inner = gamma_from_quadratic(q, mean.shape[1], draws, rng)
    w = np.ones(len(q)) if weights is None else np.asarray(weights, dtype=float)
    return float(np.sum(w * inner) / np.sum(w))


def gamma_score(R, thetas, curves, noise, kind=SP, weights=None, draws=None, rng=None):
    """Posterior predictive invalidation score for one response.

    ``thetas`` is a set of posterior samples (with ``weights``) or a single
    point estimate, in which case the outer expectation is a point mass.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    q = quadratic_form(np.asarray(R)[None, :], thetas, curves, noise, kind)
    inner = gamma_from_quadratic(q, curves.n, draws, rng)
    w = np.ones(len(q)) if weights is None else np.asarray(weights, dtype=float)
    return float(np.clip(np.sum(w * inner) / np.sum(w), 0.0, 1.0))


# -- point estimators ------------------------------------------------------------------

def batch_point(R, curves, noise, priors, kind=SP, method="mle", rng=None, restarts=None,
                settings=DEFAULT_SETTINGS, with_uncertainty=True) -> Estimates:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    run = run_restarts(R, curves, noise, priors, kind, method, restarts, rng, settings)
    P = R.shape[0]
    ub = run.u[np.arange(P), run.best]
    theta = M.from_opt(ub, kind)
    nconv = run.converged.sum(axis=1)
    if np.any(nconv == 0):
        bad = np.flatnonzero(nconv == 0)
        if P == 1:
            raise InferenceError("no restart converged")
    if with_uncertainty:
        sigma = batch_mle_uncertainty(R, theta, curves, noise, priors, kind, settings, method)
    else:
        sigma = np.full(P, np.nan)
    q = quadratic_form(R, theta, curves, noise, kind)
    gamma = gamma_from_quadratic(q, curves.n)
    return Estimates(method, kind, theta, sigma, gamma, run.f[np.arange(P), run.best], nconv,
                     run.u.shape[1])


def batch_mle(R, curves, noise, priors, kind=SP, rng=None, restarts=None,
              settings=DEFAULT_SETTINGS, with_uncertainty=True) -> Estimates:
    return batch_point(R, curves, noise, priors, kind, "mle", rng, restarts, settings,
                       with_uncertainty)


def batch_map(R, curves, noise, priors, kind=SP, rng=None, restarts=None,
              settings=DEFAULT_SETTINGS, with_uncertainty=True) -> Estimates:
    return batch_point(R, curves, noise, priors, kind, "map", rng, restarts, settings,
                       with_uncertainty)


def mle(R, curves, noise, priors, kind=SP, rng=None, settings=DEFAULT_SETTINGS) -> Estimate:
    return batch_mle(np.asarray(R)[None], curves, noise, priors, kind, rng,
                     settings=settings).row(0)


def map_estimate(R, curves, noise, priors, kind=SP, rng=None, settings=DEFAULT_SETTINGS) -> Estimate:
    return batch_map(np.asarray(R)[None], curves, noise, priors, kind, rng,
                     settings=settings).row(0)


# -- Bayesian posterior by importance sampling --------------------------------------------

@dataclass
class ProposalMixture:
    """Gaussian mixture proposal per pixel (optimiser coordinates), padded to ``k_max``."""

    means: np.ndarray  # (P, k, d)
    chol: np.ndarray  # (P, k, d, d)
    logdet: np.ndarray  # (P, k)
    logw: np.ndarray  # (P, k), -inf for padding
    k: np.ndarray  # (P,)

    def logpdf(self, x, pix):
        """Log density of points ``x`` (m, d) under the mixtures of pixels ``pix``."""
        mu = self.means[pix]
        L = self.chol[pix]
        diff = x[:, None, :] - mu
        sol = np.linalg.solve(L, diff[..., None])[..., 0]
        d = x.shape[1]
        comp = -0.5 * np.sum(sol * sol, axis=-1) - 0.5 * self.logdet[pix] - 0.5 * d * M.LOG_2PI
        return special.logsumexp(comp + self.logw[pix], axis=1)

    def sample(self, pix, rng):
        lw = self.logw[pix]
        prob = np.exp(lw - special.logsumexp(lw, axis=1, keepdims=True))
        cdf = np.cumsum(prob, axis=1)
        comp = np.minimum((rng.uniform(size=(len(pix), 1)) > cdf).sum(axis=1), self.k[pix] - 1)
        eps = rng.standard_normal((len(pix), self.means.shape[2]))
        L = self.chol[pix, comp]
        return self.means[pix, comp] + np.einsum("bij,bj->bi", L, eps)


def _cluster(u, f, conv, tol):
    """Greedy clustering of restart optima; returns representative indices."""
    idx = np.flatnonzero(conv)
    if idx.size == 0:
        idx = np.arange(len(f))
    idx = idx[np.argsort(f[idx], kind="stable")]
    reps = []
    taken = np.zeros(len(f), dtype=bool)
    for i in idx:
        if taken[i]:
            continue
        reps.append(i)
        close = np.all(np.abs(u[idx] - u[i]) < tol, axis=1)
        taken[idx[close]] = True
    return reps


def build_proposal(R, run: RestartRun, curves, noise, priors, kind, settings=DEFAULT_SETTINGS):
    P, r, d = run.u.shape
    lo, hi = priors.bounds(kind)
    span = hi - lo
    tol = np.full(d, settings.cluster_tol)
    tol[0] = settings.cluster_tol_t
    if kind == TP:
        tol[3] = settings.cluster_tol_t
    reps = [_cluster(run.u[p], run.f[p], run.converged[p], tol) for p in range(P)]
    kmax = max(len(x) for x in reps)
    means = np.zeros((P, kmax, d))
    k = np.array([len(x) for x in reps])
    pix_of, slot_of = [], []
    for p, rr in enumerate(reps):
        for s, i in enumerate(rr):
            means[p, s] = run.u[p, i]
            pix_of.append(p)
            slot_of.append(s)
    pix_of = np.array(pix_of)
    slot_of = np.array(slot_of)
    centers = means[pix_of, slot_of]
    # Laplace covariance from the negative log-posterior (no support barrier)
    f, _, H = objective_hessian(R[pix_of], centers, curves, noise, priors, kind, "map", settings,
                                include_barrier=False)
    logpost = -f - 0.5 * curves.n * M.LOG_2PI
    Hz = H * span[None, :, None] * span[None, None, :]
    Hz = 0.5 * (Hz + np.swapaxes(Hz, 1, 2))
    evals, evecs = np.linalg.eigh(Hz)
    tr = np.maximum(np.sum(np.abs(evals), axis=1, keepdims=True) / d, 1e-300)
    floor = np.maximum(settings.hessian_ridge * tr, 16.0)  # caps proposal std at 1/4 box
    evals = np.maximum(evals, floor)
    cov_z = np.einsum("bij,bj,bkj->bik", evecs, 1.0 / evals, evecs)
    cov = cov_z * span[None, :, None] * span[None, None, :]
    chol = np.zeros((P, kmax, d, d))
    chol[:] = np.eye(d)
    chol[pix_of, slot_of] = np.linalg.cholesky(cov)
    logdet = np.zeros((P, kmax))
    logdet[pix_of, slot_of] = 2.0 * np.sum(np.log(np.diagonal(np.linalg.cholesky(cov), axis1=1,
                                                                  axis2=2)), axis=1)
    logw = np.full((P, kmax), -np.inf)
    logw[pix_of, slot_of] = logpost
    logw -= special.logsumexp(logw, axis=1, keepdims=True)
    return ProposalMixture(means, chol, logdet, logw, k)


def batch_bayes(R, curves, noise, priors, kind=SP, rng=None, settings=DEFAULT_SETTINGS,
                run: RestartRun | None = None) -> Estimates:
    """Posterior means, depth std and invalidation score by importance sampling.

    The proposal is a Gaussian mixture at the distinct local MAP optima with
    Laplace covariances.  Sampling continues per pixel until the effective
    sample size reaches ``settings.ess_threshold`` or ``settings.max_samples``
    draws were made (then ``flagged``).
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    rng = np.random.default_rng() if rng is None else rng
    if run is None:
        run = run_restarts(R, curves, noise, priors, kind, "map", None, rng, settings)
    P, _, d = run.u.shape
    prop = build_proposal(R, run, curves, noise, priors, kind, settings)
    lo, hi = priors.bounds(kind)
    n = curves.n

    scale = np.full(P, -np.inf)  # running log-weight reference
    sw = np.zeros(P)
    sw2 = np.zeros(P)
    s1 = np.zeros((P, d))
    s2 = np.zeros((P, d))
    sg = np.zeros(P)
    count = np.zeros(P, dtype=int)
    active = np.ones(P, dtype=bool)
    c = settings.chunk
    while np.any(active):
        pix = np.repeat(np.flatnonzero(active), c)
        x = prop.sample(pix, rng)
        inside = np.all((x > lo) & (x < hi), axis=1)
        logw = np.full(len(pix), -np.inf)
        gin = np.zeros(len(pix))
        xi, pi = x[inside], pix[inside]
        if xi.size:
            theta = M.from_opt(xi, kind)
            mu = M.batch_mean(curves, theta, kind)
            lt = M.batch_loglik_from_mean(R[pi], mu, noise) + priors.log_prior_opt(xi, kind)
            logw[inside] = lt - prop.logpdf(xi, pi)
            v = M._variance(mu, noise)
            q = np.sum((R[pi] - mu) ** 2 / v, axis=1)
            gin[inside] = gamma_from_quadratic(q, n, settings.gamma_draws, rng)
        # streaming log-sum-exp accumulation per pixel
        lw = logw.reshape(-1, c)
        act = np.flatnonzero(active)
        cmax = np.max(lw, axis=1)
        new_scale = np.maximum(scale[act], cmax)
        finite = np.isfinite(new_scale)
        shift = np.where(finite & np.isfinite(scale[act]), np.exp(scale[act] - new_scale), 0.0)
        w = np.where(finite[:, None], np.exp(lw - np.where(finite, new_scale, 0.0)[:, None]), 0.0)
        xs = x.reshape(-1, c, d)
        # report t2 rather than the offset
        xs_nat = M.from_opt(xs, kind)
        sw[act] = sw[act] * shift + w.sum(axis=1)
        sw2[act] = sw2[act] * shift**2 + (w * w).sum(axis=1)
        s1[act] = s1[act] * shift[:, None] + np.einsum("bc,bcd->bd", w, xs_nat)
        s2[act] = s2[act] * shift[:, None] + np.einsum("bc,bcd->bd", w, xs_nat**2)
        sg[act] = sg[act] * shift + np.sum(w * gin.reshape(-1, c), axis=1)
        scale[act] = np.where(finite, new_scale, scale[act])
        count[act] += c
        with np.errstate(invalid="ignore", divide="ignore"):
            cur_ess = np.where(sw2[act] > 0, sw[act] ** 2 / sw2[act], 0.0)
        done = (cur_ess >= settings.ess_threshold) | (count[act] >= settings.max_samples)
        active[act[done]] = False

    with np.errstate(invalid="ignore", divide="ignore"):
        ess_v = np.where(sw2 > 0, sw**2 / sw2, 0.0)
        mean = s1 / sw[:, None]
        var = np.maximum(s2 / sw[:, None] - mean**2, 0.0)
        gamma = np.clip(sg / sw, 0.0, 1.0)
    empty = sw == 0
    if np.any(empty):
        # no admissible sample: fall back to the best MAP optimum
        best = M.from_opt(run.u[np.arange(P), run.best], kind)
        mean[empty] = best[empty]
        var[empty] = np.nan
        gamma[empty] = 0.0
    flagged = ess_v < settings.ess_threshold
    return Estimates("bayes", kind, mean, np.sqrt(var[:, 0]), gamma,
                     run.f[np.arange(P), run.best], run.converged.sum(axis=1), run.u.shape[1],
                     ess=ess_v, n_samples=count, k_modes=prop.k, flagged=flagged,
                     theta_std=np.sqrt(var))


def importance_moments(log_target, mean, cov, rng, ess_threshold=100.0, chunk=64,
                       max_samples=100000):
    """Self-normalised importance estimate of a target's mean and covariance.

    Single-Gaussian proposal ``N(mean, cov)``; draws continue in chunks until
    the effective sample size reaches ``ess_threshold``.  Returns
    ``(mean, cov, ess, count)``.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    L = np.linalg.cholesky(cov)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    d = mean.size
    xs, lws = [], []
    count, e = 0, 0.0
    while count < max_samples:
        z = rng.standard_normal((chunk, d))
        x = mean + z @ L.T
        logq = -0.5 * np.sum(z * z, axis=1) - 0.5 * logdet - 0.5 * d * M.LOG_2PI
        xs.append(x)
        lws.append(log_target(x) - logq)
        count += chunk
        lw = np.concatenate(lws)
        w = np.exp(lw - lw.max())
        e = w.sum() ** 2 / np.sum(w * w)
        if e >= ess_threshold:
            break
    x = np.concatenate(xs)
    w = w / w.sum()
    m = w @ x
    diff = x - m
    return m, (w[:, None] * diff).T @ diff, e, count


def bayes(R, curves, noise, priors, kind=SP, rng=None, settings=DEFAULT_SETTINGS) -> Estimate:
    return batch_bayes(np.asarray(R)[None], curves, noise, priors, kind, rng, settings).row(0)


def batch_infer(R, curves, noise, priors, kind=SP, method="mle", rng=None,
                settings=DEFAULT_SETTINGS) -> Estimates:
    if method == "mle":
        return batch_mle(R, curves, noise, priors, kind, rng, settings=settings)
    if method == "map":
        return batch_map(R, curves, noise, priors, kind, rng, settings=settings)
    if method == "bayes":
        return batch_bayes(R, curves, noise, priors, kind, rng, settings)
    raise ValueError(f"unknown inference method {method!r}")
