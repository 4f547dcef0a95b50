"""Exposure-profile design by simulated annealing over integer design matrices.

A design ``Z`` (m catalog elements x n channels) counts how many pulses each
boxcar element contributes to each channel.  The chain runs on an augmented
state ``(B, V)`` with binary ``B`` and real ``V`` in ``(0, V_max]``; the loss is
evaluated on ``Z = round(B * V)``.  The target density over the augmented
state is ``exp(-f(Z) / T)`` times Lebesgue measure on ``V`` restricted to
feasible ``Z``, and every kernel carries the matching Hastings factor.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from . import model as M
from .curves import BasisSet, compose_curves
from .tofsim import forward_responses

KERNELS = ("move", "swap", "zero", "nonzero", "perturb", "scale")
KERNEL_PROBS = (0.2, 0.2, 0.1, 0.1, 0.3, 0.1)
PERTURB_SIGMA = 0.3
SCALE_SIGMA = 0.1


@dataclass
class DesignMatrix:
    Z: np.ndarray
    K_shutter: int
    K_sparsity: int

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.int64)

    @property
    def shape(self):
        return self.Z.shape

    def violations(self):
        out = []
        if np.any(self.Z < 0):
            out.append("negative entry")
        if self.Z.sum() > self.K_shutter:
            out.append("pulse budget exceeded")
        if np.any((self.Z > 0).sum(axis=0) > self.K_sparsity):
            out.append("column sparsity exceeded")
        return out

    @property
    def feasible(self):
        return not self.violations()


def is_feasible(Z, K_shutter, K_sparsity):
    return bool(np.all(Z >= 0) and Z.sum() <= K_shutter
                and np.all((Z > 0).sum(axis=0) <= K_sparsity))


@dataclass(frozen=True)
class AnnealSchedule:
    T_start: float = 20.0
    T_final: float = 0.01
    iterations: int = 400

    def __post_init__(self):
        if not self.T_start > self.T_final > 0:
            raise ValueError("need T_start > T_final > 0")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")

    @property
    def beta(self):
        return np.exp((np.log(self.T_final) - np.log(self.T_start)) / self.iterations)

    def temperature(self, k):
        # weighted geometric mean: x**0 == 1 and x**1 == x, so both endpoints are exact
        s = np.asarray(k, dtype=float) / self.iterations
        return self.T_start ** (1.0 - s) * self.T_final ** s


@dataclass(frozen=True)
class LossSpec:
    kind: str = "squared"  # or "relative"
    estimator: str = "mle"  # mle | map | bayes | tree
    K_mc: int = 8192
    restarts: int = 3
    maxiter: int = 50
    tree_depth: int = 8

    def __post_init__(self):
        if self.K_mc < 1:
            raise ValueError("K_mc must be >= 1")
        if self.kind not in ("squared", "relative"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.estimator not in ("mle", "map", "bayes", "tree"):
            raise ValueError(f"unknown estimator {self.estimator!r}")

    def loss(self, t_hat, t):
        sq = (t_hat - t) ** 2
        return sq / t if self.kind == "relative" else sq


# -- loss estimation -------------------------------------------------------------------

def _estimate_t(R, curves, noise, priors, spec: LossSpec, rng, settings):
    # unconverged restarts still yield the best point found; only non-finite
    # outputs count as failures, so a design cannot hide hard pixels
    st = settings.replace(restarts_sp=spec.restarts, maxiter=spec.maxiter)
    if spec.estimator == "tree":
        from . import regress
        data = regress.generate_training_set(curves, noise, priors, R.shape[0], rng, "mle", st)
        tree = regress.train_tree(data, spec.tree_depth, "quadratic", "t")
        t_hat = tree.predict(R)
    else:
        t_hat = inf.batch_infer(R, curves, noise, priors, M.SP, spec.estimator, rng, st).theta[:, 0]
    return t_hat, ~np.isfinite(t_hat)


def _model_draws(priors, n_ch, count, rng):
    theta = priors.sample(rng, count, M.SP)
    eps = rng.standard_normal((count, n_ch))
    return theta, eps


def _noisy(mu, eps, noise):
    return mu + np.sqrt(M._variance(mu, noise)) * eps


def _finish(losses, failed):
    n_bad = int(failed.sum())
    if n_bad:
        warnings.warn(f"{n_bad} estimator failures excluded from the design loss")
    if n_bad == losses.size:
        return np.inf
    return float(np.mean(losses[~failed]))


def estimate_design_loss(Z, basis: BasisSet, priors, noise, spec: LossSpec, rng,
                         settings=inf.DEFAULT_SETTINGS, curves=None):
    """Monte Carlo expected loss of the estimator under the plain model."""
    curves = compose_curves(basis, Z, valid_range=basis_range(basis)) if curves is None else curves
    theta, eps = _model_draws(priors, curves.n, spec.K_mc, rng)
    R = _noisy(M.batch_mean(curves, theta), eps, noise)
    t_hat, failed = _estimate_t(R, curves, noise, priors, spec, rng, settings)
    return _finish(spec.loss(t_hat, theta[:, 0]), failed)


def basis_range(basis: BasisSet):
    return (float(basis.grid[0]), float(basis.grid[-1]))


@dataclass
class SceneSamples:
    """Path-sample pixels with their true direct-path depth."""

    pixels: list
    depth: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        if len(self.pixels) != self.depth.size:
            raise ValueError("one depth per pixel required")

    @classmethod
    def from_scenes(cls, scenes, mask=None):
        pixels, depth = [], []
        for sc in scenes:
            d = sc.depth.reshape(-1)
            keep = np.ones(d.size, dtype=bool) if mask is None else mask(sc)
            for i in np.flatnonzero(keep):
                pixels.append(sc.pixels[i])
                depth.append(d[i])
        return cls(pixels, np.array(depth))


def mixture_design_loss(Z, basis: BasisSet, priors, noise, scenes: SceneSamples | None,
                        beta_mix, spec: LossSpec, rng, settings=inf.DEFAULT_SETTINGS):
    """Expected loss under a mixture of the plain model and scene path samples."""
    if not 0.0 <= beta_mix <= 1.0:
        raise ValueError("beta_mix must lie in [0, 1]")
    if beta_mix < 1.0 and (scenes is None or len(scenes.pixels) == 0):
        raise ValueError("mixture loss needs scene samples when beta_mix < 1")
    if beta_mix == 1.0:
        return estimate_design_loss(Z, basis, priors, noise, spec, rng, settings)
    curves = compose_curves(basis, Z, valid_range=basis_range(basis))
    n_model = int(round(beta_mix * spec.K_mc))
    n_scene = spec.K_mc - n_model
    theta, eps = _model_draws(priors, curves.n, n_model, rng)
    pick = rng.integers(0, len(scenes.pixels), n_scene)
    eps_s = rng.standard_normal((n_scene, curves.n))
    R_model = _noisy(M.batch_mean(curves, theta), eps, noise)
    R_scene = _noisy(forward_responses([scenes.pixels[i] for i in pick], curves), eps_s, noise)
    R = np.vstack([R_model, R_scene])
    t = np.concatenate([theta[:, 0], scenes.depth[pick]])
    t_hat, failed = _estimate_t(R, curves, noise, priors, spec, rng, settings)
    return _finish(spec.loss(t_hat, t), failed)


def design_loss_fn(basis, priors, noise, spec: LossSpec, seed, settings=inf.DEFAULT_SETTINGS,
                   scenes=None, beta_mix=1.0):
    """Loss of ``Z`` with common random numbers: every call reuses ``seed``."""
    def f(Z):
        rng = np.random.default_rng(seed)
        return mixture_design_loss(Z, basis, priors, noise, scenes, beta_mix, spec, rng, settings)
    return f


def naive_design(m, n, K_shutter, K_sparsity):
    """All channels equal: ``K_sparsity`` evenly spread elements, budget split evenly."""
    k = min(K_sparsity, m)
    rows = np.unique(np.round(np.linspace(0, m - 1, k)).astype(int))
    Z = np.zeros((m, n), dtype=np.int64)
    Z[rows, :] = K_shutter // (n * rows.size)
    return Z


# -- Markov chain --------------------------------------------------------------------------

@dataclass
class ChainState:
    B: np.ndarray  # (m, n) bool
    V: np.ndarray  # (m, n) float in (0, V_max]

    @property
    def Z(self):
        return np.rint(self.B * self.V).astype(np.int64)

    def copy(self):
        return ChainState(self.B.copy(), self.V.copy())


@dataclass
class Proposal:
    state: ChainState
    log_hastings: float
    kernel: str


class DesignChain:
    """Proposal kernels on ``(B, V)``; all keep ``V`` in ``(0, V_max]``."""

    def __init__(self, shape, K_shutter, K_sparsity, probs=KERNEL_PROBS,
                 perturb_sigma=PERTURB_SIGMA, scale_sigma=SCALE_SIGMA):
        self.shape = tuple(shape)
        self.K_shutter, self.K_sparsity = int(K_shutter), int(K_sparsity)
        self.V_max = self.K_shutter + 0.5
        self.probs = np.asarray(probs, dtype=float) / np.sum(probs)
        self.perturb_sigma, self.scale_sigma = perturb_sigma, scale_sigma

    def initial(self):
        return ChainState(np.zeros(self.shape, dtype=bool), np.ones(self.shape))

    def feasible(self, s: ChainState):
        return (np.all((s.V > 0) & (s.V <= self.V_max))
                and is_feasible(s.Z, self.K_shutter, self.K_sparsity))

    def propose(self, s: ChainState, rng) -> Proposal | None:
        kernel = KERNELS[rng.choice(len(KERNELS), p=self.probs)]
        return getattr(self, "_" + kernel)(s, rng)

    def _move(self, s, rng):
        act = np.flatnonzero(s.B)
        if act.size < 2:
            return None
        j, k = rng.choice(act, 2, replace=False)
        new = s.copy()
        V = new.V.reshape(-1)
        d = rng.uniform() * V[j]
        V[j] -= d
        V[k] += d
        if not V[j] > 0:
            return None
        # reverse move draws from the destination's new value
        return Proposal(new, np.log(s.V.flat[j]) - np.log(V[k]), "move")

    def _swap(self, s, rng):
        j, k = rng.choice(s.B.size, 2, replace=False)
        new = s.copy()
        B, V = new.B.reshape(-1), new.V.reshape(-1)
        B[[j, k]] = B[[k, j]]
        V[[j, k]] = V[[k, j]]
        return Proposal(new, 0.0, "swap")

    def _zero(self, s, rng):
        act = np.flatnonzero(s.B)
        if act.size == 0:
            return None
        n1, n0 = act.size, s.B.size - act.size
        new = s.copy()
        new.B.flat[rng.choice(act)] = False
        return Proposal(new, np.log(n1) - np.log(n0 + 1), "zero")

    def _nonzero(self, s, rng):
        ina = np.flatnonzero(~s.B)
        if ina.size == 0:
            return None
        n0, n1 = ina.size, s.B.size - ina.size
        new = s.copy()
        new.B.flat[rng.choice(ina)] = True
        return Proposal(new, np.log(n0) - np.log(n1 + 1), "nonzero")

    def _perturb(self, s, rng):
        act = np.flatnonzero(s.B)
        if act.size == 0:
            return None
        j = rng.choice(act)
        new = s.copy()
        f = np.exp(self.perturb_sigma * rng.standard_normal())
        new.V.flat[j] *= f
        return Proposal(new, np.log(f), "perturb")

    def _scale(self, s, rng):
        new = s.copy()
        f = np.exp(self.scale_sigma * rng.standard_normal())
        new.V *= f
        return Proposal(new, s.V.size * np.log(f), "scale")


@dataclass
class AnnealResult:
    best: DesignMatrix
    best_loss: float
    trace: np.ndarray  # (iterations + 1, 4): k, T_k, current loss, best loss
    rejected_infeasible: int
    accepted: int
    kernel_counts: dict = field(default_factory=dict)

    def trace_csv(self):
        lines = ["iteration,temperature,loss,best_loss"]
        for k, T, f, b in self.trace:
            lines.append(f"{int(k)},{float(T)!r},{float(f)!r},{float(b)!r}")
        return "\n".join(lines) + "\n"


def anneal_design(loss_fn, shape, K_shutter, K_sparsity, schedule: AnnealSchedule, rng,
                  chain: DesignChain | None = None, initial: ChainState | None = None,
                  fixed_temperature=None, callback=None) -> AnnealResult:
    """Metropolis-Hastings annealing from the all-closed profile.

    ``fixed_temperature`` runs a plain MH chain at constant temperature; the
    visited states are then reported through ``callback(k, state)``.
    """
    chain = DesignChain(shape, K_shutter, K_sparsity) if chain is None else chain
    s = chain.initial() if initial is None else initial.copy()
    if not chain.feasible(s):
        raise ValueError("initial state is infeasible")
    cache = {}

    def f(state):
        Z = state.Z
        key = Z.tobytes()
        if key not in cache:
            cache[key] = float(loss_fn(Z))
        return cache[key]

    cur = f(s)
    best_s, best = s.copy(), cur
    trace = [(0, schedule.T_start if fixed_temperature is None else fixed_temperature, cur, best)]
    rejected = accepted = 0
    counts = {k: [0, 0] for k in KERNELS}
    for k in range(1, schedule.iterations + 1):
        T = schedule.temperature(k) if fixed_temperature is None else fixed_temperature
        prop = chain.propose(s, rng)
        if prop is not None:
            counts[prop.kernel][0] += 1
            if not chain.feasible(prop.state):
                rejected += 1
            else:
                fn = f(prop.state)
                log_a = prop.log_hastings - (fn - cur) / T
                if np.isfinite(fn) and np.log(rng.uniform()) < log_a:
                    s, cur = prop.state, fn
                    accepted += 1
                    counts[prop.kernel][1] += 1
                    if cur < best:
                        best_s, best = s.copy(), cur
        if callback is not None:
            callback(k, s)
        trace.append((k, T, cur, best))
    return AnnealResult(DesignMatrix(best_s.Z, K_shutter, K_sparsity), best, np.array(trace),
                        rejected, accepted, counts)


# -- enumeration oracle -------------------------------------------------------------------

def gibbs_distribution(loss_fn, shape, K_shutter, K_sparsity, T):
    """Exact stationary distribution over ``Z`` for a tiny design space.

    The augmented target integrates ``V`` out: an inactive entry contributes
    ``V_max``, an active entry with ``Z = k`` contributes the length of the
    rounding cell, 1 for ``k >= 1`` and 0.5 for ``k = 0``.
    """
    size = int(np.prod(shape))
    V_max = K_shutter + 0.5
    weights = {}
    for B in itertools.product((0, 1), repeat=size):
        ranges = [range(K_shutter + 1) if b else (0,) for b in B]
        for z in itertools.product(*ranges):
            Z = np.array(z, dtype=np.int64).reshape(shape)
            if not is_feasible(Z, K_shutter, K_sparsity):
                continue
            vol = np.prod([V_max if not b else (1.0 if k >= 1 else 0.5) for b, k in zip(B, z)])
            key = tuple(z)
            weights[key] = weights.get(key, 0.0) + vol * np.exp(-loss_fn(Z) / T)
    total = sum(weights.values())
    return {k: v / total for k, v in weights.items()}


def total_variation(p: dict, q: dict):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# -- text I/O -----------------------------------------------------------------------------

def dumps_design(Z, header_lines=()):
    Z = np.asarray(Z, dtype=np.int64)
    lines = [f"# {h}" for h in header_lines]
    lines.append(f"# rows={Z.shape[0]} cols={Z.shape[1]}")
    lines += [" ".join(str(int(v)) for v in row) for row in Z]
    return "\n".join(lines) + "\n"


def loads_design(text):
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError("empty design file")
    Z = np.array(rows, dtype=np.int64)
    if np.any(Z < 0):
        raise ValueError("design entries must be nonnegative")
    return Z
