"""Runtime invariant suites, one group per module (``bayestof check``)."""
from __future__ import annotations

import io
import os
import tempfile
import time
import warnings
from contextlib import redirect_stderr, redirect_stdout
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import config as C
from . import curves as cv
from . import design as D
from . import inference as inf
from . import model as M
from . import regress as G
from . import tofsim as S

MODULES = ("curves", "model", "inference", "regress", "design", "tofsim", "cli")


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.module}.{self.name} ({self.seconds:.1f}s): {self.detail}"


class Context:
    """Shared, lazily built objects for one check run."""

    def __init__(self, cfg, seed=0):
        self.cfg = cfg
        self.seed = seed
        self._curves = None

    @property
    def curves(self):
        if self._curves is None:
            self._curves = C.curves_from(self.cfg)
        return self._curves

    @property
    def noise(self):
        return C.noise_from(self.cfg)

    @property
    def priors(self):
        return C.priors_from(self.cfg)

    @property
    def settings(self):
        return C.settings_from(self.cfg)

    def rng(self, salt):
        return np.random.default_rng([self.seed, salt])


def fd_check(f, x, analytic, h, rtol):
    """Central differences with one Richardson step; returns (ok, worst relative error)."""
    def cd(step):
        return (f(x + step) - f(x - step)) / (2 * step)
    fd = (4 * cd(h / 2) - cd(h)) / 3
    scale = np.maximum(np.abs(analytic), np.max(np.abs(analytic)) * 1e-3)
    rel = np.abs(fd - analytic) / scale
    return bool(np.all(rel < rtol)), float(rel.max())


# -- curves -------------------------------------------------------------------------------

def check_curves_homogeneity(ctx):
    basis = C.basis_from(ctx.cfg)
    pulse = C.pulse_from(ctx.cfg)
    Q2 = cv.boxcar_basis_matrix(basis.catalog, pulse.scaled(2.0), basis.grid)
    Q3 = cv.boxcar_basis_matrix(basis.catalog, pulse.scaled(3.0), basis.grid)
    exact = np.array_equal(Q2, 2.0 * basis.Q)
    rel3 = np.max(np.abs(Q3 - 3.0 * basis.Q)) / np.max(np.abs(basis.Q))
    return exact and rel3 < 1e-14, f"scale-2 bit-exact={exact} scale-3 rel={rel3:.1e}"


def check_curves_decay_law(ctx):
    grid = np.linspace(50.0, 650.0, 601)
    step = 0.01
    pulse = cv.PulseProfile.rectangular(step, 1.0 / step, step)
    wide = [cv.BoxcarElement(0.0, 1000.0)]
    q = cv.boxcar_basis_matrix(wide, pulse, grid)[:, 0] * grid**2
    spread = (q.max() - q.min()) / q.mean()
    return spread < 1e-9, f"relative spread of C(t) t^2 = {spread:.1e}"


def check_curves_chebyshev(ctx):
    basis = C.basis_from(ctx.cfg)
    Z = C.design_from_entries(basis, ctx.cfg["default_design"])
    C_grid = basis.Q @ Z
    curves = ctx.curves
    err = np.max(np.abs(curves(basis.grid) - C_grid))
    return err <= curves.fit_error * (1 + 1e-12), f"max grid error {err:.3e} <= {curves.fit_error:.3e}"


def check_curves_derivatives(ctx):
    curves = ctx.curves
    lo, hi = curves.valid_range
    t = ctx.rng(1).uniform(lo + 1.0, hi - 1.0, 100)
    c, c1, c2 = curves.derivatives(t)
    ok1, e1 = fd_check(lambda x: curves(x), t, c1, 1e-2, 1e-5)
    ok2, e2 = fd_check(lambda x: curves.derivatives(x)[1], t, c2, 1e-2, 1e-5)
    return ok1 and ok2, f"worst relative error d1={e1:.1e} d2={e2:.1e}"


# -- model --------------------------------------------------------------------------------

def check_model_scaling(ctx):
    theta = ctx.priors.sample(ctx.rng(2), 200, M.SP)
    c = 1.7
    th2 = theta.copy()
    th2[:, 1] *= c
    mu, mu2 = M.batch_mean(ctx.curves, theta), M.batch_mean(ctx.curves, th2)
    rel = np.max(np.abs(mu2 - c * mu) / np.maximum(np.abs(c * mu), 1e-300))
    # affine in lambda
    a, b = theta.copy(), theta.copy()
    a[:, 2], b[:, 2] = 0.0, 2.0 * theta[:, 2]
    lin = M.batch_mean(ctx.curves, a) + M.batch_mean(ctx.curves, b) - 2.0 * mu
    rel_l = np.max(np.abs(lin)) / np.max(np.abs(mu))
    return rel < 1e-13 and rel_l < 1e-12, f"rho scaling rel={rel:.1e} lambda affinity rel={rel_l:.1e}"


def check_model_nesting(ctx):
    sp = ctx.priors.sample(ctx.rng(3), 200, M.SP)
    tp = np.column_stack([sp, sp[:, 0] + 50.0, np.zeros(len(sp))])
    same = np.array_equal(M.batch_mean(ctx.curves, sp, M.SP), M.batch_mean(ctx.curves, tp, M.TP))
    return same, f"bit-identical={same}"


def noise_regression(curves, noise, priors, rng, n_theta=200, draws=1000):
    """Least-squares fit of per-theta empirical variance on empirical mean."""
    theta = priors.sample(rng, n_theta, M.SP)
    R = M.batch_sample(curves, np.repeat(theta, draws, axis=0), noise, rng)
    R = R.reshape(n_theta, draws, -1)
    # the variance law clips negative means at zero
    m = np.maximum(R.mean(axis=1).reshape(-1), 0.0)
    v = R.var(axis=1, ddof=1).reshape(-1)
    # sample variances have sd proportional to the variance itself: reweight
    alpha, K = np.polyfit(m, v, 1)
    for _ in range(5):
        fit = np.maximum(alpha * m + K, 1.0)
        alpha, K = np.polyfit(m, v, 1, w=1.0 / fit)
    return alpha, K


def check_model_noise_recovery(ctx):
    alpha, K = noise_regression(ctx.curves, ctx.noise, ctx.priors, ctx.rng(4))
    ra = abs(alpha / ctx.noise.alpha - 1)
    rk = abs(K / ctx.noise.K - 1)
    return ra < 0.05 and rk < 0.05, f"alpha={alpha:.4f} K={K:.3f} (rel {ra:.3f}, {rk:.3f})"


def check_model_gradient(ctx):
    rng = ctx.rng(5)
    worst = 0.0
    ok = True
    for kind in (M.SP, M.TP):
        theta = ctx.priors.sample(rng, 50, kind)
        R = M.batch_sample(ctx.curves, theta, ctx.noise, rng, kind)
        _, g = M.batch_nll(R, theta, ctx.curves, ctx.noise, kind)
        for j in range(theta.shape[1]):
            h = 1e-4 * (ctx.priors.bounds(kind)[1][j] - ctx.priors.bounds(kind)[0][j])

            def f(x, j=j):
                th = theta.copy()
                th[:, j] = x
                return M.batch_nll(R, th, ctx.curves, ctx.noise, kind, order=0)
            o, e = fd_check(f, theta[:, j], g[:, j], h, 1e-4)
            ok &= o
            worst = max(worst, e)
    return ok, f"worst relative gradient error {worst:.1e}"


# -- inference ---------------------------------------------------------------------------

def check_inference_argmin_invariance(ctx):
    rng = ctx.rng(6)
    theta = ctx.priors.sample(rng, 50, M.SP)
    R = M.batch_sample(ctx.curves, theta, ctx.noise, rng)
    lo, hi = ctx.priors.bounds(M.SP)
    r = ctx.settings.restarts_sp
    starts = lo + (hi - lo) * rng.uniform(0.01, 0.99, (50, r, 3))
    a = inf.run_restarts(R, ctx.curves, ctx.noise, ctx.priors, M.SP, "mle", r, rng, ctx.settings,
                         starts=starts)
    perm = rng.permutation(r)
    b = inf.run_restarts(R, ctx.curves, ctx.noise, ctx.priors, M.SP, "mle", r, rng, ctx.settings,
                         starts=starts[:, perm])
    ua = a.u[np.arange(50), a.best]
    ub = b.u[np.arange(50), b.best]
    same = np.array_equal(ua, ub)
    return same, f"identical optimum under permuted restarts: {same}"


def check_inference_interiority(ctx):
    rng = ctx.rng(7)
    theta = ctx.priors.sample(rng, 100, M.SP)
    R = M.batch_sample(ctx.curves, theta, ctx.noise, rng)
    lo, hi = ctx.priors.bounds(M.SP)
    bad = 0
    for method in ("mle", "map", "bayes"):
        est = inf.batch_infer(R, ctx.curves, ctx.noise, ctx.priors, M.SP, method, rng, ctx.settings)
        u = M.to_opt(est.theta, M.SP)
        bad += int(np.sum(~np.all((u > lo) & (u < hi), axis=1)))
    return bad == 0, f"{bad} estimates on or outside the box"


def null_gammas(ctx, count, method="bayes", salt=8):
    rng = ctx.rng(salt)
    theta = ctx.priors.sample(rng, count, M.SP)
    R = M.batch_sample(ctx.curves, theta, ctx.noise, rng)
    est = inf.batch_infer(R, ctx.curves, ctx.noise, ctx.priors, M.SP, method, rng, ctx.settings)
    return est.gamma, theta, R


def check_inference_gamma_null(ctx, count=10000):
    g, _, _ = null_gammas(ctx, count)
    ks = stats.kstest(g, "uniform").statistic
    return ks < 0.02, f"KS of Bayes gamma against U[0,1] = {ks:.3f} over {count} null draws"


def check_inference_gamma_violation(ctx):
    rng = ctx.rng(9)
    sp = ctx.priors.sample(rng, 200, M.SP)
    sp[:, 0] = rng.uniform(60.0, 250.0, 200)
    tp = np.column_stack([sp, sp[:, 0] + 150.0, np.full(200, 0.8)])
    R = M.batch_sample(ctx.curves, tp, ctx.noise, rng, M.TP)
    est = inf.batch_mle(R, ctx.curves, ctx.noise, ctx.priors, M.SP, rng, settings=ctx.settings)
    med = float(np.median(est.gamma))
    return med < 0.05, f"median SP gamma on strong two-path data = {med:.4f}"


def check_inference_bayes_consistency(ctx):
    rng = ctx.rng(10)
    noise = M.NoiseParams(0.0, 1e-6)
    theta = ctx.priors.sample(rng, 20, M.SP)
    R = M.batch_mean(ctx.curves, theta)
    est = inf.batch_bayes(R, ctx.curves, noise, ctx.priors, M.SP, rng, ctx.settings)
    err = float(np.max(np.abs(est.theta[:, 0] - theta[:, 0])))
    return err < 0.5, f"max posterior-mean depth error {err:.2e} cm at K=1e-6, alpha=0"


def check_inference_importance(ctx, runs=200):
    # prior N(0, 4), one observation 2 with unit noise: posterior N(1.6, 0.8)
    def log_target(x):
        return -0.5 * x[:, 0] ** 2 / 4.0 - 0.5 * (2.0 - x[:, 0]) ** 2
    rng = ctx.rng(11)
    ms, vs = [], []
    for _ in range(runs):
        m, c, _, _ = inf.importance_moments(log_target, [1.0], [[1.5]], rng, 200.0)
        ms.append(m[0])
        vs.append(c[0, 0])
    em = abs(np.mean(ms) - 1.6) / 1.6
    ev = abs(np.mean(vs) - 0.8) / 0.8
    return em < 0.02 and ev < 0.02, f"mean rel err {em:.4f}, variance rel err {ev:.4f} ({runs} runs at ESS 200)"


# -- regress -------------------------------------------------------------------------------

def _tree_data(ctx, count, salt):
    return G.generate_training_set(ctx.curves, ctx.noise, ctx.priors, count, ctx.rng(salt), "mle",
                                   ctx.settings)


def check_regress_roundtrip(ctx):
    data = _tree_data(ctx, 4000, 12)
    tree = G.train_tree(data, 8)
    tree2 = G.loads_tree(G.dumps_tree(tree))
    X = data.X[ctx.rng(13).integers(0, len(data), 10000)] * ctx.rng(14).uniform(0.9, 1.1, (10000, 1))
    same = np.array_equal(tree.predict(X), tree2.predict(X))
    return same, f"bit-identical predictions after round trip: {same}"


def split_violations(tree, X):
    """Interior nodes whose threshold is not strictly inside the routed feature range."""
    bad = 0

    def walk(i, rows):
        nonlocal bad
        f = tree.feature[i]
        if f < 0:
            return
        x = X[rows, f]
        a = tree.threshold[i]
        if not (x.min() < a < x.max()):
            bad += 1
        walk(tree.left[i], rows[x <= a])
        walk(tree.right[i], rows[x > a])

    walk(0, np.arange(X.shape[0]))
    return bad


def check_regress_split_sanity(ctx):
    data = _tree_data(ctx, 6000, 15)
    tree = G.train_tree(data, 12)
    bad = split_violations(tree, data.X)
    n_split = int(np.sum(tree.feature >= 0))
    return bad == 0, f"{bad} of {n_split} splits violate min < threshold < max"


def depth_errors(train, test, depths=(8, 12, 16), leaf="quadratic"):
    out = []
    for d in depths:
        tree = G.train_tree(train, d, leaf)
        out.append(float(np.mean(np.abs(tree.predict(test.X) - test.label("t")))))
    return out


def check_regress_convergence(ctx, n_train=60000, n_test=20000):
    errs = depth_errors(_tree_data(ctx, n_train, 16), _tree_data(ctx, n_test, 17))
    ok = errs[0] >= errs[1] >= errs[2]
    return ok, "MAE vs slow inference at depth 8/12/16: " + " / ".join(f"{e:.4f}" for e in errs)


def check_regress_throughput(ctx):
    data = _tree_data(ctx, 4000, 18)
    tree = G.train_tree(data, 12)
    rate = G.throughput(tree, 60000)
    return True, f"{rate:.3g} leaf evaluations per second (60000-pixel frame, reported only)"


# -- design ----------------------------------------------------------------------------------

def toy_loss(Z):
    return 0.5 * (Z[0, 0] - 2) ** 2 + 0.3 * (Z[1, 0] - 1) ** 2 + 0.2 * Z.sum()


def toy_chain_tv(seed, T=1.0, K_shutter=5, K_sparsity=2, iterations=200000, burn=2000):
    exact = D.gibbs_distribution(toy_loss, (2, 1), K_shutter, K_sparsity, T)
    counts = {}

    def cb(k, s):
        if k > burn:
            key = tuple(s.Z.reshape(-1))
            counts[key] = counts.get(key, 0) + 1

    D.anneal_design(toy_loss, (2, 1), K_shutter, K_sparsity,
                    D.AnnealSchedule(20.0, 0.01, iterations), np.random.default_rng(seed),
                    fixed_temperature=T, callback=cb)
    total = sum(counts.values())
    return D.total_variation(exact, {k: v / total for k, v in counts.items()})


def check_design_detailed_balance(ctx):
    tv = toy_chain_tv(ctx.seed)
    return tv < 0.05, f"total variation to the Gibbs distribution = {tv:.4f}"


def design_problem(cfg):
    dc = cfg["design"]
    basis = C.basis_from(cfg, dc["catalog"])
    spec = D.LossSpec(dc["loss"], dc["estimator"], dc["K_mc"], dc["restarts"])
    sched = D.AnnealSchedule(dc["T_start"], dc["T_final"], dc["iterations"])
    return basis, spec, sched


def annealed_vs_naive(cfg, seed):
    dc = cfg["design"]
    basis, spec, sched = design_problem(cfg)
    f = D.design_loss_fn(basis, C.priors_from(cfg), C.noise_from(cfg), spec, seed)
    naive = f(D.naive_design(basis.m, dc["channels"], dc["K_shutter"], dc["K_sparsity"]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = D.anneal_design(f, (basis.m, dc["channels"]), dc["K_shutter"], dc["K_sparsity"],
                              sched, np.random.default_rng(seed))
    return res, naive


def check_design_improvement(ctx):
    res, naive = annealed_vs_naive(ctx.cfg, ctx.seed)
    ratio = res.best_loss / naive
    return ratio <= 0.6, f"best {res.best_loss:.1f} vs naive {naive:.1f} (ratio {ratio:.4f})"


def fuzz_kernels(shape, K_shutter, K_sparsity, proposals, rng):
    """Random proposals from random feasible states; counts accepted-as-feasible violations."""
    chain = D.DesignChain(shape, K_shutter, K_sparsity)
    s = chain.initial()
    violations = made = 0
    while made < proposals:
        p = chain.propose(s, rng)
        made += 1
        if p is None:
            continue
        if chain.feasible(p.state):
            Z = p.state.Z
            if not D.is_feasible(Z, K_shutter, K_sparsity) or np.any(p.state.V > chain.V_max):
                violations += 1
            # random walk through feasible states, always accepting
            s = p.state
    return violations


def check_design_constraints(ctx, proposals=1_000_000):
    v = fuzz_kernels((6, 3), 40, 2, proposals, ctx.rng(19))
    return v == 0, f"{v} violations in {proposals} proposals"


def mixture_designs(cfg, seed, k_mc=128, iterations=200):
    """Designs annealed with beta_mix 0.5 and 1, plus a held-out multipath scene."""
    from .cli import training_scenes
    dc = cfg["design"]
    basis, _, _ = design_problem(cfg)
    spec = D.LossSpec(dc["loss"], dc["estimator"], k_mc, dc["restarts"])
    sched = D.AnnealSchedule(dc["T_start"], dc["T_final"], iterations)
    scenes = D.SceneSamples.from_scenes(training_scenes(cfg))
    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for beta in (0.5, 1.0):
            f = D.design_loss_fn(basis, C.priors_from(cfg), C.noise_from(cfg), spec, seed,
                                 scenes=scenes, beta_mix=beta)
            out[beta] = D.anneal_design(f, (basis.m, dc["channels"]), dc["K_shutter"],
                                        dc["K_sparsity"], sched, np.random.default_rng(seed))
    return basis, out


def held_out_bias(cfg, basis, Z, seed):
    """Median signed depth error on multipath pixels of a held-out scene."""
    spec = S.SceneSpec.from_config({**cfg["scene"], "object_distance": 275.0,
                                    "wall_offset": 180.0})
    scene = S.gen_two_bounce_scene(spec)
    mp = scene.ratios().reshape(-1) > 0.3
    pixels = [p for p, m in zip(scene.pixels, mp) if m]
    curves = cv.compose_curves(basis, Z, cfg["curves"]["degree"], D.basis_range(basis))
    rng = np.random.default_rng(seed)
    R = S.scene_responses(pixels, curves, C.noise_from(cfg), rng)
    est = inf.batch_mle(R, curves, C.noise_from(cfg), C.priors_from(cfg), M.SP, rng,
                        settings=C.settings_from(cfg))
    return float(np.median(est.theta[:, 0] - scene.depth.reshape(-1)[mp]))


def check_design_mixture(ctx):
    basis, res = mixture_designs(ctx.cfg, ctx.seed)
    b05 = abs(held_out_bias(ctx.cfg, basis, res[0.5].best.Z, ctx.seed))
    b10 = abs(held_out_bias(ctx.cfg, basis, res[1.0].best.Z, ctx.seed))
    return b05 < b10, f"|median multipath bias| beta=0.5: {b05:.2f} cm, beta=1: {b10:.2f} cm"


# -- tofsim ---------------------------------------------------------------------------------

def check_tofsim_linearity(ctx):
    rng = ctx.rng(20)
    a = S.PathSampleSet(rng.uniform(0.1, 1, 5) * 1e-4, np.full(5, 3), rng.uniform(60, 600, 5), 0.3)
    b = S.PathSampleSet(rng.uniform(0.1, 1, 7) * 1e-4, np.full(7, 3), rng.uniform(60, 600, 7), 0.3)
    merged = S.PathSampleSet.merge(a, b)
    amb = 0.3 * ctx.curves.ambient
    lhs = S.forward_response(merged, ctx.curves)
    rhs = S.forward_response(a, ctx.curves) + S.forward_response(b, ctx.curves) - amb
    rel = np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs))
    return rel < 1e-12, f"relative mismatch {rel:.1e}"


def stratified_runs(samples, curves, capacity, runs, rng):
    exact = S.forward_response(samples, curves)
    est = np.array([S.forward_response(S.subsample(samples, capacity, rng), curves)
                    for _ in range(runs)])
    se = est.std(axis=0, ddof=1) / np.sqrt(runs)
    return exact, est.mean(axis=0), se


def check_tofsim_stratified(ctx, runs=1000):
    rng = ctx.rng(21)
    n = 400
    L = rng.integers(2, 6, n)
    samples = S.PathSampleSet(rng.pareto(1.5, n) * 1e-5, L, rng.uniform(60, 600, n), 0.2)
    exact, mean, se = stratified_runs(samples, ctx.curves, 16, runs, rng)
    z = np.abs(mean - exact) / np.maximum(se, 1e-300)
    return bool(np.all(z < 3)), f"max |z| over channels = {z.max():.2f} ({runs} runs)"


def scene_gammas(ctx, method="bayes"):
    spec = S.SceneSpec.from_config(ctx.cfg["scene"])
    scene = S.gen_two_bounce_scene(spec)
    res = S.scene_benchmark(scene, ctx.curves, ctx.noise, ctx.priors, (method,), (M.SP, M.TP),
                            ctx.rng(22), ctx.settings)
    ratio = scene.ratios().reshape(-1)
    return scene, res, ratio


def check_tofsim_gamma(ctx):
    _, res, ratio = scene_gammas(ctx)
    mp, clean = ratio > 0.3, ratio < 0.01
    g_sp = res.estimates["sp-bayes"].gamma
    g_tp = res.estimates["tp-bayes"].gamma
    med_sp = float(np.median(g_sp[mp]))
    p10 = float(np.percentile(g_sp[clean], 10))
    med_tp = float(np.median(g_tp[mp]))
    ok1 = med_sp < p10
    ok2 = med_tp >= 5 * med_sp
    return ok1 and ok2, (f"SP median on multipath {med_sp:.4f} vs clean 10th pct {p10:.4f}; "
                         f"TP median {med_tp:.4f} (>= 5x: {ok2})")


# -- cli ----------------------------------------------------------------------------------------

def check_cli_contract(ctx):
    from . import __version__
    from .cli import main
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        sink = io.StringIO()
        with redirect_stdout(sink), redirect_stderr(sink):
            code = main(["gen-curves", "--out", os.path.join(tmp, "c.txt")])
            code2 = main(["sample", "--count", "5", "--out", os.path.join(tmp, "r.csv")])
            bad = os.path.join(tmp, "bad.yaml")
            with open(bad, "w") as fh:
                fh.write("t_range: [50, 500]\n")
            code3 = main(["gen-curves", "--config", bad, "--out", os.path.join(tmp, "x.txt")])
            code4 = main(["infer", "--responses", os.path.join(tmp, "missing.csv"),
                          "--out", os.path.join(tmp, "e.csv")])
        if (code, code2, code3, code4) != (0, 0, 2, 2):
            problems.append(f"exit codes {(code, code2, code3, code4)}")
        h = C.config_hash(ctx.cfg)
        for name in ("c.txt", "r.csv"):
            with open(os.path.join(tmp, name)) as fh:
                head = fh.readline()
            for token in (f"version={__version__}", f"config={h}", f"seed={ctx.cfg['seed']}"):
                if token not in head:
                    problems.append(f"{name} header lacks {token}")
        if "rho_range" not in sink.getvalue():
            problems.append("missing-key error does not name the key")
    return not problems, "; ".join(problems) or "headers and exit codes as specified"


CHECKS = {
    "curves": [check_curves_homogeneity, check_curves_decay_law, check_curves_chebyshev,
               check_curves_derivatives],
    "model": [check_model_scaling, check_model_nesting, check_model_noise_recovery,
              check_model_gradient],
    "inference": [check_inference_argmin_invariance, check_inference_interiority,
                  check_inference_gamma_null, check_inference_gamma_violation,
                  check_inference_bayes_consistency, check_inference_importance],
    "regress": [check_regress_roundtrip, check_regress_split_sanity, check_regress_convergence,
                check_regress_throughput],
    "design": [check_design_detailed_balance, check_design_improvement, check_design_constraints,
               check_design_mixture],
    "tofsim": [check_tofsim_linearity, check_tofsim_stratified, check_tofsim_gamma],
    "cli": [check_cli_contract],
}


def run_all(cfg, modules=None, seed=0, verbose=False):
    ctx = Context(cfg, seed)
    out = []
    for mod in modules or MODULES:
        if mod not in CHECKS:
            raise ValueError(f"unknown module {mod!r}")
        for fn in CHECKS[mod]:
            name = fn.__name__.replace(f"check_{mod}_", "")
            t0 = time.perf_counter()
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    ok, detail = fn(ctx)
            except Exception as e:  # a crashing check is a failing check
                ok, detail = False, f"raised {type(e).__name__}: {e}"
            res = CheckResult(mod, name, bool(ok), detail, time.perf_counter() - t0)
            if verbose:
                print(res.line(), flush=True)
            out.append(res)
    return out
