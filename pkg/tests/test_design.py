import warnings

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from bayestof import config as C
from bayestof import design as D
from bayestof import model as M
from bayestof.checks import design_problem, fuzz_kernels, toy_chain_tv, toy_loss

# variance of a uniform depth prior on [50, 500]
PRIOR_VAR_T = 450.0**2 / 12


@pytest.fixture(scope="module")
def basis(cfg):
    return design_problem(cfg)[0]


def test_feasibility_examples():
    Z = np.array([[2, 0], [1, 3], [0, 0]])
    assert D.is_feasible(Z, 6, 2)
    assert not D.is_feasible(Z, 5, 2)
    assert not D.is_feasible(Z, 6, 1)
    assert not D.is_feasible(-Z, 6, 2)
    dm = D.DesignMatrix(Z, 5, 1)
    assert set(dm.violations()) == {"pulse budget exceeded", "column sparsity exceeded"}
    assert D.DesignMatrix(Z, 6, 2).feasible


def test_schedule_endpoints_exact():
    s = D.AnnealSchedule(20.0, 0.01, 400)
    assert s.temperature(0) == 20.0
    assert s.temperature(400) == 0.01
    assert s.temperature(200) == pytest.approx(0.4472135954999579, rel=1e-12)
    T = s.temperature(np.arange(401))
    assert np.all(np.diff(T) < 0)
    assert np.allclose(T[1:] / T[:-1], s.beta)
    with pytest.raises(ValueError):
        D.AnnealSchedule(0.01, 20.0, 10)
    with pytest.raises(ValueError):
        D.AnnealSchedule(20.0, 0.01, 0)


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        D.LossSpec(K_mc=0)
    with pytest.raises(ValueError):
        D.LossSpec(kind="absolute")
    with pytest.raises(ValueError):
        D.LossSpec(estimator="oracle")
    assert D.LossSpec("relative").loss(np.array([110.0]), np.array([100.0]))[0] == 1.0


def test_naive_design_is_feasible():
    Z = D.naive_design(52, 4, 1000, 4)
    assert D.is_feasible(Z, 1000, 4)
    assert np.all(Z == Z[:, :1])


def test_anneal_trace_and_feasibility():
    visited = []
    res = D.anneal_design(toy_loss, (3, 2), 6, 2, D.AnnealSchedule(5.0, 0.05, 3000),
                          np.random.default_rng(0),
                          callback=lambda k, s: visited.append(s.Z.copy()))
    best = res.trace[:, 3]
    assert np.all(np.diff(best) <= 0)
    assert res.trace.shape == (3001, 4)
    assert all(D.is_feasible(Z, 6, 2) for Z in visited)
    assert res.best.feasible
    assert res.best_loss == pytest.approx(toy_loss(res.best.Z))
    assert res.trace_csv().startswith("iteration,temperature,loss,best_loss\n")


def test_anneal_deterministic():
    def run():
        return D.anneal_design(toy_loss, (3, 2), 6, 2, D.AnnealSchedule(5.0, 0.05, 500),
                               np.random.default_rng(3))
    a, b = run(), run()
    assert np.array_equal(a.trace, b.trace)
    assert np.array_equal(a.best.Z, b.best.Z)


def test_kernels_never_leave_feasible_set():
    assert fuzz_kernels((4, 3), 12, 2, 50000, np.random.default_rng(1)) == 0


def test_detailed_balance_on_toy_space():
    tv = toy_chain_tv(2, T=1.0, iterations=60000, burn=1000)
    assert tv < 0.05


def test_gibbs_distribution_normalised():
    p = D.gibbs_distribution(toy_loss, (2, 1), 3, 1, 0.5)
    assert sum(p.values()) == pytest.approx(1.0)
    assert all(D.is_feasible(np.array(k), 3, 1) for k in p)
    assert D.total_variation(p, p) == 0.0
    assert D.total_variation({(0,): 1.0}, {(1,): 1.0}) == 1.0


def test_zero_design_loss_is_prior_variance(cfg, basis):
    spec = D.LossSpec("squared", "mle", 2000, 3)
    loss = D.estimate_design_loss(np.zeros((basis.m, 4), dtype=int), basis, C.priors_from(cfg),
                                  C.noise_from(cfg), spec, np.random.default_rng(0))
    assert abs(loss / PRIOR_VAR_T - 1) < 0.06


def test_zero_noise_loss_vanishes(cfg, basis):
    Z = C.design_from_entries(basis, cfg["default_design"])
    spec = D.LossSpec("squared", "mle", 500, 3)
    loss = D.estimate_design_loss(Z, basis, C.priors_from(cfg), M.NoiseParams(0.0, 1e-6), spec,
                                  np.random.default_rng(0))
    assert loss < 0.25


def test_common_random_numbers(cfg, basis):
    spec = D.LossSpec("squared", "mle", 200, 3)
    f = D.design_loss_fn(basis, C.priors_from(cfg), C.noise_from(cfg), spec, seed=4)
    Z = C.design_from_entries(basis, cfg["default_design"])
    assert f(Z) == f(Z)


def test_mixture_endpoints(cfg, basis):
    from bayestof.cli import training_scenes
    priors, noise = C.priors_from(cfg), C.noise_from(cfg)
    Z = C.design_from_entries(basis, cfg["default_design"])
    spec = D.LossSpec("squared", "mle", 200, 3)
    plain = D.estimate_design_loss(Z, basis, priors, noise, spec, np.random.default_rng(5))
    mix1 = D.mixture_design_loss(Z, basis, priors, noise, None, 1.0, spec,
                                 np.random.default_rng(5))
    assert mix1 == plain
    with pytest.raises(ValueError):
        D.mixture_design_loss(Z, basis, priors, noise, None, 0.5, spec, np.random.default_rng(5))
    with pytest.raises(ValueError):
        D.mixture_design_loss(Z, basis, priors, noise, None, 1.5, spec, np.random.default_rng(5))
    scenes = D.SceneSamples.from_scenes(training_scenes(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        scene_only = D.mixture_design_loss(Z, basis, priors, noise, scenes, 0.0, spec,
                                           np.random.default_rng(5))
    assert np.isfinite(scene_only) and scene_only > 0


def test_scene_samples_validation():
    with pytest.raises(ValueError):
        D.SceneSamples([object()], [1.0, 2.0])


def test_design_text_roundtrip():
    Z = np.array([[0, 3], [5, 0], [1, 1]])
    text = D.dumps_design(Z, ["loss 1.5"])
    assert text.startswith("# loss 1.5\n")
    assert np.array_equal(D.loads_design(text), Z)
    with pytest.raises(ValueError):
        D.loads_design("# nothing\n")
    with pytest.raises(ValueError):
        D.loads_design("1 -2\n")


@hsettings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hastings_ratio_reverses(seed):
    # perturb carries the log scale factor; zero is the exact reverse of nonzero
    rng = np.random.default_rng(seed)
    chain = D.DesignChain((3, 2), 10, 2)
    B = rng.uniform(size=(3, 2)) < 0.6
    s = D.ChainState(B, rng.uniform(0.5, 3.0, (3, 2)))
    p = chain._perturb(s, rng)
    if p is not None:
        f = p.state.V[p.state.V != s.V]
        assert p.log_hastings == pytest.approx(np.log(f[0] / s.V[p.state.V != s.V][0]))
    z = chain._zero(s, rng)
    if z is not None:
        back = np.log(z.state.B.size - z.state.B.sum()) - np.log(z.state.B.sum() + 1)
        assert z.log_hastings == pytest.approx(-back)
