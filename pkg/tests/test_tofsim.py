import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from bayestof import model as M
from bayestof import tofsim as S
from bayestof.curves import decay


def test_single_direct_path_matches_model(curves):
    t, rho = 240.0, 0.7
    px = S.PathSampleSet([rho * decay(t)], [2], [t], tau=rho * 0.3)
    assert np.allclose(S.forward_response(px, curves), M.mean_response(curves, [t, rho, 0.3]),
                       rtol=1e-12)


def test_two_paths_match_two_path_model(curves):
    px = S.PathSampleSet([0.8 * decay(150.0), 0.8 * 0.5 * decay(260.0)], [2, 3], [150.0, 260.0],
                         tau=0.8 * 0.3)
    want = M.mean_response(curves, [150.0, 0.8, 0.3, 260.0, 0.5])
    assert np.allclose(S.forward_response(px, curves), want, rtol=1e-12)


def test_empty_pixel_is_ambient_only(curves):
    px = S.PathSampleSet([], [], [], tau=0.5)
    assert np.array_equal(S.forward_response(px, curves), 0.5 * curves.ambient)


def test_batched_forward_matches_single(curves):
    rng = np.random.default_rng(0)
    pix = [S.PathSampleSet(rng.uniform(0, 1e-4, k), rng.integers(2, 5, k), rng.uniform(60, 600, k),
                           rng.uniform(0, 1)) for k in (0, 1, 5, 3)]
    many = S.forward_responses(pix, curves)
    for i, p in enumerate(pix):
        assert np.allclose(many[i], S.forward_response(p, curves), rtol=1e-12, atol=1e-15)


def test_path_sample_validation():
    with pytest.raises(ValueError):
        S.PathSampleSet([1.0], [1], [100.0])
    with pytest.raises(ValueError):
        S.PathSampleSet([-1.0], [2], [100.0])
    with pytest.raises(ValueError):
        S.PathSampleSet([1.0], [2], [0.0])
    with pytest.raises(ValueError):
        S.PathSampleSet([1.0, 2.0], [2], [100.0])


def test_stratify_partitions():
    px = S.PathSampleSet([1, 2, 3, 4.0], [2, 3, 2, 5], [100, 110, 120, 130.0])
    direct, multi = S.stratify(px)
    assert np.array_equal(direct.w, [1, 3]) and np.array_equal(multi.w, [2, 4])


def test_priority_sample_keeps_all_when_capacity_suffices():
    w = np.array([0.5, 2.0, 1.0])
    keep, aw = S.priority_sample(w, 3, np.random.default_rng(0))
    assert np.array_equal(keep, [0, 1, 2]) and np.array_equal(aw, w)
    with pytest.raises(ValueError):
        S.priority_sample(w, 0, np.random.default_rng(0))


def test_priority_sample_two_items_keep_probability():
    # P(item with weight 3 beats weight 1) = 1 - 1 / (2 * 3)
    want = 5.0 / 6.0
    rng = np.random.default_rng(1)
    runs = 60000
    kept0 = sum(S.priority_sample([3.0, 1.0], 1, rng)[0][0] == 0 for _ in range(runs))
    u = 1.0 - np.random.default_rng(2).random((runs, 2))
    brute = np.mean(3.0 / u[:, 0] > 1.0 / u[:, 1])
    se = np.sqrt(want * (1 - want) / runs)
    assert abs(kept0 / runs - want) < 4 * se
    assert abs(brute - want) < 4 * se


def test_priority_sample_unbiased_subset_sums():
    rng = np.random.default_rng(3)
    w = rng.exponential(size=40) ** 2
    subset = np.arange(40) % 3 == 0
    sums = []
    for _ in range(20000):
        keep, aw = S.priority_sample(w, 8, rng)
        sums.append(aw[subset[keep]].sum())
    sums = np.array(sums)
    se = sums.std() / np.sqrt(sums.size)
    assert abs(sums.mean() - w[subset].sum()) < 3.5 * se


def test_streaming_sampler_matches_batch_law():
    rng = np.random.default_rng(4)
    w = [3.0, 1.0, 0.5, 2.0]
    totals = []
    for _ in range(20000):
        s = S.PrioritySampler(2, rng)
        for i, x in enumerate(w):
            s.push(x, i)
        res = s.result()
        assert len(res) == 2
        assert [i for i, _ in res] == sorted(i for i, _ in res)
        totals.append(sum(a for _, a in res))
    totals = np.array(totals)
    assert abs(totals.mean() - sum(w)) < 3.5 * totals.std() / np.sqrt(totals.size)
    small = S.PrioritySampler(5, rng)
    for i, x in enumerate(w):
        small.push(x, i)
    assert small.result() == [(i, x) for i, x in enumerate(w)]


def test_subsample_caps_each_stratum():
    rng = np.random.default_rng(5)
    px = S.PathSampleSet(rng.uniform(0, 1, 100), np.r_[np.full(30, 2), np.full(70, 3)],
                         rng.uniform(60, 600, 100), 0.2, 3, 4)
    sub = S.subsample(px, 10, rng)
    assert len(sub) == 20 and np.sum(sub.L == 2) == 10
    assert (sub.x, sub.y, sub.tau) == (3, 4, 0.2)


def test_multipath_ratio_cases():
    assert S.multipath_ratio(S.PathSampleSet([1.0], [2], [100.0])) == 0.0
    assert S.multipath_ratio(S.PathSampleSet([1.0], [4], [100.0])) == 1.0
    t = np.array([100.0, 300.0])
    half = S.PathSampleSet(decay(t), [2, 3], t)
    assert S.multipath_ratio(half) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        S.multipath_ratio(S.PathSampleSet([0.0], [2], [100.0]))


def test_geometry_indirect_longer_than_direct():
    r, t_ind, gain, obj, cos_view = S.two_bounce_geometry(S.SceneSpec())
    assert np.all(t_ind[obj] > r[obj])
    assert np.all(gain[~obj] == 0)
    assert np.all((cos_view > 0) & (cos_view <= 1))
    assert obj.any() and (~obj).any()


def test_wall_reflectivity_controls_multipath():
    ratios = [S.gen_two_bounce_scene(S.SceneSpec(12, 9, wall_reflectivity=v)).ratios()
              for v in (0.0, 0.3, 0.9)]
    obj = S.two_bounce_geometry(S.SceneSpec(12, 9))[3]
    assert np.all(ratios[0] == 0)
    assert np.all(ratios[1][obj] > ratios[0][obj])
    assert np.all(ratios[2][obj] > ratios[1][obj])


def test_zero_wall_gives_unbiased_depth(curves, priors, settings):
    scene = S.gen_two_bounce_scene(S.SceneSpec(8, 6, wall_reflectivity=0.0))
    res = S.scene_benchmark(scene, curves, M.NoiseParams(0.0, 1e-6), priors, ("mle",), (M.SP,),
                            np.random.default_rng(6), settings)
    assert np.max(np.abs(res.errors["sp-mle"])) < 0.5


def test_error_quantiles_monotone():
    q = S.error_quantiles(np.random.default_rng(7).normal(size=500))
    assert q["q25"] <= q["q50"] <= q["q75"]
    assert S.error_quantiles([-4.0])["q50"] == 4.0
    with pytest.raises(ValueError):
        S.error_quantiles([])


def test_path_file_roundtrip(tmp_path):
    scene = S.gen_two_bounce_scene(S.SceneSpec(5, 4))
    path = tmp_path / "paths.txt"
    S.write_path_samples(path, scene.pixels, ["scene test"])
    back = S.read_path_samples(path)
    assert len(back) == len(scene.pixels)
    for a, b in zip(back, scene.pixels):
        assert np.array_equal(a.w, b.w) and np.array_equal(a.t, b.t)
        assert np.array_equal(a.L, b.L) and (a.x, a.y, a.tau) == (b.x, b.y, b.tau)
    with pytest.raises(ValueError):
        S.loads_path_samples("pixel 0 0 0.0 3\n1.0 2 100.0\n")


def test_map_roundtrip():
    v = np.arange(12.0).reshape(3, 4) / 7
    vals, fields = S.loads_map(S.dumps_map(v, "depth", "cm"))
    assert np.array_equal(vals, v)
    assert fields["quantity"] == "depth" and fields["units"] == "cm"


@hsettings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(1e-6, 1e-3), st.integers(2, 5), st.floats(60.0, 600.0)),
                min_size=1, max_size=6),
       st.lists(st.tuples(st.floats(1e-6, 1e-3), st.integers(2, 5), st.floats(60.0, 600.0)),
                min_size=1, max_size=6))
def test_forward_model_is_additive(a, b):
    from bayestof.config import default_curves
    curves = default_curves()
    pa = S.PathSampleSet(*map(np.array, zip(*a)), tau=0.1)
    pb = S.PathSampleSet(*map(np.array, zip(*b)), tau=0.0)
    merged = S.PathSampleSet.merge(pa, pb)
    want = S.forward_response(pa, curves) + S.forward_response(pb, curves)
    assert np.allclose(S.forward_response(merged, curves), want, rtol=1e-10)
