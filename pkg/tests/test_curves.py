import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayestof import curves as cv

PULSE = cv.PulseProfile.trapezoid(1.5, 5.0, 3.0, 2.0, 0.05)

# basis entries d(t) * int_B P(u - t/c) du from adaptive quadrature of the
# analytic trapezoid (rise 1.5, plateau 5, fall 3, amplitude 2)
QUAD_ORACLE = [
    (0.0, 8.0, 60.0, 0.0018040171431234306),
    (10.0, 20.0, 150.0, 0.0006444444444444444),
    (24.0, 32.0, 300.0, 8.919657137531382e-05),
    (20.0, 8.0, 333.3, 9.028116878458653e-05),
    (30.0, 4.0, 449.7, 3.2134142628114405e-05),
    (44.0, 4.0, 600.0, 2.0215099496651734e-05),
]


def test_basis_matches_quadrature_oracle():
    cat = [cv.BoxcarElement(d, w) for d, w, _, _ in QUAD_ORACLE]
    t = np.array([row[2] for row in QUAD_ORACLE])
    Q = cv.boxcar_basis_matrix(cat, PULSE, t)
    want = np.array([row[3] for row in QUAD_ORACLE])
    assert np.allclose(np.diag(Q), want, rtol=1e-12, atol=0)


def test_trapezoid_area_and_duration():
    assert PULSE.duration == pytest.approx(9.5)
    assert PULSE.cumulative(100.0) == pytest.approx(2.0 * (0.75 + 5.0 + 1.5), rel=1e-12)
    tri = cv.PulseProfile.trapezoid(1.5, 0.0, 3.0, 1.0, 0.05)
    assert tri.duration == pytest.approx(4.5)
    assert tri.cumulative(10.0) == pytest.approx(2.25, rel=1e-12)


def test_zero_width_boxcar_gives_zero_column():
    Q = cv.boxcar_basis_matrix([cv.BoxcarElement(5.0, 0.0)], PULSE, np.linspace(50, 650, 61))
    assert np.all(Q == 0)


def test_doubling_pulse_doubles_basis():
    cat = cv.boxcar_catalog([0, 8, 16], [4, 16])
    grid = np.linspace(50, 650, 301)
    Q1 = cv.boxcar_basis_matrix(cat, PULSE, grid)
    Q2 = cv.boxcar_basis_matrix(cat, PULSE.scaled(2.0), grid)
    assert np.array_equal(Q2, 2.0 * Q1)
    assert np.all(Q1 >= 0)


def test_rectangular_pulse_full_window_decay_law():
    pulse = cv.PulseProfile.rectangular(1.0)
    grid = np.linspace(60, 600, 200)
    Q = cv.boxcar_basis_matrix([cv.BoxcarElement(0.0, 60.0)], pulse, grid)[:, 0]
    comp = Q * grid**2
    assert np.ptp(comp) <= 1e-12 * comp.max()
    assert comp[0] == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("grid", [[0.0, 1.0, 2.0], [-1.0, 5.0], [3.0, 2.0, 4.0]])
def test_bad_grids_rejected(grid):
    with pytest.raises(ValueError):
        cv.boxcar_basis_matrix([cv.BoxcarElement(0, 4)], PULSE, np.array(grid))


def test_empty_catalog_rejected():
    with pytest.raises(ValueError):
        cv.boxcar_basis_matrix([], PULSE, np.linspace(50, 60, 3))


@pytest.fixture(scope="module")
def basis():
    cat = cv.boxcar_catalog([0, 8, 16, 24], [8, 16, 32])
    return cv.BasisSet.build(cat, PULSE, np.arange(50.0, 651.0, 1.0), ambient_gain=1.0)


def test_compose_zero_design(basis):
    curves = cv.compose_curves(basis, np.zeros((basis.m, 3), dtype=int))
    t = np.linspace(60, 640, 50)
    assert np.all(curves(t) == 0)
    assert np.all(curves.ambient == 0)


def test_compose_unit_and_scaled_entries(basis):
    j = 5
    Z = np.zeros((basis.m, 2), dtype=int)
    Z[j, 1] = 1
    c1 = cv.compose_curves(basis, Z)
    Z[j, 1] = 2
    c2 = cv.compose_curves(basis, Z)
    g = basis.grid
    assert np.all(c1(g)[:, 0] == 0)
    scale = np.max(basis.Q[:, j])
    assert np.max(np.abs(c1(g)[:, 1] - basis.Q[:, j])) <= max(c1.fit_error, 1e-9 * scale)
    assert np.allclose(c2(g), 2.0 * c1(g), rtol=1e-12, atol=1e-15 * scale)
    assert c1.ambient[1] == pytest.approx(basis.areas[j])
    assert c2.ambient[1] == pytest.approx(2 * basis.areas[j])


def test_compose_dimension_mismatch(basis):
    with pytest.raises(ValueError):
        cv.compose_curves(basis, np.ones((basis.m + 1, 2), dtype=int))


def test_chebyshev_reproduces_polynomials():
    rng = np.random.default_rng(3)
    t = np.linspace(50, 650, 400)
    x = (2 * t - 700) / 600
    coef = rng.normal(size=(17, 2))
    vals = np.polynomial.chebyshev.chebval(x, coef).T
    fit = cv.fit_chebyshev(t, vals, 16, (50, 650))
    assert fit.max_error < 1e-12 * np.abs(vals).max()


def test_chebyshev_needs_enough_samples():
    with pytest.raises(ValueError):
        cv.fit_chebyshev(np.linspace(0, 1, 16), np.zeros(16), 16)


def test_curve_evaluation_out_of_range(curves):
    lo, hi = curves.valid_range
    for t in (lo - 1.0, hi + 1.0, np.nan):
        with pytest.raises(cv.CurveRangeError):
            curves(np.array([t]))


def test_curve_derivatives_finite_differences(curves):
    rng = np.random.default_rng(4)
    lo, hi = curves.valid_range
    t = rng.uniform(lo + 1, hi - 1, 100)
    c, d1, d2 = curves.derivatives(t)
    h = 1e-3
    fd1 = (curves(t + h) - curves(t - h)) / (2 * h)
    fd2 = (curves(t + h) - 2 * c + curves(t - h)) / h**2
    s1 = np.max(np.abs(d1))
    assert np.max(np.abs(fd1 - d1)) / s1 < 1e-5
    assert np.max(np.abs(fd2 - d2)) / np.max(np.abs(d2)) < 1e-3


def test_default_curves_fit_and_ambient(curves):
    assert curves.n == 4 and curves.degree == 16
    assert np.all(curves.ambient >= 0)
    assert curves.fit_error > 0


def test_curve_file_roundtrip(curves):
    back = cv.loads_curves(cv.dumps_curves(curves))
    t = np.linspace(50, 650, 97)
    assert np.array_equal(back(t), curves(t))
    assert np.array_equal(back.ambient, curves.ambient)
    with pytest.raises(ValueError):
        cv.loads_curves("garbage\n")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 1.9), st.floats(0.0, 1.0))
def test_interpolation_is_affine(s, u):
    a = cv.PulseProfile.trapezoid(1.0, 2.0, 3.0, 1.0, 0.05)
    basis = cv.BasisSet.build(cv.boxcar_catalog([0, 10], [8, 16]), a, np.arange(50.0, 651.0, 2.0))
    Z1 = np.array([[1, 0], [0, 2], [1, 0], [0, 1]])
    Z2 = np.array([[0, 1], [2, 0], [0, 1], [1, 0]])
    c1, c2 = cv.compose_curves(basis, Z1), cv.compose_curves(basis, Z2)
    mix = cv.interpolate_curves(c1, c2, u)
    t = np.array([100.0, 250.0, 400.0 + 100 * s])
    want = (1 - u) * c1(t) + u * c2(t)
    assert np.allclose(mix(t), want, rtol=1e-10, atol=1e-18)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0))
def test_homogeneity_property(c):
    grid = np.linspace(50, 650, 61)
    cat = cv.boxcar_catalog([0, 12], [8, 32])
    Q1 = cv.boxcar_basis_matrix(cat, PULSE, grid)
    Qc = cv.boxcar_basis_matrix(cat, PULSE.scaled(c), grid)
    assert np.allclose(Qc, c * Q1, rtol=1e-12, atol=0)
