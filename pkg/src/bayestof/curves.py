"""Response curves: pulse/shutter basis responses, composition and Chebyshev fits.

Depth is expressed in centimetres of one-way distance.  A depth ``t`` maps to
a round-trip delay of ``t / CM_PER_NS`` nanoseconds.  The distance decay is
``d(t) = 1 / t**2`` in these units.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import chebyshev as cheb

# centimetres of depth per nanosecond of round-trip time (c / 2)
CM_PER_NS = 14.9896229

DEFAULT_DEGREE = 16
DEFAULT_VALID_RANGE = (50.0, 650.0)


class CurveRangeError(ValueError):
    """Raised when a curve is evaluated outside its valid depth range."""


def decay(t):
    """Distance decay ``d(t) = 1/t^2``."""
    t = np.asarray(t, dtype=float)
    return 1.0 / (t * t)


@dataclass(frozen=True)
class PulseProfile:
    """Emitted pulse intensity sampled on a uniform time grid starting at 0 ns.

    The pulse is the piecewise-linear interpolant of ``samples`` and is zero
    outside ``[0, (len(samples) - 1) * grid_step]``.
    """

    samples: np.ndarray
    grid_step: float

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("pulse needs at least two samples")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise ValueError("pulse intensities must be finite and >= 0")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def trapezoid(cls, rise=1.5, plateau=5.0, fall=3.0, amplitude=1.0, grid_step=0.05):
        """Trapezoidal pulse; breakpoints are snapped to the grid."""
        k_rise = max(int(round(rise / grid_step)), 0)
        k_flat = max(int(round(plateau / grid_step)), 0)
        k_fall = max(int(round(fall / grid_step)), 0)
        up = np.linspace(0.0, 1.0, k_rise + 1)
        down = np.linspace(1.0, 0.0, k_fall + 1)
        # the last rise and first fall samples are plateau endpoints themselves
        if k_flat:
            samples = np.concatenate([up, np.ones(k_flat - 1), down])
        else:
            samples = np.concatenate([up, down[1:]])
        samples = samples * amplitude
        return cls(samples, grid_step)

    @classmethod
    def rectangular(cls, width, amplitude=1.0, grid_step=0.05):
        k = int(round(width / grid_step))
        samples = np.full(k + 1, float(amplitude))
        return cls(samples, grid_step)

    @property
    def duration(self):
        return (self.samples.size - 1) * self.grid_step

    def scaled(self, factor):
        return PulseProfile(self.samples * factor, self.grid_step)

    def cumulative(self, s):
        """Integral of the pulse from 0 to ``s`` (exact for the linear interpolant)."""
        s = np.asarray(s, dtype=float)
        h = self.grid_step
        p = self.samples
        cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (p[1:] + p[:-1]))])
        x = np.clip(s / h, 0.0, p.size - 1)
        k = np.minimum(np.floor(x).astype(int), p.size - 2)
        f = x - k
        return cum[k] + h * (p[k] * f + 0.5 * (p[k + 1] - p[k]) * f * f)


@dataclass(frozen=True)
class BoxcarElement:
    """Unit-gain shutter window open on ``[delay, delay + width]`` (ns)."""

    delay: float
    width: float

    def __post_init__(self):
        if self.delay < 0 or self.width < 0:
            raise ValueError("boxcar delay and width must be non-negative")


def boxcar_catalog(delays: Sequence[float], widths: Sequence[float]) -> list[BoxcarElement]:
    """Cartesian catalog of boxcar elements, delay-major order."""
    return [BoxcarElement(float(d), float(w)) for d in delays for w in widths]


def boxcar_basis_matrix(catalog, pulse: PulseProfile, grid) -> np.ndarray:
    """Basis response matrix ``Q`` (T x m) for every catalog element.

    Column ``j`` is ``d(t) * integral B_j(u) P(u - tau(t)) du`` evaluated on the
    depth grid.
    """
    catalog = list(catalog)
    if not catalog:
        raise ValueError("empty boxcar catalog")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("depth grid must be one-dimensional with >= 2 points")
    if np.any(grid <= 0):
        raise ValueError("depth grid must be strictly positive (decay is singular at 0)")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("depth grid must be strictly increasing")
    tau = grid / CM_PER_NS
    delays = np.array([b.delay for b in catalog])
    widths = np.array([b.width for b in catalog])
    lo = delays[None, :] - tau[:, None]
    hi = lo + widths[None, :]
    overlap = pulse.cumulative(hi) - pulse.cumulative(lo)
    return np.maximum(overlap, 0.0) * decay(grid)[:, None]


@dataclass(frozen=True)
class BasisSet:
    """Catalog, depth grid and the matching basis responses."""

    catalog: tuple
    grid: np.ndarray
    Q: np.ndarray
    areas: np.ndarray

    @classmethod
    def build(cls, catalog, pulse, grid, ambient_gain=1.0):
        catalog = tuple(catalog)
        grid = np.asarray(grid, dtype=float)
        Q = boxcar_basis_matrix(catalog, pulse, grid)
        areas = ambient_gain * np.array([b.width for b in catalog])
        return cls(catalog, grid, Q, areas)

    @property
    def m(self):
        return self.Q.shape[1]


class ChebyshevFit:
    """Chebyshev approximant on a closed interval with derivative evaluation.

    ``coef`` may be 1-D (scalar function) or 2-D with one column per channel.
    """

    def __init__(self, coef, domain, max_error=0.0):
        self.coef = np.asarray(coef, dtype=float)
        self.domain = (float(domain[0]), float(domain[1]))
        self.max_error = float(max_error)
        self._d1 = cheb.chebder(self.coef, 1, scl=self._scale)
        self._d2 = cheb.chebder(self.coef, 2, scl=self._scale)

    @property
    def _scale(self):
        a, b = self.domain
        return 2.0 / (b - a)

    @property
    def degree(self):
        return self.coef.shape[0] - 1

    def _map(self, t):
        t = np.asarray(t, dtype=float)
        a, b = self.domain
        if np.any(t < a) or np.any(t > b) or np.any(np.isnan(t)):
            raise CurveRangeError(f"t outside valid range [{a}, {b}]")
        return (2.0 * t - (a + b)) / (b - a)

    def _eval(self, c, x):
        out = cheb.chebval(x, c)
        # chebval puts the channel axis first for 2-D coefficients
        return np.moveaxis(out, 0, -1) if c.ndim == 2 else out

    def __call__(self, t):
        return self._eval(self.coef, self._map(t))

    def derivatives(self, t):
        """Value, first and second derivative at ``t``."""
        x = self._map(t)
        return self._eval(self.coef, x), self._eval(self._d1, x), self._eval(self._d2, x)


def fit_chebyshev(t, values, degree=DEFAULT_DEGREE, domain=None) -> ChebyshevFit:
    """Least-squares Chebyshev fit of ``values`` sampled at ``t``.

    ``values`` may carry a trailing channel axis.  The fit's maximum absolute
    error on the samples is stored as ``max_error``.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.size < degree + 1:
        raise ValueError(f"need at least {degree + 1} samples for degree {degree}, got {t.size}")
    if domain is None:
        domain = (t.min(), t.max())
    a, b = float(domain[0]), float(domain[1])
    x = (2.0 * t - (a + b)) / (b - a)
    coef = cheb.chebfit(x, values, degree)
    fit = ChebyshevFit(coef, (a, b))
    fit.max_error = float(np.max(np.abs(fit(t) - values)))
    return fit


@dataclass(frozen=True)
class ResponseCurveSet:
    """n response curves ``C(t)`` plus the ambient direction ``A``.

    Curves are stored as Chebyshev coefficients of the decay-compensated
    response ``t^2 C(t)``; evaluation divides the decay back in.
    """

    coef: np.ndarray  # (degree + 1, n)
    ambient: np.ndarray  # (n,)
    valid_range: tuple
    cm_per_ns: float = CM_PER_NS
    fit_error: float = 0.0
    _fit: ChebyshevFit = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coef = np.array(self.coef, dtype=float)
        if coef.ndim == 1:
            coef = coef[:, None]
        amb = np.array(self.ambient, dtype=float).reshape(-1)
        if amb.size != coef.shape[1]:
            raise ValueError("ambient length must equal channel count")
        if np.any(amb < 0):
            raise ValueError("ambient direction must be non-negative")
        lo, hi = float(self.valid_range[0]), float(self.valid_range[1])
        if not 0 < lo < hi:
            raise ValueError("valid_range must satisfy 0 < t_min < t_max")
        coef.setflags(write=False)
        amb.setflags(write=False)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "ambient", amb)
        object.__setattr__(self, "valid_range", (lo, hi))
        object.__setattr__(self, "_fit", ChebyshevFit(coef, (lo, hi)))

    @property
    def n(self):
        return self.coef.shape[1]

    @property
    def degree(self):
        return self.coef.shape[0] - 1

    def __call__(self, t):
        """``C(t)`` with shape ``t.shape + (n,)``."""
        t = np.asarray(t, dtype=float)
        g = self._fit(t)
        return g / (t * t)[..., None]

    def derivatives(self, t):
        """``C``, ``dC/dt`` and ``d2C/dt2`` at ``t``, each ``t.shape + (n,)``."""
        t = np.asarray(t, dtype=float)
        g, g1, g2 = self._fit.derivatives(t)
        inv = (1.0 / t)[..., None]
        inv2 = inv * inv
        c = g * inv2
        c1 = g1 * inv2 - 2.0 * g * inv2 * inv
        c2 = g2 * inv2 - 4.0 * g1 * inv2 * inv + 6.0 * g * inv2 * inv2
        return c, c1, c2

    def scaled(self, factor):
        return ResponseCurveSet(self.coef * factor, self.ambient * factor, self.valid_range,
                                self.cm_per_ns, self.fit_error * factor)


def interpolate_curves(a: ResponseCurveSet, b: ResponseCurveSet, s: float) -> ResponseCurveSet:
    """Linear blend ``(1 - s) * a + s * b`` of two compatible curve sets."""
    if a.coef.shape != b.coef.shape or a.valid_range != b.valid_range:
        raise ValueError("curve sets are not compatible")
    return ResponseCurveSet((1 - s) * a.coef + s * b.coef, (1 - s) * a.ambient + s * b.ambient,
                            a.valid_range, a.cm_per_ns, max(a.fit_error, b.fit_error))


def fit_curve_set(grid, C, ambient, degree=DEFAULT_DEGREE, valid_range=None) -> ResponseCurveSet:
    """Fit a ResponseCurveSet to curve samples ``C`` (T x n) on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    C = np.asarray(C, dtype=float)
    if valid_range is None:
        valid_range = (grid[0], grid[-1])
    fit = fit_chebyshev(grid, C * (grid * grid)[:, None], degree, valid_range)
    curves = ResponseCurveSet(fit.coef, ambient, valid_range)
    err = float(np.max(np.abs(curves(grid) - C)))
    return ResponseCurveSet(fit.coef, ambient, valid_range, fit_error=err)


def compose_curves(basis: BasisSet, Z, degree=DEFAULT_DEGREE, valid_range=None) -> ResponseCurveSet:
    """Curves ``C = Q Z`` with ambient ``A_k = sum_j Z_jk * area_j``."""
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] != basis.m:
        raise ValueError(f"design matrix must have {basis.m} rows, got shape {Z.shape}")
    if np.any(Z < 0):
        raise ValueError("design matrix entries must be non-negative")
    C = basis.Q @ Z
    A = basis.areas @ Z
    return fit_curve_set(basis.grid, C, A, degree, valid_range)


# -- curve file ------------------------------------------------------------

_MAGIC = "# bayestof response curves v1"


def _fmt(x):
    return repr(float(x))


def dumps_curves(curves: ResponseCurveSet) -> str:
    lines = [
        _MAGIC,
        f"n: {curves.n}",
        f"degree: {curves.degree}",
        f"valid_range: {_fmt(curves.valid_range[0])} {_fmt(curves.valid_range[1])}",
        f"cm_per_ns: {_fmt(curves.cm_per_ns)}",
        "storage: decay_compensated",
        "ambient_gain: 1.0",
        f"fit_error: {_fmt(curves.fit_error)}",
        "ambient: " + " ".join(_fmt(a) for a in curves.ambient),
    ]
    for k in range(curves.n):
        lines.append(" ".join(_fmt(c) for c in curves.coef[:, k]))
    return "\n".join(lines) + "\n"


def loads_curves(text: str) -> ResponseCurveSet:
    lines = text.splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError("not a bayestof curve file")
    header = {}
    i = 1
    while i < len(lines) and ":" in lines[i]:
        key, val = lines[i].split(":", 1)
        header[key.strip()] = val.strip()
        i += 1
    n = int(header["n"])
    degree = int(header["degree"])
    lo, hi = (float(v) for v in header["valid_range"].split())
    ambient = np.array([float(v) for v in header["ambient"].split()])
    rows = [np.array([float(v) for v in ln.split()]) for ln in lines[i:i + n]]
    if len(rows) != n or any(r.size != degree + 1 for r in rows):
        raise ValueError("curve file body does not match header")
    return ResponseCurveSet(np.stack(rows, axis=1), ambient, (lo, hi),
                            float(header["cm_per_ns"]), float(header.get("fit_error", 0.0)))


def write_curves(path, curves: ResponseCurveSet):
    with open(path, "w") as fh:
        fh.write(dumps_curves(curves))


def read_curves(path) -> ResponseCurveSet:
    with open(path) as fh:
        return loads_curves(fh.read())
