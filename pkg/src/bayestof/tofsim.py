"""Responses from weighted light-path samples, plus an analytic two-bounce scene.

A path sample ``(w, L, t)`` has intensity weight ``w`` (decay included),
segment count ``L`` (2 = direct) and depth-equivalent length ``t`` (half the
total path length, cm).  The mean response of a pixel is
``tau * A + sum_i w_i / d(t_i) * C(t_i)``.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from . import model as M
from .curves import ResponseCurveSet, decay

DEFAULT_CAPACITY = 4096
DEFAULT_STRATUM_CAPACITY = 2048


@dataclass
class PathSampleSet:
    w: np.ndarray
    L: np.ndarray
    t: np.ndarray
    tau: float = 0.0
    x: int = 0
    y: int = 0

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).reshape(-1)
        self.L = np.asarray(self.L, dtype=np.int64).reshape(-1)
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        if not (self.w.size == self.L.size == self.t.size):
            raise ValueError("w, L and t must have equal length")
        if np.any(~np.isfinite(self.w)) or np.any(self.w < 0):
            raise ValueError("path weights must be finite and >= 0")
        if np.any(self.L < 2):
            raise ValueError("path segment counts must be >= 2")
        if np.any(self.t <= 0):
            raise ValueError("path lengths must be positive")
        if self.tau < 0:
            raise ValueError("ambient tau must be >= 0")

    def __len__(self):
        return self.w.size

    def subset(self, mask, w=None):
        return PathSampleSet(self.w[mask] if w is None else w, self.L[mask], self.t[mask],
                             self.tau, self.x, self.y)

    @classmethod
    def merge(cls, a, b):
        return cls(np.concatenate([a.w, b.w]), np.concatenate([a.L, b.L]),
                   np.concatenate([a.t, b.t]), a.tau, a.x, a.y)


def forward_response(samples: PathSampleSet, curves: ResponseCurveSet) -> np.ndarray:
    mu = samples.tau * curves.ambient
    if len(samples):
        mu = mu + ((samples.w / decay(samples.t))[:, None] * curves(samples.t)).sum(axis=0)
    return mu


def forward_responses(sets, curves: ResponseCurveSet) -> np.ndarray:
    """Mean responses ``(P, n)`` for many pixels in one pass."""
    sets = list(sets)
    counts = np.array([len(s) for s in sets])
    tau = np.array([s.tau for s in sets])
    mu = tau[:, None] * curves.ambient
    if counts.sum():
        w = np.concatenate([s.w for s in sets])
        t = np.concatenate([s.t for s in sets])
        owner = np.repeat(np.arange(len(sets)), counts)
        contrib = (w / decay(t))[:, None] * curves(t)
        np.add.at(mu, owner, contrib)
    return mu


def stratify(samples: PathSampleSet):
    """Split into the direct (L = 2) and multipath (L > 2) strata."""
    direct = samples.L == 2
    return samples.subset(direct), samples.subset(~direct)


def priority_sample(w, m, rng):
    """Priority sampling of ``m`` items from weights ``w``.

    Returns the kept indices and their adjusted weights ``max(w, z)`` where
    ``z`` is the ``(m+1)``-th largest priority ``w / u``, ``u ~ U(0, 1]``.
    Sums of adjusted weights over any subset are unbiased.
    """
    w = np.asarray(w, dtype=float)
    if m < 1:
        raise ValueError("capacity must be >= 1")
    if w.size <= m:
        return np.arange(w.size), w.copy()
    u = 1.0 - rng.random(w.size)
    q = w / u
    order = np.argsort(-q, kind="stable")
    keep = np.sort(order[:m])
    z = q[order[m]]
    return keep, np.maximum(w[keep], z)


class PrioritySampler:
    """Streaming priority sampler with capacity ``m``."""

    def __init__(self, m, rng):
        if m < 1:
            raise ValueError("capacity must be >= 1")
        self.m = m
        self.rng = rng
        self._heap = []  # min-heap of (priority, seq, weight, item)
        self._seq = 0

    def push(self, weight, item=None):
        q = weight / (1.0 - self.rng.random())
        entry = (q, self._seq, float(weight), item)
        self._seq += 1
        if len(self._heap) <= self.m:
            heapq.heappush(self._heap, entry)
        else:
            heapq.heappushpop(self._heap, entry)

    def result(self):
        """List of ``(item, adjusted_weight)`` in arrival order."""
        if len(self._heap) <= self.m:
            kept = sorted(self._heap, key=lambda e: e[1])
            return [(e[3], e[2]) for e in kept]
        z = self._heap[0][0]
        kept = sorted(self._heap[1:], key=lambda e: e[1])
        return [(e[3], max(e[2], z)) for e in kept]


def subsample(samples: PathSampleSet, capacity=DEFAULT_STRATUM_CAPACITY, rng=None) -> PathSampleSet:
    """Stratify, priority-sample each stratum to ``capacity`` and recombine."""
    rng = np.random.default_rng() if rng is None else rng
    parts = []
    for s in stratify(samples):
        keep, aw = priority_sample(s.w, capacity, rng)
        parts.append(s.subset(keep, aw))
    return PathSampleSet.merge(*parts)


def multipath_ratio(samples: PathSampleSet) -> float:
    """Share of decay-compensated intensity ``sum w/d(t)`` carried by L > 2 paths."""
    c = samples.w / decay(samples.t)
    total = c.sum()
    if not total > 0:
        raise ValueError("pixel has zero total path contribution")
    return float(c[samples.L > 2].sum() / total)


# -- analytic two-bounce scene ---------------------------------------------------------

@dataclass(frozen=True)
class SceneSpec:
    """Corner scene: a frontal object plane and a reflective side wall.

    The camera (co-located with the light) sits at the origin looking along
    +z.  The object is the plane ``z = object_distance``; the wall is the
    plane ``x = wall_offset``.  Pixels whose ray meets the wall first see the
    wall (direct light only); all others see the object, which also receives
    light bounced off the wall.
    """

    width: int = 32
    height: int = 24
    fov_deg: float = 74.0
    object_distance: float = 250.0
    wall_offset: float = 175.0
    object_reflectivity: float = 0.6
    wall_reflectivity: float = 0.9
    wall_gain: float = 2.0
    ambient: float = 0.2

    def __post_init__(self):
        if self.object_reflectivity < 0 or self.wall_reflectivity < 0 or self.wall_gain < 0:
            raise ValueError("reflectivities must be >= 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("pixel grid must be non-empty")

    @classmethod
    def from_config(cls, c):
        return cls(**{k: c[k] for k in cls.__dataclass_fields__ if k in c})


@dataclass
class Scene:
    spec: SceneSpec
    pixels: list
    depth: np.ndarray  # (H, W) ground-truth direct depth
    is_object: np.ndarray  # (H, W)

    @property
    def shape(self):
        return self.depth.shape

    def ratios(self):
        return np.array([multipath_ratio(p) for p in self.pixels]).reshape(self.shape)


def pixel_rays(spec: SceneSpec):
    th = np.tan(np.radians(spec.fov_deg) / 2)
    ax = th * (2 * (np.arange(spec.width) + 0.5) / spec.width - 1)
    ay = th * spec.height / spec.width * (2 * (np.arange(spec.height) + 0.5) / spec.height - 1)
    AX, AY = np.meshgrid(ax, ay)
    return AX, AY


def two_bounce_geometry(spec: SceneSpec):
    """Per-pixel direct depth, indirect depth and indirect gain arrays."""
    AX, AY = pixel_rays(spec)
    D, X = spec.object_distance, spec.wall_offset
    with np.errstate(divide="ignore"):
        z_wall = np.where(AX > 0, X / AX, np.inf)
    on_wall = z_wall < D
    z = np.where(on_wall, z_wall, D)
    P = np.stack([AX * z, AY * z, z], axis=-1)
    r = np.linalg.norm(P, axis=-1)
    # specular bounce light -> wall -> P, via the source mirrored in the wall
    mirror = np.array([2.0 * X, 0.0, 0.0])
    ell = np.linalg.norm(P - mirror, axis=-1)
    t_ind = 0.5 * (r + ell)
    # inverse-square falloff of the bounced light relative to the direct light
    gain = spec.wall_gain * spec.wall_reflectivity * (r / ell) ** 2
    gain = np.where(on_wall, 0.0, np.minimum(gain, 2.0))
    return r, t_ind, gain, ~on_wall, z / r


def gen_two_bounce_scene(spec: SceneSpec, rng=None) -> Scene:
    """Path samples with one direct and one indirect path per object pixel.

    The rng is accepted for interface symmetry; the geometry is deterministic.
    """
    r, t_ind, gain, obj, cos_view = two_bounce_geometry(spec)
    pixels = []
    for yy in range(spec.height):
        for xx in range(spec.width):
            if obj[yy, xx]:
                rho = spec.object_reflectivity * cos_view[yy, xx]
                w = [rho * decay(r[yy, xx]), rho * gain[yy, xx] * decay(t_ind[yy, xx])]
                L = [2, 3]
                t = [r[yy, xx], t_ind[yy, xx]]
            else:
                rho = spec.wall_reflectivity * cos_view[yy, xx]
                w, L, t = [rho * decay(r[yy, xx])], [2], [r[yy, xx]]
            pixels.append(PathSampleSet(np.array(w, dtype=float), L, t, spec.ambient * rho, xx, yy))
    return Scene(spec, pixels, r, obj)


def scene_responses(scene_pixels, curves, noise, rng):
    mu = forward_responses(scene_pixels, curves)
    return mu + np.sqrt(M._variance(mu, noise)) * rng.standard_normal(mu.shape)


def error_quantiles(err):
    err = np.asarray(err, dtype=float)
    if err.size == 0:
        raise ValueError("no errors to summarise")
    q = np.percentile(np.abs(err), [25, 50, 75])
    return {"q25": float(q[0]), "q50": float(q[1]), "q75": float(q[2])}


@dataclass
class BenchmarkResult:
    scene_shape: tuple
    truth: np.ndarray
    estimates: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    table: dict = field(default_factory=dict)

    def maps(self, key):
        est = self.estimates[key]
        h, w = self.scene_shape
        return {"t_hat": est.theta[:, 0].reshape(h, w),
                "error": self.errors[key].reshape(h, w),
                "sigma": est.sigma_t.reshape(h, w),
                "gamma": est.gamma.reshape(h, w)}


def scene_benchmark(scene: Scene, curves, noise, priors, methods=("bayes",), kinds=(M.SP, M.TP),
                    rng=None, settings=inf.DEFAULT_SETTINGS, R=None, mask=None) -> BenchmarkResult:
    """Noisy responses of a scene, inferred with every (kind, method) pair."""
    rng = np.random.default_rng() if rng is None else rng
    if R is None:
        R = scene_responses(scene.pixels, curves, noise, rng)
    truth = scene.depth.reshape(-1)
    res = BenchmarkResult(scene.shape, truth)
    sel = np.ones(truth.size, dtype=bool) if mask is None else np.asarray(mask).reshape(-1)
    for kind in kinds:
        for method in methods:
            key = f"{kind}-{method}"
            est = inf.batch_infer(R, curves, noise, priors, kind, method, rng, settings)
            res.estimates[key] = est
            res.errors[key] = est.theta[:, 0] - truth
            res.table[key] = error_quantiles(res.errors[key][sel])
    return res


# -- file formats ----------------------------------------------------------------------------

def dumps_path_samples(pixels, header_lines=()) -> str:
    lines = [f"# {h}" for h in header_lines]
    for p in pixels:
        lines.append(f"pixel {int(p.x)} {int(p.y)} {float(p.tau)!r} {len(p)}")
        for w, L, t in zip(p.w.tolist(), p.L.tolist(), p.t.tolist()):
            lines.append(f"{w!r} {L} {t!r}")
    return "\n".join(lines) + "\n"


def loads_path_samples(text: str):
    pixels = []
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    i = 0
    while i < len(lines):
        head = lines[i].split()
        if head[0] != "pixel" or len(head) != 5:
            raise ValueError(f"malformed pixel header: {lines[i]!r}")
        x, y, tau, count = int(head[1]), int(head[2]), float(head[3]), int(head[4])
        rows = [ln.split() for ln in lines[i + 1:i + 1 + count]]
        if len(rows) != count:
            raise ValueError("truncated path-sample block")
        w = np.array([float(r[0]) for r in rows])
        L = np.array([int(r[1]) for r in rows], dtype=np.int64)
        t = np.array([float(r[2]) for r in rows])
        pixels.append(PathSampleSet(w, L, t, tau, x, y))
        i += 1 + count
    return pixels


def write_path_samples(path, pixels, header_lines=()):
    with open(path, "w") as fh:
        fh.write(dumps_path_samples(pixels, header_lines))


def read_path_samples(path):
    with open(path) as fh:
        return loads_path_samples(fh.read())


def dumps_map(values, quantity, units, extra=""):
    values = np.asarray(values, dtype=float)
    h, w = values.shape
    head = f"# width={w} height={h} quantity={quantity} units={units}"
    if extra:
        head += " " + extra
    rows = [",".join(repr(float(v)) for v in row) for row in values]
    return head + "\n" + "\n".join(rows) + "\n"


def loads_map(text):
    lines = text.splitlines()
    fields = dict(tok.split("=", 1) for tok in lines[0][1:].split() if "=" in tok)
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
    if vals.shape != (int(fields["height"]), int(fields["width"])):
        raise ValueError("map body does not match header")
    return vals, fields
