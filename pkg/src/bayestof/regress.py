"""Regression trees that compile slow per-pixel inference into fast lookups.

Trees split on single features (``R_i <= a``) with the CART variance
criterion and hold polynomial leaf models: constant, linear or quadratic in
the responses, optionally with linear terms in the pixel coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inference as inf
from . import model as M
from .curves import ResponseCurveSet, interpolate_curves

LABELS = ("t", "rho", "lam", "sigma", "gamma")
LEAF_KINDS = ("constant", "linear", "quadratic")
EXACT_SPLIT_LIMIT = 4096
QUANTILE_CANDIDATES = 256
OCCUPANCY_FACTOR = 4


# -- training data ------------------------------------------------------------------

@dataclass
class TrainingSet:
    X: np.ndarray  # (N, n) responses, plus (x, y) columns when pixel-extended
    labels: np.ndarray  # (N, 5) estimator outputs, columns LABELS
    truth: np.ndarray  # (N, 3) imaging conditions the responses were drawn from
    n_channels: int
    pixel_extended: bool = False
    n_failed: int = 0

    def __len__(self):
        return self.X.shape[0]

    def label(self, name):
        return self.labels[:, LABELS.index(name)]


class PixelCurveFamily:
    """Per-pixel curves blended linearly between a left and a right curve set."""

    def __init__(self, left: ResponseCurveSet, right: ResponseCurveSet, width, height):
        self.left, self.right = left, right
        self.width, self.height = int(width), int(height)
        self._cache = {}

    def at(self, x) -> ResponseCurveSet:
        x = int(x)
        if x not in self._cache:
            s = x / max(self.width - 1, 1)
            self._cache[x] = interpolate_curves(self.left, self.right, s)
        return self._cache[x]


def _labels_from(est: inf.Estimates):
    return np.column_stack([est.theta[:, 0], est.theta[:, 1], est.theta[:, 2], est.sigma_t,
                            est.gamma])


def label_responses(R, curves, noise, priors, method="mle", rng=None,
                    settings=inf.DEFAULT_SETTINGS, chunk=20000):
    """Slow-inference labels for responses ``R``; failed rows are NaN."""
    out = np.full((R.shape[0], len(LABELS)), np.nan)
    for s in range(0, R.shape[0], chunk):
        est = inf.batch_infer(R[s:s + chunk], curves, noise, priors, M.SP, method, rng, settings)
        lab = _labels_from(est)
        bad = est.n_converged == 0
        if est.flagged is not None:
            bad |= est.flagged
        lab[bad] = np.nan
        out[s:s + chunk] = lab
    return out


def generate_training_set(curves, noise, priors, count, rng, method="mle",
                          settings=inf.DEFAULT_SETTINGS, family: PixelCurveFamily | None = None):
    """Draw imaging conditions from the prior, simulate, and label by slow inference.

    Rows whose inference failed (no converged restart, flagged posterior or a
    non-finite output) are dropped and counted in ``n_failed``.
    """
    theta = priors.sample(rng, count, M.SP)
    if family is None:
        R = M.batch_sample(curves, theta, noise, rng)
        labels = label_responses(R, curves, noise, priors, method, rng, settings)
        X = R
    else:
        xs = rng.integers(0, family.width, count)
        ys = rng.integers(0, family.height, count)
        R = np.empty((count, family.left.n))
        labels = np.empty((count, len(LABELS)))
        for x in np.unique(xs):
            sel = xs == x
            cx = family.at(x)
            R[sel] = M.batch_sample(cx, theta[sel], noise, rng)
            labels[sel] = label_responses(R[sel], cx, noise, priors, method, rng, settings)
        X = np.column_stack([R, xs.astype(float), ys.astype(float)])
    ok = np.all(np.isfinite(labels), axis=1)
    return TrainingSet(X[ok], labels[ok], theta[ok], R.shape[1], family is not None,
                       int(count - ok.sum()))


# -- leaf models -----------------------------------------------------------------------

def n_coefficients(n, kind, pixel_extended=False):
    base = {"constant": 1, "linear": 1 + n, "quadratic": 1 + n + n * (n + 1) // 2}[kind]
    return base + (2 if pixel_extended and kind != "constant" else 0)


def expand_features(Z, n, pixel_extended=False):
    """``[1, z, z_i z_j (i <= j), x, y]`` for standardised features ``Z``."""
    R = Z[:, :n]
    iu, ju = np.triu_indices(n)
    cols = [np.ones((Z.shape[0], 1)), R, R[:, iu] * R[:, ju]]
    if pixel_extended:
        cols.append(Z[:, n:n + 2])
    return np.hstack(cols)


def _leaf_columns(n, kind, pixel_extended):
    """Indices of the full expansion used by a leaf of the given kind."""
    full_quad = 1 + n + n * (n + 1) // 2
    idx = list(range(n_coefficients(n, kind, False)))
    if pixel_extended and kind != "constant":
        idx += [full_quad, full_quad + 1]
    return np.array(idx)


def fit_leaf(F, y, n, kind, pixel_extended):
    """Least-squares leaf with the occupancy fallback quadratic -> linear -> constant."""
    order = LEAF_KINDS[:LEAF_KINDS.index(kind) + 1][::-1]
    coef = np.zeros(F.shape[1])
    for k in order:
        cols = _leaf_columns(n, k, pixel_extended)
        if len(y) >= OCCUPANCY_FACTOR * cols.size or k == "constant":
            if k == "constant":
                coef[0] = y.mean() if len(y) else 0.0
            else:
                sol, *_ = np.linalg.lstsq(F[:, cols], y, rcond=None)
                coef[cols] = sol
            return coef, k
    raise AssertionError("unreachable")


# -- tree --------------------------------------------------------------------------------

@dataclass
class RegressionTree:
    """Flat-array tree.  Node ``i`` is a split when ``feature[i] >= 0``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray  # leaf index for leaves, -1 for splits
    coef: np.ndarray  # (n_leaves, n_coef) over the full expansion
    leaf_kind: list
    center: np.ndarray
    scale: np.ndarray
    n_channels: int
    depth: int
    kind: str = "quadratic"
    pixel_extended: bool = False
    target: str = "t"

    @property
    def n_features(self):
        return self.n_channels + (2 if self.pixel_extended else 0)

    @property
    def n_leaves(self):
        return self.coef.shape[0]

    def route(self, X):
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        for _ in range(self.depth + 1):
            f = self.feature[node]
            split = f >= 0
            if not split.any():
                break
            rows = np.flatnonzero(split)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])
        return self.leaf[node]

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        leaves = self.route(X)
        F = expand_features((X - self.center) / self.scale, self.n_channels, self.pixel_extended)
        return np.einsum("ij,ij->i", F, self.coef[leaves])

    def __call__(self, R, x=None, y=None):
        R = np.asarray(R, dtype=float)
        single = R.ndim == 1
        X = np.atleast_2d(R)
        if self.pixel_extended:
            if x is None or y is None:
                raise ValueError("pixel-extended tree needs x and y")
            X = np.column_stack([X, np.broadcast_to(x, X.shape[0]), np.broadcast_to(y, X.shape[0])])
        out = self.predict(X)
        return float(out[0]) if single else out


def _best_split(Xn, y, n_min):
    """Best (gain, feature, threshold) by variance reduction, or None."""
    m = y.size
    best = None
    total = y.sum()
    for f in range(Xn.shape[1]):
        x = Xn[:, f]
        if m <= EXACT_SPLIT_LIMIT:
            order = np.argsort(x, kind="stable")
            xs, ys = x[order], y[order]
            cs = np.cumsum(ys)
            cs2 = np.cumsum(ys * ys)
            nl = np.arange(1, m)
            valid = xs[1:] > xs[:-1]
            sl, sl2 = cs[:-1], cs2[:-1]
            thr_all = 0.5 * (xs[1:] + xs[:-1])
        else:
            qs = np.unique(np.quantile(x, np.linspace(0.0, 1.0, QUANTILE_CANDIDATES + 1)))
            if qs.size < 2:
                continue
            thr_all = 0.5 * (qs[1:] + qs[:-1])
            b = np.searchsorted(thr_all, x, side="left")
            cnt = np.bincount(b, minlength=thr_all.size + 1)
            s1 = np.bincount(b, weights=y, minlength=thr_all.size + 1)
            s2 = np.bincount(b, weights=y * y, minlength=thr_all.size + 1)
            nl = np.cumsum(cnt)[:-1]
            sl = np.cumsum(s1)[:-1]
            sl2 = np.cumsum(s2)[:-1]
            valid = (nl > 0) & (nl < m)
        nr = m - nl
        valid = valid & (nl >= n_min) & (nr >= n_min)
        if not valid.any():
            continue
        sr = total - sl
        # sum of squares reduction = SSE_parent - SSE_left - SSE_right
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = sl * sl / nl + sr * sr / nr - total * total / m
        gain = np.where(valid, gain, -np.inf)
        k = int(np.argmax(gain))
        g = gain[k]
        if best is None or g > best[0]:
            best = (g, f, float(thr_all[k]))
    if best is None or not best[0] > 0:
        return None
    return best


def train_tree(data: TrainingSet, depth=16, leaf_kind="quadratic", target="t", rows=None,
               min_leaf=None) -> RegressionTree:
    """Greedy depth-first CART growth with least-squares polynomial leaves.

    A node is only split if both children keep at least ``min_leaf`` samples
    (default: the occupancy needed by the requested leaf kind).
    """
    if leaf_kind not in LEAF_KINDS:
        raise ValueError(f"leaf kind must be one of {LEAF_KINDS}")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    X = data.X if rows is None else data.X[rows]
    y = data.label(target) if rows is None else data.label(target)[rows]
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    n, px = data.n_channels, data.pixel_extended
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    F = expand_features((X - center) / scale, n, px)
    if min_leaf is None:
        min_leaf = OCCUPANCY_FACTOR * n_coefficients(n, leaf_kind, px)

    feature, threshold, left, right, leaf = [], [], [], [], []
    coefs, kinds = [], []

    def new_node():
        for arr in (feature, left, right, leaf):
            arr.append(-1)
        threshold.append(0.0)
        return len(feature) - 1

    def grow(idx, d):
        node = new_node()
        split = None
        if d < depth and idx.size >= 2 * min_leaf:
            split = _best_split(X[idx], y[idx], max(min_leaf, 1))
        if split is None:
            c, k = fit_leaf(F[idx], y[idx], n, leaf_kind, px)
            leaf[node] = len(coefs)
            coefs.append(c)
            kinds.append(k)
            return node
        _, f, a = split
        go_left = X[idx, f] <= a
        feature[node], threshold[node] = f, a
        left[node] = grow(idx[go_left], d + 1)
        right[node] = grow(idx[~go_left], d + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                          np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                          np.array(leaf, dtype=np.int64), np.array(coefs), kinds, center, scale,
                          n, depth, leaf_kind, px, target)



@dataclass
class Forest:
    """Bagged average of trees trained on bootstrap resamples."""

    trees: list = field(default_factory=list)

    @property
    def n_features(self):
        return self.trees[0].n_features

    def predict(self, X):
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def __call__(self, R, x=None, y=None):
        return np.mean([t(R, x, y) for t in self.trees], axis=0)


def train_forest(data: TrainingSet, n_trees, rng, depth=16, leaf_kind="quadratic", target="t"):
    N = len(data)
    trees = [train_tree(data, depth, leaf_kind, target, rows=rng.integers(0, N, N))
             for _ in range(n_trees)]
    return Forest(trees)


def train_output_trees(data: TrainingSet, depth=16, leaf_kind="quadratic", targets=LABELS):
    """One tree per output quantity."""
    return {name: train_tree(data, depth, leaf_kind, name) for name in targets}


def eval_tree(tree, R, x=None, y=None):
    return tree(R, x, y)


# -- reporting ---------------------------------------------------------------------------

@dataclass
class ErrorReport:
    quantiles: np.ndarray  # (3,) 25/50/75% of |error|
    bin_edges: np.ndarray
    bin_quantiles: np.ndarray  # (n_bins, 3), NaN for empty bins
    mae: float

    def lines(self):
        out = [f"all: q25={self.quantiles[0]:.4g} q50={self.quantiles[1]:.4g} "
               f"q75={self.quantiles[2]:.4g} mae={self.mae:.4g}"]
        for k, q in enumerate(self.bin_quantiles):
            lo, hi = self.bin_edges[k], self.bin_edges[k + 1]
            out.append(f"[{lo:g},{hi:g}): q25={q[0]:.4g} q50={q[1]:.4g} q75={q[2]:.4g}")
        return out


def tree_error_report(tree, oracle_labels, X, depth=None, bins=8, bin_range=None) -> ErrorReport:
    """|tree - oracle| quantiles overall and per bin of ``depth`` (default: oracle)."""
    X = np.atleast_2d(X)
    oracle_labels = np.asarray(oracle_labels, dtype=float)
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    err = np.abs(tree.predict(X) - oracle_labels)
    depth = oracle_labels if depth is None else np.asarray(depth)
    if bin_range is None:
        bin_range = (float(depth.min()), float(depth.max()) + 1e-9)
    edges = np.linspace(bin_range[0], bin_range[1], bins + 1)
    which = np.clip(np.searchsorted(edges, depth, side="right") - 1, 0, bins - 1)
    bq = np.full((bins, 3), np.nan)
    for k in range(bins):
        e = err[which == k]
        if e.size:
            bq[k] = np.percentile(e, [25, 50, 75])
    return ErrorReport(np.percentile(err, [25, 50, 75]), edges, bq, float(err.mean()))


def throughput(tree, n_pixels=60000, rng=None, repeats=3):
    """Leaf-model evaluations per second on a synthetic frame (reported only)."""
    import time
    rng = np.random.default_rng(0) if rng is None else rng
    X = tree.center + tree.scale * rng.standard_normal((n_pixels, tree.n_features))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        tree.predict(X)
        best = min(best, time.perf_counter() - t0)
    return n_pixels / best


# -- serialization -------------------------------------------------------------------

_MAGIC = "# bayestof regression tree v1"


def _fmt(v):
    return repr(float(v))


def dumps_tree(tree: RegressionTree) -> str:
    lines = [_MAGIC,
             f"depth={tree.depth} n={tree.n_channels} leaf={tree.kind} "
             f"pixel={int(tree.pixel_extended)} target={tree.target} "
             f"nodes={tree.feature.size} ncoef={tree.coef.shape[1]}",
             "center " + " ".join(_fmt(v) for v in tree.center),
             "scale " + " ".join(_fmt(v) for v in tree.scale)]

    def walk(i):
        if tree.feature[i] >= 0:
            lines.append(f"S {tree.feature[i]},{_fmt(tree.threshold[i])}")
            walk(tree.left[i])
            walk(tree.right[i])
        else:
            b = tree.leaf[i]
            lines.append(f"L {tree.leaf_kind[b]} " + " ".join(_fmt(v) for v in tree.coef[b]))

    walk(0)
    return "\n".join(lines) + "\n"


def loads_tree(text: str) -> RegressionTree:
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0] != _MAGIC:
        raise ValueError("not a regression tree file")
    head = dict(kv.split("=", 1) for kv in rows[1].split())
    center = np.array([float(v) for v in rows[2].split()[1:]])
    scale = np.array([float(v) for v in rows[3].split()[1:]])
    body = iter(rows[4:])
    feature, threshold, left, right, leaf, coefs, kinds = [], [], [], [], [], [], []

    def read():
        node = len(feature)
        for arr in (feature, left, right, leaf):
            arr.append(-1)
        threshold.append(0.0)
        try:
            tag, rest = next(body).split(" ", 1)
        except StopIteration:
            raise ValueError("truncated tree file") from None
        if tag == "S":
            f, a = rest.split(",")
            feature[node], threshold[node] = int(f), float(a)
            left[node] = read()
            right[node] = read()
        elif tag == "L":
            parts = rest.split()
            leaf[node] = len(coefs)
            kinds.append(parts[0])
            coefs.append([float(v) for v in parts[1:]])
        else:
            raise ValueError(f"bad node tag {tag!r}")
        return node

    read()
    if next(body, None) is not None:
        raise ValueError("trailing data after tree")
    coef = np.array(coefs)
    if coef.shape[1] != int(head["ncoef"]) or len(feature) != int(head["nodes"]):
        raise ValueError("tree header does not match body")
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                          np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                          np.array(leaf, dtype=np.int64), coef, kinds, center, scale,
                          int(head["n"]), int(head["depth"]), head["leaf"],
                          bool(int(head["pixel"])), head["target"])


def write_tree(path, tree):
    with open(path, "w") as fh:
        fh.write(dumps_tree(tree))


def read_tree(path) -> RegressionTree:
    with open(path) as fh:
        return loads_tree(fh.read())
