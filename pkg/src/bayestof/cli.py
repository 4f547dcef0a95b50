"""Command line interface: ``bayestof <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
Every output file starts with ``#`` header lines carrying the tool version,
the configuration hash and the seed.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import config as C
from . import curves as cv
from . import design as D
from . import inference as inf
from . import model as M
from . import regress as G
from . import tofsim as S

CHUNK = 2048


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------------------

def header_lines(cfg, seed, command, extra=()):
    return [f"bayestof version={__version__} config={C.config_hash(cfg)} seed={seed} "
            f"command={command}", *extra]


def with_header(text, cfg, seed, command, extra=()):
    return "".join(f"# {h}\n" for h in header_lines(cfg, seed, command, extra)) + text


def write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def read_text(path):
    if not os.path.exists(path):
        raise UsageError(f"input file not found: {path}")
    with open(path) as fh:
        return fh.read()


def csv_text(columns, rows):
    out = [",".join(columns)]
    for r in rows:
        out.append(",".join(v if isinstance(v, str) else repr(float(v)) for v in r))
    return "\n".join(out) + "\n"


def read_table(path):
    """Numeric CSV with ``#`` comments and one column-name row."""
    lines = [ln for ln in read_text(path).splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise UsageError(f"empty table: {path}")
    cols = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if any(len(r) != len(cols) for r in rows):
        raise UsageError(f"ragged table: {path}")
    # text columns (method, diagnostics) read as NaN
    vals = np.array([[_number(v) for v in r] for r in rows], dtype=float)
    return cols, vals.reshape(-1, len(cols))


def _number(v):
    try:
        return float(v)
    except ValueError:
        return np.nan


def read_responses(path):
    cols, vals = read_table(path)
    rc = [i for i, c in enumerate(cols) if c.startswith("R")]
    if not rc:
        raise UsageError(f"no response columns (R1, R2, ...) in {path}")
    if not np.all(np.isfinite(vals[:, rc])):
        raise UsageError(f"non-numeric response value in {path}")
    xy = None
    if "x" in cols and "y" in cols:
        xy = vals[:, [cols.index("x"), cols.index("y")]]
    return vals[:, rc], xy


def workers_of(args, cfg):
    w = args.workers if getattr(args, "workers", None) is not None else cfg["workers"]
    return os.cpu_count() or 1 if not w else int(w)


def _infer_chunk(job):
    R, curves, noise, priors, kind, method, settings, seed = job
    return inf.batch_infer(R, curves, noise, priors, kind, method, np.random.default_rng(seed),
                           settings)


def parallel_infer(R, curves, noise, priors, kind, method, settings, seed, workers):
    """Chunked inference; chunk rngs depend only on the seed, not on ``workers``."""
    chunks = [R[s:s + CHUNK] for s in range(0, R.shape[0], CHUNK)]
    seeds = np.random.SeedSequence(seed).spawn(len(chunks))
    jobs = [(c, curves, noise, priors, kind, method, settings, s) for c, s in zip(chunks, seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_infer_chunk, jobs))
    else:
        parts = [_infer_chunk(j) for j in jobs]
    return concat_estimates(parts)


def concat_estimates(parts):
    first = parts[0]
    out = {}
    for name in first.__dataclass_fields__:
        vals = [getattr(p, name) for p in parts]
        if isinstance(vals[0], np.ndarray):
            out[name] = np.concatenate(vals)
        elif vals[0] is None:
            out[name] = None
        else:
            out[name] = vals[0]
    return type(first)(**out)


def estimates_csv(est):
    cols = ["t", "rho", "lam", "sigma", "gamma", "method", "diagnostics"]
    rows = []
    for i in range(est.theta.shape[0]):
        diag = f"restarts={est.restarts} converged={int(est.n_converged[i])} " \
               f"objective={float(est.objective[i])!r}"
        if est.ess is not None:
            diag += (f" ess={float(est.ess[i])!r} modes={int(est.k_modes[i])} "
                     f"flagged={int(est.flagged[i])}")
        th = est.theta[i]
        rows.append([th[0], th[1], th[2], est.sigma_t[i], est.gamma[i], est.method, diag])
    return csv_text(cols, rows)


def svg_polyline(path, series, title, xlabel, ylabel, logy=False):
    """Minimal standalone line plot; ``series`` maps a label to (x, y)."""
    W, H, pad = 480, 320, 50
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    ys = np.log10(np.maximum(ys, 1e-12)) if logy else ys
    x0, x1 = float(xs.min()), float(xs.max()) or 1.0
    y0, y1 = float(np.nanmin(ys)), float(np.nanmax(ys))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>',
             f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
             f'<text x="{W / 2}" y="{H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
             f'<text x="14" y="{H / 2}" font-size="12" transform="rotate(-90 14 {H / 2})" '
             f'text-anchor="middle">{ylabel}{" (log10)" if logy else ""}</text>',
             f'<rect x="{pad}" y="{pad}" width="{W - 2 * pad}" height="{H - 2 * pad}" '
             f'fill="none" stroke="black"/>']
    for k, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        y = np.log10(np.maximum(y, 1e-12)) if logy else y
        px = pad + (x - x0) / (x1 - x0) * (W - 2 * pad)
        py = H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py) if np.isfinite(b))
        c = colors[k % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        parts.append(f'<text x="{W - pad - 5}" y="{pad + 15 + 14 * k}" text-anchor="end" '
                     f'font-size="11" fill="{c}">{label}</text>')
    parts.append("</svg>")
    write_text(path, "\n".join(parts) + "\n")


def error_cdf(err):
    e = np.sort(np.abs(np.asarray(err, float)))
    return e, np.arange(1, e.size + 1) / e.size


# -- subcommands ----------------------------------------------------------------------------

def cmd_gen_curves(args, cfg):
    basis = C.basis_from(cfg)
    Z = D.loads_design(read_text(args.design)) if args.design else None
    curves = C.curves_from(cfg, Z, basis)
    write_text(args.out, with_header(cv.dumps_curves(curves), cfg, cfg["seed"], "gen-curves",
                                     [f"fit_error={curves.fit_error!r}"]))
    return 0


def load_curves(args, cfg):
    if getattr(args, "curves", None):
        return cv.loads_curves(_strip_header(read_text(args.curves)))
    return C.curves_from(cfg)


def _strip_header(text):
    # tool headers sit above the module's own format
    lines = text.splitlines(keepends=True)
    magic = (cv._MAGIC, G._MAGIC)
    i = 0
    while i < len(lines) and lines[i].startswith("#") and not lines[i].startswith(magic):
        i += 1
    return "".join(lines[i:])


def cmd_sample(args, cfg):
    curves, noise, priors = load_curves(args, cfg), C.noise_from(cfg), C.priors_from(cfg)
    rng = np.random.default_rng(cfg["seed"])
    theta = priors.sample(rng, args.count, args.kind)
    R = M.batch_sample(curves, theta, noise, rng, args.kind)
    cols = [f"R{i + 1}" for i in range(R.shape[1])]
    write_text(args.out, with_header(csv_text(cols, R), cfg, cfg["seed"], "sample"))
    if args.truth:
        names = list(M.PARAM_NAMES[args.kind])
        write_text(args.truth, with_header(csv_text(names, theta), cfg, cfg["seed"], "sample"))
    return 0


def cmd_infer(args, cfg):
    curves, noise, priors = load_curves(args, cfg), C.noise_from(cfg), C.priors_from(cfg)
    R, _ = read_responses(args.responses)
    if R.shape[1] != curves.n:
        raise UsageError(f"responses have {R.shape[1]} channels, curves have {curves.n}")
    est = parallel_infer(R, curves, noise, priors, args.kind, args.method, C.settings_from(cfg),
                         cfg["seed"], workers_of(args, cfg))
    write_text(args.out, with_header(estimates_csv(est), cfg, cfg["seed"], "infer",
                                     [f"kind={args.kind} method={args.method}"]))
    return 0


def cmd_train_tree(args, cfg):
    curves, noise, priors = load_curves(args, cfg), C.noise_from(cfg), C.priors_from(cfg)
    tc = cfg["tree"]
    count = args.samples or tc["samples"]
    depth = tc["depth"] if args.depth is None else args.depth
    rng = np.random.default_rng(cfg["seed"])
    data = G.generate_training_set(curves, noise, priors, count, rng, tc["method"],
                                   C.settings_from(cfg))
    forest = tc["forest"] if args.forest is None else args.forest
    extra = [f"samples={count} failed={data.n_failed}"]
    if forest:
        model = G.train_forest(data, forest, rng, depth, args.leaf or tc["leaf"], args.target)
        text = "".join(G.dumps_tree(t) for t in model.trees)
    else:
        text = G.dumps_tree(G.train_tree(data, depth, args.leaf or tc["leaf"], args.target))
    write_text(args.out, with_header(text, cfg, cfg["seed"], "train-tree", extra))
    return 0


def load_model(path):
    text = _strip_header(read_text(path))
    blocks = text.split(G._MAGIC)[1:]
    trees = [G.loads_tree(G._MAGIC + b) for b in blocks]
    if not trees:
        raise UsageError(f"no tree in {path}")
    return trees[0] if len(trees) == 1 else G.Forest(trees)


def cmd_eval_tree(args, cfg):
    model = load_model(args.tree)
    R, xy = read_responses(args.responses)
    X = R if xy is None else np.column_stack([R, xy])
    if X.shape[1] != model.n_features:
        raise UsageError(f"tree expects {model.n_features} features, got {X.shape[1]}")
    t0 = time.perf_counter()
    pred = model.predict(X)
    dt = time.perf_counter() - t0
    write_text(args.out, with_header(csv_text(["prediction"], pred[:, None]), cfg, cfg["seed"],
                                     "eval-tree", [f"seconds={dt!r}"]))
    if args.oracle:
        cols, ref = read_table(args.oracle)
        col = cols.index(args.oracle_column) if args.oracle_column in cols else 0
        tree = model if isinstance(model, G.RegressionTree) else model.trees[0]
        rep = G.tree_error_report(model if hasattr(model, "predict") else tree, ref[:, col], X)
        if args.report:
            write_text(args.report, with_header("\n".join(rep.lines()) + "\n", cfg, cfg["seed"],
                                                "eval-tree"))
        if args.plot:
            e, p = error_cdf(model.predict(X) - ref[:, col])
            svg_polyline(args.plot, {"tree": (e, p)}, "absolute error CDF", "|error|", "fraction")
    return 0


def cmd_design(args, cfg):
    dc = cfg["design"]
    basis = C.basis_from(cfg, dc["catalog"])
    priors, noise = C.priors_from(cfg), C.noise_from(cfg)
    spec = D.LossSpec(dc["loss"], dc["estimator"], args.k_mc or dc["K_mc"], dc["restarts"])
    sched = D.AnnealSchedule(dc["T_start"], dc["T_final"], args.iterations or dc["iterations"])
    scenes = None
    if dc["beta_mix"] < 1.0:
        scenes = D.SceneSamples.from_scenes(training_scenes(cfg))
    f = D.design_loss_fn(basis, priors, noise, spec, cfg["seed"], C.settings_from(cfg), scenes,
                         dc["beta_mix"])
    res = D.anneal_design(f, (basis.m, dc["channels"]), dc["K_shutter"], dc["K_sparsity"], sched,
                          np.random.default_rng(cfg["seed"]))
    os.makedirs(args.out_dir, exist_ok=True)
    extra = [f"estimator={spec.estimator} restarts={spec.restarts} K_mc={spec.K_mc} "
             f"best_loss={float(res.best_loss)!r} rejected_infeasible={res.rejected_infeasible}"]
    cat = " ".join(f"{b.delay:g}/{b.width:g}" for b in basis.catalog)
    write_text(os.path.join(args.out_dir, "design.txt"),
               with_header(D.dumps_design(res.best.Z, [f"catalog {cat}"]), cfg, cfg["seed"],
                           "design", extra))
    curves = cv.compose_curves(basis, res.best.Z, cfg["curves"]["degree"],
                               tuple(cfg["curves"]["valid_range"]))
    write_text(os.path.join(args.out_dir, "curves.txt"),
               with_header(cv.dumps_curves(curves), cfg, cfg["seed"], "design"))
    write_text(os.path.join(args.out_dir, "trace.csv"),
               with_header(res.trace_csv(), cfg, cfg["seed"], "design", extra))
    if args.plot:
        tr = res.trace
        svg_polyline(os.path.join(args.out_dir, "trace.svg"),
                     {"current": (tr[:, 0], tr[:, 2]), "best": (tr[:, 0], tr[:, 3])},
                     "annealing loss", "iteration", "loss", logy=True)
    return 0


def training_scenes(cfg):
    """Scene variations used by the mixture design prior."""
    base = cfg["scene"]
    out = []
    for dist, wall in ((200.0, 150.0), (300.0, 200.0), (350.0, 250.0)):
        spec = S.SceneSpec.from_config({**base, "object_distance": dist, "wall_offset": wall,
                                        "width": 16, "height": 12})
        out.append(S.gen_two_bounce_scene(spec))
    return out


def cmd_simulate(args, cfg):
    spec = S.SceneSpec.from_config(cfg["scene"])
    scene = S.gen_two_bounce_scene(spec, np.random.default_rng(cfg["seed"]))
    hdr = header_lines(cfg, cfg["seed"], "simulate", [f"scene width={spec.width} height={spec.height}"])
    S.write_path_samples(args.out, scene.pixels, hdr)
    hv = " ".join(f"version={__version__} config={C.config_hash(cfg)} seed={cfg['seed']}".split())
    if args.truth:
        write_text(args.truth, S.dumps_map(scene.depth, "depth", "cm", hv))
    if args.ratio:
        write_text(args.ratio, S.dumps_map(scene.ratios(), "multipath_ratio", "1", hv))
    return 0


def cmd_benchmark(args, cfg):
    curves, noise, priors = load_curves(args, cfg), C.noise_from(cfg), C.priors_from(cfg)
    pixels = S.read_path_samples(args.samples)
    depth, _ = S.loads_map(read_text(args.truth))
    h, w = depth.shape
    if len(pixels) != h * w:
        raise UsageError("path-sample file and truth map disagree on pixel count")
    order = np.argsort([p.y * w + p.x for p in pixels], kind="stable")
    pixels = [pixels[i] for i in order]
    scene = S.Scene(S.SceneSpec(width=w, height=h), pixels, depth, np.ones_like(depth, bool))
    rng = np.random.default_rng(cfg["seed"])
    mask = None
    if args.min_ratio is not None:
        mask = scene.ratios().reshape(-1) > args.min_ratio
    res = S.scene_benchmark(scene, curves, noise, priors, tuple(args.methods), tuple(args.kinds),
                            rng, C.settings_from(cfg), mask=mask)
    os.makedirs(args.out_dir, exist_ok=True)
    rows = [[k, v["q25"], v["q50"], v["q75"]] for k, v in res.table.items()]
    write_text(os.path.join(args.out_dir, "quantiles.csv"),
               with_header(csv_text(["estimator", "q25", "q50", "q75"], rows), cfg, cfg["seed"],
                           "benchmark"))
    hv = f"version={__version__} config={C.config_hash(cfg)} seed={cfg['seed']}"
    units = {"t_hat": "cm", "error": "cm", "sigma": "cm", "gamma": "1"}
    for key in res.estimates:
        for q, arr in res.maps(key).items():
            write_text(os.path.join(args.out_dir, f"{key}-{q}.csv"),
                       S.dumps_map(arr, q, units[q], hv + f" estimator={key}"))
    if args.plot:
        svg_polyline(os.path.join(args.out_dir, "error_cdf.svg"),
                     {k: error_cdf(e) for k, e in res.errors.items()},
                     "absolute depth error CDF", "|error| (cm)", "fraction")
    return 0


def cmd_check(args, cfg):
    from . import checks
    results = checks.run_all(cfg, modules=args.modules or None, seed=cfg["seed"])
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_pipeline(args, cfg):
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    small = args.small
    p = os.path.join
    n_resp = 64 if small else 2048
    tree_n = 3000 if small else cfg["tree"]["samples"]
    stages = [
        ("gen-curves", ["--out", p(out, "curves.txt")]),
        ("sample", ["--curves", p(out, "curves.txt"), "--count", str(n_resp),
                    "--out", p(out, "responses.csv"), "--truth", p(out, "truth.csv")]),
        ("infer", ["--curves", p(out, "curves.txt"), "--responses", p(out, "responses.csv"),
                   "--out", p(out, "estimates.csv")]),
        ("train-tree", ["--curves", p(out, "curves.txt"), "--samples", str(tree_n),
                        "--depth", "8" if small else str(cfg["tree"]["depth"]),
                        "--out", p(out, "tree.txt")]),
        ("eval-tree", ["--tree", p(out, "tree.txt"), "--responses", p(out, "responses.csv"),
                       "--out", p(out, "tree_predictions.csv"), "--oracle",
                       p(out, "estimates.csv"), "--report", p(out, "tree_report.txt")]),
        ("design", ["--out-dir", p(out, "design")]
         + (["--iterations", "20", "--k-mc", "32"] if small else [])),
        ("simulate", ["--out", p(out, "scene.txt"), "--truth", p(out, "scene_depth.csv"),
                      "--ratio", p(out, "scene_ratio.csv")]),
        ("benchmark", ["--curves", p(out, "curves.txt"), "--samples", p(out, "scene.txt"),
                       "--truth", p(out, "scene_depth.csv"), "--out-dir", p(out, "benchmark")]
         + (["--methods", "mle"] if small else [])),
    ]
    common = []
    if args.config:
        common += ["--config", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    if args.workers is not None:
        common += ["--workers", str(args.workers)]
    parser = build_parser()
    for name, argv in stages:
        t0 = time.perf_counter()
        sub = parser.parse_args([name, *common, *argv])
        code = run(sub)
        print(f"stage={name} status={code} seconds={time.perf_counter() - t0:.2f}")
        if code != 0:
            print(f"error: stage={name} exit={code}")
            return code
    if args.check:
        return cmd_check(parser.parse_args(["check", *common]), cfg)
    return 0


# -- parser -------------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="bayestof", description="Time-of-flight depth inference")
    ap.add_argument("--version", action="version", version=f"bayestof {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="YAML config file (defaults used when omitted)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="worker processes (default: all cores)")
        p.set_defaults(func=fn)
        return p

    p = add("gen-curves", cmd_gen_curves, "compose and fit response curves")
    p.add_argument("--design", help="design matrix file (default: configured profile)")
    p.add_argument("--out", required=True)

    p = add("sample", cmd_sample, "draw imaging conditions and noisy responses")
    p.add_argument("--curves")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--kind", choices=[M.SP, M.TP], default=M.SP)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="also write the drawn imaging conditions")

    p = add("infer", cmd_infer, "slow per-pixel inference")
    p.add_argument("--curves")
    p.add_argument("--responses", required=True)
    p.add_argument("--method", choices=["mle", "map", "bayes"], default="bayes")
    p.add_argument("--kind", choices=[M.SP, M.TP], default=M.SP)
    p.add_argument("--out", required=True)

    p = add("train-tree", cmd_train_tree, "train a regression tree on slow-inference labels")
    p.add_argument("--curves")
    p.add_argument("--samples", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--leaf", choices=G.LEAF_KINDS)
    p.add_argument("--target", choices=G.LABELS, default="t")
    p.add_argument("--forest", type=int, help="bagged trees (0 = single tree)")
    p.add_argument("--out", required=True)

    p = add("eval-tree", cmd_eval_tree, "evaluate a tree on a response file")
    p.add_argument("--tree", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle", help="CSV of reference labels for an error report")
    p.add_argument("--oracle-column", default="t")
    p.add_argument("--report")
    p.add_argument("--plot", help="write an error-CDF SVG")

    p = add("design", cmd_design, "anneal an exposure profile")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--k-mc", type=int)
    p.add_argument("--plot", action="store_true", help="write trace.svg")

    p = add("simulate", cmd_simulate, "generate the two-bounce scene path samples")
    p.add_argument("--out", required=True)
    p.add_argument("--truth")
    p.add_argument("--ratio")

    p = add("benchmark", cmd_benchmark, "SP/TP inference on a path-sample scene")
    p.add_argument("--curves")
    p.add_argument("--samples", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--methods", nargs="+", default=["bayes"], choices=["mle", "map", "bayes"])
    p.add_argument("--kinds", nargs="+", default=[M.SP, M.TP], choices=[M.SP, M.TP])
    p.add_argument("--min-ratio", type=float, help="restrict quantiles to multipath pixels")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plot", action="store_true")

    p = add("check", cmd_check, "run the invariant suites")
    p.add_argument("--modules", nargs="+")

    p = add("pipeline", cmd_pipeline, "run every stage end to end")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--small", action="store_true", help="toy sizes")
    p.add_argument("--check", action="store_true", help="run the invariant suites afterwards")
    return ap


def run(args):
    try:
        overrides = {"seed": args.seed} if args.seed is not None else None
        cfg = C.load_config(args.config, overrides)
        if args.workers is not None:
            cfg["workers"] = args.workers
        return args.func(args, cfg)
    except (C.ConfigError, UsageError, FileNotFoundError) as e:
        print(f"error: type=usage message={e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures get a machine-readable line
        print(f"error: type=runtime exception={type(e).__name__} message={e}", file=sys.stderr)
        return 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
