"""Batched BFGS minimisation over boxes.

Many small problems (one per pixel and restart) are advanced in lock-step with
numpy.  Each problem lives in the open box ``(lo, hi)``; the objective is
expected to diverge at the boundary (log-barrier), and trial points outside
the box are treated as ``+inf``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CONVERGED, MAXITER, STALLED = 0, 1, 2


@dataclass
class BatchResult:
    x: np.ndarray
    f: np.ndarray
    gnorm: np.ndarray
    nit: np.ndarray
    status: np.ndarray

    @property
    def converged(self):
        return self.status == CONVERGED


def _initial_step(z, p, max_step):
    """Unit step capped per coordinate and by a fraction-to-boundary rule."""
    pmax = np.max(np.abs(p), axis=1)
    alpha = np.minimum(1.0, max_step / np.maximum(pmax, 1e-300))
    with np.errstate(divide="ignore", invalid="ignore"):
        to_lo = np.where(p < 0, z / -p, np.inf)
        to_hi = np.where(p > 0, (1.0 - z) / p, np.inf)
    frac = 0.995 * np.min(np.minimum(to_lo, to_hi), axis=1)
    return np.minimum(alpha, frac)


def minimize_box(fun, x0, lo, hi, gtol=1e-6, maxiter=200, max_step=0.25, c1=1e-4,
                 stall_gtol=1e-3):
    """Minimise ``B`` independent objectives with BFGS and backtracking.

    Parameters
    ----------
    fun : callable
        ``fun(x, idx) -> (f, g)`` for points ``x`` (k, d) belonging to the
        problems ``idx`` (k,).  Must return ``inf`` or ``nan`` for points where
        the objective is undefined.
    x0 : array (B, d)
        Strictly interior starting points.
    lo, hi : array (d,) or (B, d)
        Box bounds.  Iterations run in coordinates scaled to the unit box.
    gtol : float
        Convergence threshold on the Euclidean norm of the scaled gradient.
    max_step : float
        Largest trial move per coordinate in unit-box coordinates.
    stall_gtol : float
        A problem whose line search fails with gradient norm below this is
        still reported as converged (floating-point floor).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    B, d = x0.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (B, d))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (B, d))
    span = hi - lo

    def ev(z, idx):
        x = lo[idx] + z * span[idx]
        inside = np.all((z > 0) & (z < 1) & (x > lo[idx]) & (x < hi[idx]), axis=1)
        f = np.full(len(idx), np.inf)
        g = np.zeros_like(z)
        if np.any(inside):
            fi, gi = fun(x[inside], idx[inside])
            f[inside] = fi
            g[inside] = gi * span[idx[inside]]
        bad = ~np.isfinite(f)
        f[bad] = np.inf
        return f, g

    z = (x0 - lo) / span
    idx_all = np.arange(B)
    f, g = ev(z, idx_all)
    if not np.all(np.isfinite(f)):
        raise ValueError("objective is not finite at some starting points")
    H = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    nit = np.zeros(B, dtype=int)
    status = np.full(B, MAXITER)
    gn = np.linalg.norm(g, axis=1)
    active = gn >= gtol
    status[~active] = CONVERGED
    eye = np.eye(d)

    for _ in range(maxiter):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        za, ga, Ha, fa = z[act], g[act], H[act], f[act]
        p = -np.einsum("bij,bj->bi", Ha, ga)
        slope = np.einsum("bi,bi->b", p, ga)
        reset = ~(slope < 0)
        if np.any(reset):
            Ha[reset] = eye
            p[reset] = -ga[reset]
            slope[reset] = -np.einsum("bi,bi->b", ga[reset], ga[reset])
        alpha = _initial_step(za, p, max_step)
        znew = np.empty_like(za)
        fnew = np.full(act.size, np.inf)
        gnew = np.empty_like(ga)
        pending = np.arange(act.size)
        for _ls in range(40):
            zt = za[pending] + alpha[pending, None] * p[pending]
            ft, gt = ev(zt, act[pending])
            ok = ft <= fa[pending] + c1 * alpha[pending] * slope[pending]
            okp = pending[ok]
            znew[okp], fnew[okp], gnew[okp] = zt[ok], ft[ok], gt[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        failed = np.zeros(act.size, dtype=bool)
        failed[pending] = True
        good = ~failed
        gi = act[good]
        s = znew[good] - za[good]
        y = gnew[good] - ga[good]
        sy = np.einsum("bi,bi->b", s, y)
        Hg = Ha[good]
        upd = sy > 1e-12 * np.linalg.norm(s, axis=1) * np.linalg.norm(y, axis=1)
        if np.any(upd):
            su, yu, Hu = s[upd], y[upd], Hg[upd]
            r = 1.0 / sy[upd]
            first = nit[gi[upd]] == 0
            if np.any(first):
                # Nocedal-Wright initial scaling of the identity
                scale = sy[upd][first] / np.einsum("bi,bi->b", yu[first], yu[first])
                Hu[first] = eye * scale[:, None, None]
            V = eye - r[:, None, None] * np.einsum("bi,bj->bij", su, yu)
            Hu = np.einsum("bij,bjk,blk->bil", V, Hu, V) + r[:, None, None] * np.einsum("bi,bj->bij", su, su)
            Hg[upd] = Hu
        H[gi] = Hg
        z[gi], f[gi], g[gi] = znew[good], fnew[good], gnew[good]
        nit[act] += 1
        gn[act] = np.linalg.norm(g[act], axis=1)
        done_conv = gn[act] < gtol
        status[act[done_conv]] = CONVERGED
        fa_idx = act[failed]
        status[fa_idx] = np.where(gn[fa_idx] < stall_gtol, CONVERGED, STALLED)
        active[act[done_conv | failed]] = False

    return BatchResult(lo + z * span, f, gn, nit, status)


def _newton_direction(H, g):
    """Newton step on |H| with a relative eigenvalue floor (always a descent direction)."""
    w, V = np.linalg.eigh(H)
    aw = np.abs(w)
    floor = np.maximum(1e-10 * np.max(aw, axis=1, keepdims=True), 1e-300)
    aw = np.maximum(aw, floor)
    return -np.einsum("bij,bj->bi", V, np.einsum("bji,bj->bi", V, g) / aw)


def newton_box(fun, x0, lo, hi, gtol=1e-6, maxiter=100, max_step=0.25, c1=1e-4,
               stall_gtol=1e-3, ftol=1e-13):
    """Batched damped Newton iteration over boxes.

    ``fun(x, idx) -> (f, g, H)``.  Indefinite Hessians are handled by taking
    absolute eigenvalues with a relative floor, which always yields a descent
    direction; steps use backtracking and a fraction-to-boundary rule.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    B, d = x0.shape
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (B, d))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (B, d))
    span = hi - lo

    def ev(z, idx):
        x = lo[idx] + z * span[idx]
        inside = np.all((z > 0) & (z < 1) & (x > lo[idx]) & (x < hi[idx]), axis=1)
        f = np.full(len(idx), np.inf)
        g = np.zeros_like(z)
        H = np.zeros(z.shape + (d,))
        if np.any(inside):
            fi, gi, Hi = fun(x[inside], idx[inside])
            s = span[idx[inside]]
            f[inside] = fi
            g[inside] = gi * s
            H[inside] = Hi * s[:, :, None] * s[:, None, :]
        bad = ~np.isfinite(f) | ~np.all(np.isfinite(g), axis=1)
        f[bad] = np.inf
        return f, g, H

    z = (x0 - lo) / span
    f, g, H = ev(z, np.arange(B))
    if not np.all(np.isfinite(f)):
        raise ValueError("objective is not finite at some starting points")
    nit = np.zeros(B, dtype=int)
    status = np.full(B, MAXITER)
    gn = np.linalg.norm(g, axis=1)
    active = gn >= gtol
    status[~active] = CONVERGED

    for _ in range(maxiter):
        act = np.flatnonzero(active)
        if act.size == 0:
            break
        za, ga, Ha, fa = z[act], g[act], H[act], f[act]
        Hs = 0.5 * (Ha + np.swapaxes(Ha, 1, 2))
        Hs = np.where(np.isfinite(Hs), Hs, 0.0)
        p = _newton_direction(Hs, ga)
        # coordinates pinned against a wall would throttle the whole step:
        # freeze them and solve for the rest
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(p > 0, (1.0 - za) / p, np.where(p < 0, za / -p, np.inf))
        pinned = room < 1e-3 * np.minimum(1.0, max_step / np.max(np.abs(p), axis=1, keepdims=True))
        redo = np.any(pinned, axis=1) & ~np.all(pinned, axis=1)
        if np.any(redo):
            Hr, gr, pr = Hs[redo].copy(), ga[redo].copy(), pinned[redo]
            Hr[pr[:, :, None] | pr[:, None, :]] = 0.0
            Hr[:, np.arange(d), np.arange(d)] += pr * 1.0
            gr[pr] = 0.0
            p[redo] = _newton_direction(Hr, gr)
        slope = np.einsum("bi,bi->b", p, ga)
        alpha = _initial_step(za, p, max_step)
        znew = np.empty_like(za)
        fnew = np.full(act.size, np.inf)
        gnew = np.empty_like(ga)
        Hnew = np.empty_like(Ha)
        pending = np.arange(act.size)
        for _ls in range(40):
            zt = za[pending] + alpha[pending, None] * p[pending]
            ft, gt, Ht = ev(zt, act[pending])
            ok = ft <= fa[pending] + c1 * alpha[pending] * slope[pending]
            okp = pending[ok]
            znew[okp], fnew[okp], gnew[okp], Hnew[okp] = zt[ok], ft[ok], gt[ok], Ht[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
            alpha[pending] *= 0.5
        failed = np.zeros(act.size, dtype=bool)
        failed[pending] = True
        good = act[~failed]
        z[good], f[good], g[good], H[good] = (znew[~failed], fnew[~failed], gnew[~failed],
                                              Hnew[~failed])
        nit[act] += 1
        gn[act] = np.linalg.norm(g[act], axis=1)
        # Newton decrement at the floating-point floor also counts as converged
        tiny = (-slope <= ftol * np.maximum(1.0, np.abs(fa))) & ~failed
        done_conv = (gn[act] < gtol) | tiny
        status[act[done_conv]] = CONVERGED
        fa_idx = act[failed]
        status[fa_idx] = np.where(gn[fa_idx] < stall_gtol, CONVERGED, STALLED)
        active[act[done_conv | failed]] = False

    return BatchResult(lo + z * span, f, gn, nit, status)
