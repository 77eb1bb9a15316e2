"""Brute-force reference values for tiny ellipsoid-constrained linear programs.

Independent of the solver: feasible points are parametrized as
``z = z_p + N y`` with ``N`` an orthonormal null-space basis of ``A``. The
first null coordinate is gridded at step 1e-3; along the second the feasible
set is an interval that is intersected exactly from the two ball quadratics.
Every point visited is feasible, so the value is an upper bound whose error is
second order in the step near a boundary optimum.
"""

import numpy as np
import scipy.linalg

from okoc.assembly import FiniteProgram

STEP = 1e-3
SLACK = 2e-3


def random_program(rng, M_S, M_D, M_b) -> FiniteProgram:
    def gram(k):
        Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
        return Q @ np.diag(rng.uniform(0.3, 2.0, k)) @ Q.T

    G_S, G_D = gram(M_S), gram(M_D)
    r_S, r_D = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)
    A = rng.normal(size=(M_b, M_S + M_D))
    # a strictly interior point keeps the program feasible
    inner = []
    for G, r, k in ((G_S, r_S, M_S), (G_D, r_D, M_D)):
        x = rng.normal(size=k)
        inner.append(x * np.sqrt(rng.uniform(0.05, 0.6) * r / (x @ G @ x)))
    b = A @ np.concatenate(inner)
    c = rng.normal(size=M_S + M_D)
    return FiniteProgram(c, A, b, G_S, G_D, r_S, r_D)


def _blocks(p, slack=0.0):
    return ((p.G_S, slice(0, p.M_S), p.r_S + slack), (p.G_D, slice(p.M_S, None), p.r_D + slack))


def _interval(p, base, d):
    """{s : every block of base + s d inside its ball} as (lo, hi) arrays over rows of base."""
    lo = np.full(base.shape[0], -np.inf)
    hi = np.full(base.shape[0], np.inf)
    for G, sl, r in _blocks(p):
        B, dd = base[:, sl], d[sl]
        a = dd @ G @ dd
        bq = 2 * B @ (G @ dd)
        cq = np.einsum("ij,jk,ik->i", B, G, B) - r
        if a <= 1e-15:
            bad = cq > 0
            lo[bad], hi[bad] = np.inf, -np.inf
            continue
        disc = bq * bq - 4 * a * cq
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        lo = np.where(ok, np.maximum(lo, (-bq - sq) / (2 * a)), np.inf)
        hi = np.where(ok, np.minimum(hi, (-bq + sq) / (2 * a)), -np.inf)
    return lo, hi


def grid_optimum(p: FiniteProgram) -> float:
    """Oracle minimum of c.z; ``inf`` when no grid point is feasible."""
    nz = p.M_S + p.M_D
    if p.M_b:
        zp = np.linalg.lstsq(p.A, p.b, rcond=None)[0]
        N = scipy.linalg.null_space(p.A)
    else:
        zp, N = np.zeros(nz), np.eye(nz)
    if N.shape[1] == 0:
        ok = all(zp[sl] @ G @ zp[sl] <= r for G, sl, r in _blocks(p, SLACK))
        return float(p.c @ zp) if ok else np.inf
    if N.shape[1] == 1:
        lo, hi = _interval(p, zp[None, :], N[:, 0])
        if lo[0] > hi[0]:
            return np.inf
        return float(min(p.c @ (zp + lo[0] * N[:, 0]), p.c @ (zp + hi[0] * N[:, 0])))
    if N.shape[1] != 2:
        raise ValueError("grid oracle handles null spaces of dimension <= 2")
    lam_min = min(np.linalg.eigvalsh(p.G_S).min(), np.linalg.eigvalsh(p.G_D).min())
    R = np.sqrt((p.r_S + p.r_D) / lam_min) + 1.0
    y1 = np.arange(-R, R + STEP, STEP)
    base = zp[None, :] + y1[:, None] * N[:, 0][None, :]
    lo, hi = _interval(p, base, N[:, 1])
    ok = lo <= hi
    if not ok.any():
        return np.inf
    cb, cd = base[ok] @ p.c, p.c @ N[:, 1]
    return float(np.min(np.minimum(cb + lo[ok] * cd, cb + hi[ok] * cd)))
