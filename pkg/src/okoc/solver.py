"""
Solvers for the kernel program.

Minimizes ``c @ z`` subject to ``A z = b`` and the two Gram-ellipsoid bounds
``z_S' G_S z_S <= r_S`` and ``z_D' G_D z_D <= r_D``. Two methods share one
result type and one KKT certificate:

``"exact"`` (default)
    Whitens each Gram block, eliminates ``A z = b`` with an orthonormal
    null-space basis, and diagonalizes both ball constraints simultaneously
    (the two blocks of an orthonormal basis share right singular vectors). What
    remains is a concave dual in the two ball multipliers, maximized by Newton's
    method. Robust on the badly conditioned Gram matrices of smooth kernels.

``"al"``
    Method of multipliers on ``A z = b``; each inner problem is a convex
    quadratic over the product of the two ellipsoids, solved by accelerated
    projected gradient (FISTA with restart) using :func:`project_ellipsoid`.
    Fine for small, well-conditioned programs; stalls on large kernel programs.

Projection onto an ellipsoid uses a cached eigendecomposition and a safeguarded
Newton iteration on the scalar multiplier. Everything is deterministic.
"""

from __future__ import annotations

import dataclasses

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg

from .assembly import FiniteProgram
from .kernels import JITTER

log = logging.getLogger(__name__)


class SolverInputError(ValueError):
    pass


class Status(str, Enum):
    OPTIMAL = "Optimal"
    TOLERANCE_NOT_MET = "ToleranceNotMet"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolveOptions:
    eq_tol: float = 1e-6
    stat_tol: float = 1e-6
    max_iters: int = 50000
    penalty_init: float = 1.0
    penalty_growth: float = 10.0
    method: str = "exact"

    def __post_init__(self):
        if self.method not in ("exact", "al"):
            raise ValueError(f"unknown method {self.method!r} (expected 'exact' or 'al')")
        if not (self.eq_tol > 0 and self.stat_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")
        if self.penalty_init <= 0 or self.max_iters < 1:
            raise ValueError("penalty_init must be positive and max_iters at least 1")


@dataclass(frozen=True)
class SolveResult:
    w: np.ndarray
    v: np.ndarray
    objective: float
    eq_residual_inf: float
    ball_S_used: float
    ball_D_used: float
    stationarity: float
    complementarity: float
    iterations: int
    status: Status
    multipliers: np.ndarray
    dropped_rows: tuple[int, ...] = ()
    merit_history: tuple[float, ...] = field(default=())

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.w, self.v])


class Ellipsoid:
    """``{y : y' G y <= r}`` with a cached eigendecomposition of ``G + jitter I``."""

    def __init__(self, G, r: float, jitter: float = JITTER):
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise SolverInputError("Gram matrix must be square")
        if not np.all(np.isfinite(G)):
            raise SolverInputError("Gram matrix has non-finite entries")
        if not r > 0:
            raise SolverInputError(f"ball radius must be positive, got {r}")
        self.dim = G.shape[0]
        self.r = float(r)
        if self.dim == 0:
            self.lam = np.zeros(0)
            self.Q = np.zeros((0, 0))
            return
        scale = max(float(np.max(np.diag(G))), 1e-300)
        lam, Q = np.linalg.eigh(0.5 * (G + G.T))
        if lam[0] < -1e-8 * scale:
            raise SolverInputError(f"Gram matrix is not positive semidefinite (min eigenvalue {lam[0]:.3e})")
        self.lam = np.maximum(lam, 0.0) + jitter * scale
        self.Q = Q

    def value(self, z) -> float:
        y = self.Q.T @ z
        return float(y @ (self.lam * y))

    def project(self, z) -> np.ndarray:
        if self.dim == 0:
            return np.asarray(z, dtype=np.float64).copy()
        y = self.Q.T @ z
        a = self.lam * y * y
        s2 = float(np.sum(a))
        if s2 <= self.r:
            return np.asarray(z, dtype=np.float64).copy()
        beta = _secular_root(a, self.lam, self.r)
        p = y / (1.0 + beta * self.lam)
        val = float(p @ (self.lam * p))
        if val > self.r:
            p *= np.sqrt(self.r / val) * (1.0 - 1e-15)
        return self.Q @ p


def _secular_root(a: np.ndarray, lam: np.ndarray, r: float) -> float:
    """beta >= 0 with sum(a / (1 + beta lam)^2) = r, given the sum at beta=0 exceeds r.

    Newton on ``1/s(beta) - 1/sqrt(r)``, which is concave and increasing, so
    iterates approach the root monotonically from the left; a bisection bracket
    guards against stalls.
    """
    sqrt_r = np.sqrt(r)
    lo, hi = 0.0, None
    beta = 0.0
    for _ in range(200):
        d = 1.0 + beta * lam
        s2 = float(np.sum(a / d**2))
        s = np.sqrt(s2)
        psi = 1.0 / s - 1.0 / sqrt_r
        if abs(s - sqrt_r) <= 1e-15 * sqrt_r:
            return beta
        if psi < 0:
            lo = beta
        else:
            hi = beta
        ds2 = -2.0 * float(np.sum(a * lam / d**3))
        dpsi = -0.5 * ds2 / (s2 * s)
        step = beta - psi / dpsi if dpsi > 0 else np.inf
        if hi is None:
            beta = step if np.isfinite(step) and step > lo else 2.0 * lo + 1.0
        else:
            beta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi is not None and hi - lo <= 1e-16 * max(hi, 1.0):
            return hi
    return hi if hi is not None else beta


def project_ellipsoid(z, G, r: float) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{y : y' G y <= r}``."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise SolverInputError("non-finite point")
    return Ellipsoid(G, r, jitter=0.0).project(z)


class _Feasible:
    """Product of the S and D ellipsoids."""

    def __init__(self, p: FiniteProgram):
        self.nS = p.M_S
        self.S = Ellipsoid(p.G_S, p.r_S)
        self.D = Ellipsoid(p.G_D, p.r_D)

    def project(self, z):
        return np.concatenate([self.S.project(z[: self.nS]), self.D.project(z[self.nS :])])

    def linear_min(self, g):
        """argmin of ``g @ z`` over the set (used when there are no equality rows)."""
        parts = []
        for ell, gi in ((self.S, g[: self.nS]), (self.D, g[self.nS :])):
            if ell.dim == 0:
                parts.append(np.zeros(0))
                continue
            y = ell.Q.T @ gi
            q = y / ell.lam
            denom = np.sqrt(float(y @ q))
            parts.append(np.zeros(ell.dim) if denom == 0 else -np.sqrt(ell.r) * (ell.Q @ q) / denom)
        return np.concatenate(parts)


def _independent_rows(A: np.ndarray, tol: float = 1e-10) -> tuple[np.ndarray, tuple[int, ...]]:
    """Rows kept after pivoted Gram-Schmidt; rows whose orthogonal remainder is below ``tol`` are dropped."""
    if A.shape[0] == 0:
        return np.arange(0), ()
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol))
    keep = np.sort(piv[:rank])
    dropped = tuple(int(i) for i in np.sort(piv[rank:]))
    return keep, dropped


def _ball_multipliers(p: FiniteProgram, z, g):
    """Least-squares multipliers alpha >= 0 with g_block + 2 alpha G z_block ~ 0."""
    out = []
    for G, zb, gb in ((p.G_S, z[: p.M_S], g[: p.M_S]), (p.G_D, z[p.M_S :], g[p.M_S :])):
        if G.shape[0] == 0:
            out.append(0.0)
            continue
        n = 2.0 * (G @ zb)
        nn = float(n @ n)
        out.append(max(0.0, -float(gb @ n) / nn) if nn > 0 else 0.0)
    return out


def kkt_residuals(p: FiniteProgram, res: SolveResult) -> tuple[float, float, float]:
    """(eq_residual_inf, stationarity, complementarity) recomputed from the program and point.

    Stationarity is the step-one projected-gradient residual
    ``|z - P(z - (c + A' lambda))|`` over the product of ellipsoids;
    complementarity sums ``alpha * slack`` over the two balls with
    least-squares ball multipliers.
    """
    z = res.z
    eq = float(np.max(np.abs(p.A @ z - p.b))) if p.M_b else 0.0
    C = _Feasible(p)
    g = p.c + p.A.T @ res.multipliers if p.M_b else p.c.copy()
    stat = float(np.linalg.norm(z - C.project(z - g)))
    alphas = _ball_multipliers(p, z, g)
    slacks = [p.r_S - C.S.value(z[: p.M_S]), p.r_D - C.D.value(z[p.M_S :])]
    comp = float(sum(abs(a * s) for a, s in zip(alphas, slacks)))
    return eq, stat, comp


def _ball_fraction(G, zb, r):
    return float(zb @ G @ zb) / r if G.shape[0] else 0.0


def _finish(p, z, lam_full, status, iters, dropped, merits, opts) -> SolveResult:
    res = SolveResult(
        w=z[: p.M_S].copy(),
        v=z[p.M_S :].copy(),
        objective=float(p.c @ z),
        eq_residual_inf=0.0,
        ball_S_used=_ball_fraction(p.G_S, z[: p.M_S], p.r_S),
        ball_D_used=_ball_fraction(p.G_D, z[p.M_S :], p.r_D),
        stationarity=0.0,
        complementarity=0.0,
        iterations=iters,
        status=status,
        multipliers=lam_full,
        dropped_rows=dropped,
        merit_history=tuple(merits),
    )
    eq, stat, comp = kkt_residuals(p, res)
    if status is not Status.INFEASIBLE:
        ok = eq <= opts.eq_tol and stat <= opts.stat_tol and max(res.ball_S_used, res.ball_D_used) <= 1 + 1e-8
        status = Status.OPTIMAL if ok else Status.TOLERANCE_NOT_MET
    return SolveResult(**{**res.__dict__, "eq_residual_inf": eq, "stationarity": stat, "complementarity": comp, "status": status})


def _fista(grad, value, project, z0, L, tol, budget, stat_fn):
    """Accelerated projected gradient with function-value restart.

    Stops when ``stat_fn(z)`` (the step-one projected-gradient residual of the
    current iterate) drops below ``tol`` or after ``budget`` iterations.
    """
    t_step = 1.0 / L
    z = z0.copy()
    y = z0.copy()
    theta = 1.0
    fz = value(z)
    it = 0
    while it < budget:
        it += 1
        z_new = project(y - t_step * grad(y))
        f_new = value(z_new)
        if f_new > fz:  # restart momentum
            theta = 1.0
            z_new = project(z - t_step * grad(z))
            f_new = value(z_new)
            y = z_new.copy()
        else:
            theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
            y = z_new + ((theta - 1.0) / theta_new) * (z_new - z)
            theta = theta_new
        z, fz = z_new, f_new
        if it % 10 == 0 or it == budget:
            if stat_fn(z) <= tol:
                break
    return z, fz, it


def solve(p: FiniteProgram, opts: SolveOptions | None = None) -> SolveResult:
    """Solve the kernel program with ``opts.method``."""
    opts = opts or SolveOptions()
    for name in ("c", "A", "b", "G_S", "G_D"):
        if not np.all(np.isfinite(getattr(p, name))):
            raise SolverInputError(f"program field {name} has non-finite entries")
    C = _Feasible(p)
    keep, dropped = _independent_rows(p.A)
    if dropped:
        log.info("dropping %d dependent constraint rows: %s", len(dropped), dropped)
    A = p.A[keep]
    b = p.b[keep]
    lam_full = np.zeros(p.M_b)

    if A.shape[0] == 0:
        res = _finish(p, C.linear_min(p.c), lam_full, Status.OPTIMAL, 1, dropped, [], opts)
    elif opts.method == "exact":
        res = _solve_exact(p, C, A, b, keep, dropped, opts)
    else:
        res = _solve_al(p, C, A, b, keep, dropped, opts)
    if dropped and res.status is not Status.INFEASIBLE and _inconsistent(p.A, p.b, opts.eq_tol):
        log.info("dropped rows make A z = b unsolvable within eq_tol; reporting Infeasible")
        res = dataclasses.replace(res, status=Status.INFEASIBLE)
    return res


def _inconsistent(A, b, tol, cutoff: float = 1e-10) -> bool:
    """True when the rank-truncated system cannot meet |A z - b|_inf <= tol.

    Directions with singular value below ``cutoff`` (the row-drop threshold)
    count as unreachable; the bound uses |r|_inf >= |r|_2 / sqrt(rows).
    """
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    Uk = U[:, sv > cutoff]
    r = b - Uk @ (Uk.T @ b)
    return float(np.linalg.norm(r)) / np.sqrt(A.shape[0]) > tol


def _solve_al(p, C, A, b, keep, dropped, opts) -> SolveResult:
    nz = p.M_S + p.M_D
    lam_full = np.zeros(p.M_b)

    normA2 = float(np.linalg.norm(A, 2)) ** 2
    rho = opts.penalty_init
    lam = np.zeros(A.shape[0])
    z = np.zeros(nz)
    merits: list[float] = []
    used = 0
    prev_res = np.inf

    def stationarity(zz, ll):
        g = p.c + A.T @ ll
        return float(np.linalg.norm(zz - C.project(zz - g)))

    while used < opts.max_iters:
        lam_k, rho_k = lam.copy(), rho

        def grad(zz):
            return p.c + A.T @ (lam_k + rho_k * (A @ zz - b))

        def value(zz):
            r = A @ zz - b
            return float(p.c @ zz + lam_k @ r + 0.5 * rho_k * (r @ r))

        def inner_stat(zz):
            return stationarity(zz, lam_k + rho_k * (A @ zz - b))

        inner_tol = 0.1 * opts.stat_tol
        z, fz, it = _fista(grad, value, C.project, z, rho * normA2, inner_tol, opts.max_iters - used, inner_stat)
        used += it
        merits.append(-fz)
        if len(merits) > 1 and merits[-1] > merits[-2] + 1e-9 * (1.0 + abs(merits[-2])):
            log.warning("merit increased at outer iteration %d: %.12g -> %.12g", len(merits), merits[-2], merits[-1])

        r = A @ z - b
        lam = lam + rho * r
        res_inf = float(np.max(np.abs(r)))
        stat = stationarity(z, lam)
        if res_inf <= opts.eq_tol and stat <= opts.stat_tol:
            break
        if res_inf > 0.25 * prev_res:
            rho *= opts.penalty_growth
        prev_res = min(prev_res, res_inf)
        if rho > 1e14:
            break

    lam_full[keep] = lam
    status = Status.TOLERANCE_NOT_MET
    if float(np.max(np.abs(A @ z - b))) > opts.eq_tol:
        viol = least_violation(p, C, A, b, budget=max(opts.max_iters - used, 1000))
        if viol[1] > opts.eq_tol:
            log.info("least-violation residual %.3e exceeds eq_tol; reporting Infeasible", viol[1])
            return _finish(p, viol[0], lam_full, Status.INFEASIBLE, used, dropped, merits, opts)
    return _finish(p, z, lam_full, status, used, dropped, merits, opts)


def _solve_exact(p, C, A, b, keep, dropped, opts) -> SolveResult:
    nS, nz = p.M_S, p.M_S + p.M_D
    k = A.shape[0]
    # z = W y with y the whitened coordinates in which both balls are spheres
    W = np.zeros((nz, nz))
    W[:nS, :nS] = C.S.Q / np.sqrt(C.S.lam)
    W[nS:, nS:] = C.D.Q / np.sqrt(C.D.lam)
    Ah = A @ W
    ch = W.T @ p.c
    Qf, R = np.linalg.qr(Ah.T, mode="complete")
    Rk = R[:k, :k]
    if np.min(np.abs(np.diag(Rk))) <= 1e-14 * np.max(np.abs(np.diag(Rk))):
        raise SolverInputError("constraint matrix is numerically rank deficient after row selection")
    yp = Qf[:, :k] @ scipy.linalg.solve_triangular(Rk, b, trans="T")
    N = Qf[:, k:]
    lam_full = np.zeros(p.M_b)

    if N.shape[1] == 0:
        # the equalities pin a single point
        if yp[:nS] @ yp[:nS] > p.r_S * (1 + 1e-12) or yp[nS:] @ yp[nS:] > p.r_D * (1 + 1e-12):
            viol = least_violation(p, C, A, b, budget=max(opts.max_iters, 1000))
            return _finish(p, viol[0], lam_full, Status.INFEASIBLE, 1, dropped, [], opts)
        lam_full[keep] = scipy.linalg.solve_triangular(Rk, Qf[:, :k].T @ -ch)
        return _finish(p, W @ yp, lam_full, Status.OPTIMAL, 1, dropped, [], opts)

    # shared eigenbasis: N_S'N_S = V diag(1 - delta) V', N_D'N_D = V diag(delta) V'
    delta, V = np.linalg.eigh(N[nS:].T @ N[nS:])
    delta = np.clip(delta, 0.0, 1.0)
    e = V.T @ (N.T @ ch)
    pD = V.T @ (N[nS:].T @ yp[nS:])  # equals -V'N_S'y_S since N'yp = 0
    base = np.array([yp[:nS] @ yp[:nS] - p.r_S, yp[nS:] @ yp[nS:] - p.r_D])
    has = np.array([nS > 0, nz - nS > 0])

    def primal(alpha):
        aS, aD = alpha
        d = aS * (1.0 - delta) + aD * delta
        num = e - 2.0 * (aS - aD) * pD
        eta = -num / (2.0 * d)
        phi = base + np.array(
            [-2.0 * pD @ eta + np.sum((1.0 - delta) * eta**2), 2.0 * pD @ eta + np.sum(delta * eta**2)]
        )
        deta = np.stack([pD / d + num * (1.0 - delta) / (2.0 * d * d), -pD / d + num * delta / (2.0 * d * d)])
        J = np.array(
            [
                [np.sum((-2.0 * pD + 2.0 * (1.0 - delta) * eta) * deta[j]) for j in range(2)],
                [np.sum((2.0 * pD + 2.0 * delta * eta) * deta[j]) for j in range(2)],
            ]
        )
        return eta, phi * has, J

    def dual_value(alpha):
        d = alpha[0] * (1.0 - delta) + alpha[1] * delta
        num = e - 2.0 * (alpha[0] - alpha[1]) * pD
        if np.any((d <= 0) & (num != 0)):
            return -np.inf
        safe = np.where(d > 0, d, 1.0)
        return float(alpha @ (base * has) - np.sum(np.where(d > 0, num * num / (4.0 * safe), 0.0)))

    scale = np.array([p.r_S, p.r_D])
    candidates = []  # (dual value, alpha, eta)

    # faces: one ball multiplier is zero, the other has a closed-form maximizer of
    # g(a) = a (b - P) + sum(e p / w) - E / a
    for blk, w, pp in ((0, 1.0 - delta, pD), (1, delta, -pD)):
        if not has[blk]:
            continue
        live = w > 1e-14
        if np.any(~live & ((e != 0) | (pp != 0))):
            continue
        E = float(np.sum(e[live] ** 2 / (4.0 * w[live])))
        slope = float(np.sum(pp[live] ** 2 / w[live])) - base[blk]
        if slope <= 0 or E == 0:
            continue
        a = np.sqrt(E / slope)
        alpha_f = np.zeros(2)
        alpha_f[blk] = a
        eta_f = np.zeros_like(e)
        eta_f[live] = pp[live] / w[live] - e[live] / (2.0 * a * w[live])
        candidates.append((dual_value(alpha_f), alpha_f, eta_f))

    # interior: Newton on grad g = phi = 0 with both multipliers positive
    iters = 0
    if has.all():
        alpha = np.ones(2)
        for iters in range(1, 201):
            eta, phi, J = primal(alpha)
            if np.all(np.abs(phi) <= 1e-14 * scale + 1e-300):
                break
            try:
                step = -np.linalg.solve(J, phi)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            t = 1.0
            while np.any(alpha + t * step <= 0):
                t *= 0.5
            cur = dual_value(alpha)
            while t > 1e-12 and dual_value(alpha + t * step) < cur - 1e-15 * (1.0 + abs(cur)):
                t *= 0.5
            if t <= 1e-12 or np.max(alpha) > 1e16:
                break
            alpha = alpha + t * step
        eta, phi, _ = primal(alpha)
        if np.all(np.isfinite(eta)):
            candidates.append((dual_value(alpha), alpha, eta))

    if not candidates:
        viol = least_violation(p, C, A, b, budget=max(opts.max_iters, 1000))
        status = Status.INFEASIBLE if viol[1] > opts.eq_tol else Status.TOLERANCE_NOT_MET
        return _finish(p, viol[0], lam_full, status, iters, dropped, [], opts)
    _, alpha, eta = max(candidates, key=lambda cand: cand[0])
    y_eta = V @ eta
    phi = np.array([
        float(np.sum((yp[:nS] + N[:nS] @ y_eta) ** 2)) - p.r_S,
        float(np.sum((yp[nS:] + N[nS:] @ y_eta) ** 2)) - p.r_D,
    ])

    z = W @ (yp + N @ (V @ eta))
    z = _shrink_into_balls(C, z, nS)
    if np.any((phi > 1e-8 * np.array([p.r_S, p.r_D])) & has):
        viol = least_violation(p, C, A, b, budget=max(opts.max_iters, 1000))
        if viol[1] > opts.eq_tol:
            return _finish(p, viol[0], lam_full, Status.INFEASIBLE, iters, dropped, [], opts)
    # multipliers from the whitened stationarity condition ch + Ah' lam + 2 alpha y = 0
    y = yp + N @ (V @ eta)
    rhs = -(ch + 2.0 * np.concatenate([np.full(nS, alpha[0]), np.full(nz - nS, alpha[1])]) * y)
    lam_full[keep] = scipy.linalg.solve_triangular(Rk, Qf[:, :k].T @ rhs)
    return _finish(p, z, lam_full, Status.TOLERANCE_NOT_MET, iters, dropped, [], opts)


def _shrink_into_balls(C, z, nS):
    """Pull a block back onto its ball when roundoff left it a hair outside."""
    z = z.copy()
    for ell, sl in ((C.S, slice(0, nS)), (C.D, slice(nS, None))):
        if ell.dim:
            val = ell.value(z[sl])
            if val > ell.r:
                z[sl] *= np.sqrt(ell.r / val)
    return z


def least_violation(p: FiniteProgram, C: _Feasible, A, b, budget: int = 20000):
    """Point of the ellipsoid product minimizing ``|A z - b|^2``; returns (z, inf-norm residual)."""
    normA2 = max(float(np.linalg.norm(A, 2)) ** 2, 1e-300)

    def grad(zz):
        return A.T @ (A @ zz - b)

    def value(zz):
        r = A @ zz - b
        return 0.5 * float(r @ r)

    def stat(zz):
        return float(np.linalg.norm(zz - C.project(zz - grad(zz))))

    z, _, _ = _fista(grad, value, C.project, np.zeros(A.shape[1]), normA2, 1e-14, budget, stat)
    return z, float(np.max(np.abs(A @ z - b)))


def project_feasible(p: FiniteProgram, z0, iters: int = 2000, tol: float = 1e-12) -> np.ndarray:
    """Approximate Euclidean projection of ``z0`` onto ``{A z = b} x balls`` by Dykstra's method.

    The affine part uses the rank-revealed independent rows; the result is
    returned after the ball step, so it always satisfies the ball constraints.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    C = _Feasible(p)
    keep, _ = _independent_rows(p.A)
    A, b = p.A[keep], p.b[keep]
    if A.shape[0] == 0:
        return C.project(z0)
    Q, R = np.linalg.qr(A.T)
    rhs = scipy.linalg.solve_triangular(R, b, trans="T")

    def affine(z):
        return z - Q @ (Q.T @ z - rhs)

    x, pa, qb = z0.copy(), np.zeros_like(z0), np.zeros_like(z0)
    for _ in range(iters):
        y = affine(x + pa)
        pa = x + pa - y
        xn = C.project(y + qb)
        qb = y + qb - xn
        if np.linalg.norm(xn - x) <= tol * (1.0 + np.linalg.norm(x)):
            return xn
        x = xn
    return x
