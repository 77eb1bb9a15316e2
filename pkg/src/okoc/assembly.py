"""
Finite-rank kernel program for a fixed-horizon optimal control problem.

Decision variables are the coefficients ``w`` (occupation kernel expanded over
centers ``s_i`` in ``S = [0, T] x X x U``) and ``v`` (terminal evaluation kernel
expanded over centers ``d_i`` in ``D``). Test functions are kernel sections
``sigma_m = K_Sigma(., (t_m, x_m))`` on ``Sigma = [0, T] x X``. The program is::

    minimize    sum_i w_i h(s_i) + sum_i v_i F(d_i)
    subject to  sum_i v_i sigma_m(T, d_i) - sum_i w_i (A_f sigma_m)(s_i) = sigma_m(0, x0)
                w' G_S w <= T^2 Phi_S(0),   v' G_D v <= Phi_D(0)

with ``A_f g = dg/dt + f . grad_x g``.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import exprlang, kernels
from .kernels import KernelConfig
from .occupation import total_derivative_values

log = logging.getLogger(__name__)

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


class AssemblyError(RuntimeError):
    pass


def radical_inverse(i: int, base: int) -> float:
    """Van der Corput radical inverse of ``i`` in ``base``."""
    inv, f = 0.0, 1.0 / base
    while i > 0:
        i, digit = divmod(i, base)
        inv += digit * f
        f /= base
    return inv


def halton(count: int, dim: int, start: int = 1) -> np.ndarray:
    """``count`` Halton points in the unit cube, indices ``start, start+1, ...``."""
    if dim > len(_PRIMES):
        raise ValueError(f"Halton sequence supports up to {len(_PRIMES)} dimensions")
    return np.array(
        [[radical_inverse(i, _PRIMES[d]) for d in range(dim)] for i in range(start, start + count)],
        dtype=np.float64,
    ).reshape(count, dim)


def grid(count: int, dim: int) -> np.ndarray:
    """First ``count`` points of the smallest uniform tensor grid with at least ``count`` nodes."""
    if count == 1:
        return np.full((1, dim), 0.5)
    k = 2
    while k**dim < count:
        k += 1
    axis = np.linspace(0.0, 1.0, k)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return mesh[:count]


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("box lower and upper bounds differ in length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError(f"box lower bounds must be strictly below upper bounds: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def scale(self, unit: np.ndarray) -> np.ndarray:
        lo, hi = np.array(self.lower), np.array(self.upper)
        return lo + unit * (hi - lo)

    def contains(self, pts, tol: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return np.all((pts >= np.array(self.lower) - tol) & (pts <= np.array(self.upper) + tol), axis=1)

    @staticmethod
    def product(*boxes: "Box") -> "Box":
        return Box(sum((b.lower for b in boxes), ()), sum((b.upper for b in boxes), ()))

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True)
class ProblemSpec:
    n: int
    m: int
    T: float
    x0: tuple[float, ...]
    X: Box
    U: Box | None
    D: Box
    f: tuple[exprlang.Expr, ...]
    h: exprlang.Expr
    F: exprlang.Expr
    kernel_S: KernelConfig
    kernel_Sigma: KernelConfig
    kernel_D: KernelConfig

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if len(self.x0) != self.n or self.X.dim != self.n or self.D.dim != self.n:
            raise ValueError("x0, X and D must have the state dimension n")
        if self.m and (self.U is None or self.U.dim != self.m):
            raise ValueError("U must have the control dimension m")
        if not self.X.contains(np.array(self.x0))[0]:
            raise ValueError(f"x0={self.x0} is outside X")
        if len(self.f) != self.n:
            raise ValueError(f"expected {self.n} dynamics components, got {len(self.f)}")
        dims = {"S": (self.kernel_S, 1 + self.n + self.m), "Sigma": (self.kernel_Sigma, 1 + self.n), "D": (self.kernel_D, self.n)}
        for name, (k, want) in dims.items():
            if k.dim != want:
                raise ValueError(f"kernel {name} has dim {k.dim}, expected {want}")

    @property
    def time_box(self) -> Box:
        return Box((0.0,), (self.T,))

    @property
    def S_box(self) -> Box:
        parts = [self.time_box, self.X] + ([self.U] if self.m else [])
        return Box.product(*parts)

    @property
    def Sigma_box(self) -> Box:
        return Box.product(self.time_box, self.X)


@dataclass(frozen=True)
class CenterSet:
    s_centers: np.ndarray  # (M_S, 1+n+m)
    d_centers: np.ndarray  # (M_D, n)
    sigma_centers: np.ndarray  # (M_b, 1+n)
    seed: int = 0
    strategy: str = "halton"

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.s_centers), len(self.d_centers), len(self.sigma_centers)


@dataclass(frozen=True)
class FiniteProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G_S: np.ndarray
    G_D: np.ndarray
    r_S: float
    r_D: float
    diagnostics: tuple[str, ...] = field(default=())

    @property
    def M_S(self) -> int:
        return self.G_S.shape[0]

    @property
    def M_D(self) -> int:
        return self.G_D.shape[0]

    @property
    def M_b(self) -> int:
        return self.A.shape[0]


def _unit_points(strategy: str, count: int, dim: int, seed: int) -> np.ndarray:
    if strategy == "halton":
        # the seed shifts the starting index; seed 0 starts at index 1 (no origin point)
        return halton(count, dim, start=1 + seed)
    if strategy == "grid":
        return grid(count, dim)
    raise ValueError(f"unknown center strategy {strategy!r} (expected 'halton' or 'grid')")


def generate_centers(spec: ProblemSpec, M_S: int, M_D: int, M_b: int, strategy: str = "halton", seed: int = 0) -> CenterSet:
    """Quasi-uniform centers in S, D and Sigma; ``sigma_centers[0]`` is pinned to ``(0, x0)``."""
    for name, val in (("M_S", M_S), ("M_D", M_D), ("M_b", M_b)):
        if int(val) < 1:
            raise ValueError(f"{name} must be at least 1, got {val}")
    if M_b > M_S + M_D:
        raise ValueError(f"M_b={M_b} exceeds M_S+M_D={M_S + M_D}; the equality system would be overdetermined")
    strategy = strategy.lower()
    s = spec.S_box.scale(_unit_points(strategy, M_S, spec.S_box.dim, seed))
    d = spec.D.scale(_unit_points(strategy, M_D, spec.D.dim, seed))

    pinned = np.array([0.0, *spec.x0])
    sig = [pinned]
    for p in spec.Sigma_box.scale(_unit_points(strategy, M_b, spec.Sigma_box.dim, seed)):
        if len(sig) == M_b:
            break
        if np.max(np.abs(p - pinned)) > 1e-9:
            sig.append(p)
    return CenterSet(s, d, np.array(sig).reshape(len(sig), 1 + spec.n), seed, strategy)


def apply_total_derivative(kSigma: KernelConfig, sigma_center, s, f: Sequence[exprlang.Expr]) -> float:
    """(A_f sigma)(s) for sigma = K_Sigma(., sigma_center) and s = (t, x, u)."""
    s = np.asarray(s, dtype=float)
    n = len(f)
    return float(total_derivative_values(kSigma, f, s[:1], s[None, 1 : 1 + n], s[None, 1 + n :], np.atleast_2d(sigma_center))[0, 0])


def assemble(spec: ProblemSpec, centers: CenterSet) -> FiniteProgram:
    s, d, sig = centers.s_centers, centers.d_centers, centers.sigma_centers
    n, m = spec.n, spec.m
    if s.shape[1] != 1 + n + m or d.shape[1] != n or sig.shape[1] != 1 + n:
        raise AssemblyError("center dimensions do not match the problem")

    def _values(expr, t, X, U, where):
        try:
            return exprlang.evaluate_many(expr, t, X, U)
        except exprlang.EvalError as exc:
            bad = _first_failure(expr, t, X, U)
            raise AssemblyError(f"{where}: cannot evaluate {expr.source!r} at center {bad}: {exc}") from exc

    c_S = _values(spec.h, s[:, 0], s[:, 1 : 1 + n], s[:, 1 + n :], "running cost")
    c_D = _values(spec.F, np.full(len(d), spec.T), d, None, "terminal cost")
    try:
        AfS = total_derivative_values(spec.kernel_Sigma, spec.f, s[:, 0], s[:, 1 : 1 + n], s[:, 1 + n :], sig)
    except exprlang.EvalError as exc:
        for fi in spec.f:
            _values(fi, s[:, 0], s[:, 1 : 1 + n], s[:, 1 + n :], "dynamics")
        raise AssemblyError(f"dynamics: {exc}") from exc

    terminal = np.column_stack([np.full(len(d), spec.T), d])
    A = np.hstack([-AfS.T, kernels.matrix(spec.kernel_Sigma, sig, terminal)])
    b = kernels.matrix(spec.kernel_Sigma, sig, np.array([[0.0, *spec.x0]]))[:, 0]
    if not np.all(np.isfinite(A)):
        raise AssemblyError("constraint matrix has non-finite entries")

    diagnostics = []
    dead = np.flatnonzero(np.max(np.abs(A), axis=1) < 1e-12)
    for mrow in dead:
        diagnostics.append(f"sigma center {mrow} {tuple(map(float, sig[mrow]))} is beyond kernel support of every s and d center")
    for msg in diagnostics:
        log.warning(msg)

    return FiniteProgram(
        c=np.concatenate([c_S, c_D]),
        A=A,
        b=b,
        G_S=kernels.gram(spec.kernel_S, s),
        G_D=kernels.gram(spec.kernel_D, d),
        r_S=spec.T**2 * kernels.phi0(spec.kernel_S),
        r_D=kernels.phi0(spec.kernel_D),
        diagnostics=tuple(diagnostics),
    )


def _first_failure(expr, t, X, U):
    X = np.zeros((len(t), 0)) if X is None else X
    U = np.zeros((len(t), 0)) if U is None else U
    for k in range(len(t)):
        try:
            exprlang.evaluate(expr, t[k], X[k], U[k])
        except exprlang.ExprError:
            return (float(t[k]), *map(float, X[k]), *map(float, U[k]))
    return None


def trajectory_centers(spec: ProblemSpec, traj, M_b: int, strategy: str = "halton", seed: int = 0):
    """Centers placed on a trajectory's quadrature nodes, plus the weights that reproduce it.

    ``s`` are the Simpson nodes ``(t_k, x_k, u_k)`` and ``d = [x(T)]``; the
    returned ``z`` stacks the Simpson weights and ``v = [1]``, so ``c @ z`` is
    the trajectory's cost and ``A @ z - b`` is the discretized adjoint-identity
    residual.
    """
    S = traj.samples()
    sig = generate_centers(spec, max(M_b, 1), 1, M_b, strategy, seed).sigma_centers
    centers = CenterSet(S, traj.states[-1:].copy(), sig, seed, strategy)
    return centers, np.concatenate([traj.weights(), [1.0]])


def dump_program(p: FiniteProgram) -> str:
    """Plain-text matrix dump.

    Layout: a header line ``M_S M_D M_b``, then ``c`` (one line), ``A`` row-major
    (``M_b`` lines), ``b`` (one line), ``G_S`` (``M_S`` lines), ``G_D`` (``M_D``
    lines) and finally ``r_S r_D``. Numbers use ``repr`` so they round-trip.
    """
    out = io.StringIO()
    fmt = lambda row: " ".join(repr(float(v)) for v in row)  # noqa: E731
    out.write(f"{p.M_S} {p.M_D} {p.M_b}\n")
    out.write(fmt(p.c) + "\n")
    for row in p.A:
        out.write(fmt(row) + "\n")
    out.write(fmt(p.b) + "\n")
    for row in p.G_S:
        out.write(fmt(row) + "\n")
    for row in p.G_D:
        out.write(fmt(row) + "\n")
    out.write(f"{p.r_S!r} {p.r_D!r}\n")
    return out.getvalue()


def load_program(text: str) -> FiniteProgram:
    lines = iter(text.splitlines())
    M_S, M_D, M_b = (int(v) for v in next(lines).split())

    def vec():
        return np.array([float(v) for v in next(lines).split()], dtype=np.float64)

    def mat(rows, cols):
        return np.array([vec() for _ in range(rows)]).reshape(rows, cols)

    c = vec()
    A = mat(M_b, M_S + M_D)
    b = vec()
    G_S = mat(M_S, M_S)
    G_D = mat(M_D, M_D)
    r_S, r_D = (float(v) for v in next(lines).split())
    return FiniteProgram(c, A, b, G_S, G_D, r_S, r_D)


def empirical_candidate(spec: ProblemSpec, centers: CenterSet, traj) -> np.ndarray:
    """Coefficients of the trajectory's occupation and terminal kernels projected onto the center spans.

    ``w`` solves ``G_S w = [Gamma(s_i)]`` and ``v`` solves
    ``G_D v = [K_D(d_i, x(T))]`` (both Gram matrices jittered), i.e. the RKHS
    orthogonal projections onto span{K(., s_i)} and span{K(., d_i)}.
    """
    from scipy.linalg import cho_factor, cho_solve

    from .occupation import occupation_eval_many

    gam = occupation_eval_many(spec.kernel_S, traj, centers.s_centers)
    kd = kernels.matrix(spec.kernel_D, centers.d_centers, traj.states[-1:])[:, 0]
    w = cho_solve(cho_factor(kernels.jittered(kernels.gram(spec.kernel_S, centers.s_centers), spec.kernel_S)), gam)
    v = cho_solve(cho_factor(kernels.jittered(kernels.gram(spec.kernel_D, centers.d_centers), spec.kernel_D)), kd)
    return np.concatenate([w, v])
