"""
Ground-truth generators used to check the kernel program.

Everything here is deliberately independent of the kernel machinery: fixed-step
RK4 simulation, Simpson costing of trajectories, the scalar Riccati equation for
linear-quadratic problems, and exhaustive enumeration of piecewise-constant
controls at desk scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import exprlang
from .occupation import Trajectory, inner_with_function, simpson_weights

#: Maximum number of candidates ``brute_force_cost`` will enumerate.
ENUMERATION_LIMIT = 10**6


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PiecewiseControl:
    """Control that is constant on ``[breakpoints[i], breakpoints[i+1])``."""

    breakpoints: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(tuple(float(v) for v in np.atleast_1d(row)) for row in self.values)
        if len(bp) < 2 or bp[0] != 0.0 or any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must increase from 0 to T")
        if len(vals) != len(bp) - 1:
            raise ValueError(f"{len(bp) - 1} segments need {len(bp) - 1} values, got {len(vals)}")
        if len({len(v) for v in vals}) != 1:
            raise ValueError("all segment values must have the same length m")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, value, T: float) -> "PiecewiseControl":
        return cls((0.0, T), (tuple(np.atleast_1d(value)),))

    @classmethod
    def uniform(cls, values, T: float) -> "PiecewiseControl":
        """Equal-length segments on ``[0, T]``; ``values`` has one row per segment."""
        rows = [tuple(np.atleast_1d(v)) for v in values]
        bp = tuple(T * i / len(rows) for i in range(len(rows))) + (T,)
        return cls(bp, tuple(rows))

    @property
    def T(self) -> float:
        return self.breakpoints[-1]

    @property
    def m(self) -> int:
        return len(self.values[0])


@dataclass(frozen=True)
class ExprControl:
    """Control given by expressions in ``t`` (and optionally the state, as feedback).

    Each component is parsed with signature ``(n, 0)``.
    """

    exprs: tuple[exprlang.Expr, ...]

    @classmethod
    def parse(cls, sources: Sequence[str], n: int) -> "ExprControl":
        return cls(tuple(exprlang.parse(s, n, 0) for s in sources))

    @property
    def m(self) -> int:
        return len(self.exprs)


def _node_breaks(u: PiecewiseControl, T: float, N: int) -> list[int]:
    if abs(u.T - T) > 1e-12 * T:
        raise ValueError(f"control horizon {u.T} does not match T={T}")
    nodes = []
    for b in u.breakpoints[1:-1]:
        k = round(b * N / T)
        if abs(k * T / N - b) > 1e-9 * T or k % 2:
            raise ValueError(f"control breakpoint {b} is not on an even node of the N={N} grid")
        nodes.append(k)
    return nodes


def _field(f: Sequence[exprlang.Expr], t: float, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    tt = np.full(X.shape[0], t)
    return np.column_stack([exprlang.evaluate_many(fi, tt, X, U) for fi in f])


def _rk4(f, x0s: np.ndarray, control, T: float, N: int, record: bool = True):
    """Batched RK4. ``control(k, t, X)`` returns the (C, m) control for stage time t of step k."""
    h = T / N
    X = np.array(x0s, dtype=np.float64)
    states = [X.copy()] if record else None
    for k in range(N):
        try:
            X = _rk4_step(f, control, k, k * h, h, X)
        except exprlang.EvalError as exc:
            raise SimulationError(f"dynamics could not be evaluated in step {k} (node {k} to {k + 1}, t={k * h:g}): {exc}") from exc
        if not np.all(np.isfinite(X)):
            raise SimulationError(f"non-finite state at node {k + 1} (t={(k + 1) * h:g})")
        if record:
            states.append(X.copy())
    return states if record else X


def _rk4_step(f, control, k, t, h, X):
    """One classical RK4 step; ``control`` is queried at every stage."""
    U1 = control(k, t, X)
    k1 = _field(f, t, X, U1)
    X2 = X + 0.5 * h * k1
    U2 = control(k, t + 0.5 * h, X2)
    k2 = _field(f, t + 0.5 * h, X2, U2)
    X3 = X + 0.5 * h * k2
    U3 = control(k, t + 0.5 * h, X3)
    k3 = _field(f, t + 0.5 * h, X3, U3)
    X4 = X + h * k3
    U4 = control(k, t + h, X4)
    k4 = _field(f, t + h, X4, U4)
    return X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(f: Sequence[exprlang.Expr], x0, u, T: float, N: int) -> Trajectory:
    """Fixed-step RK4 solution of ``x' = f(t, x, u)``, ``x(0) = x0``, on ``N`` steps.

    ``u`` is a :class:`PiecewiseControl` (breakpoints must sit on even grid
    nodes), an :class:`ExprControl`, or ``None`` when the system has no inputs.
    """
    if N < 2 or N % 2:
        raise ValueError(f"N must be even and >= 2, got {N}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    n = x0.size
    if len(f) != n or any(fi.n != n for fi in f):
        raise ValueError("dynamics do not match the state dimension")
    m = f[0].m if f else 0
    h = T / N
    times = np.arange(N + 1) * h
    times[-1] = T
    breaks: list[int] = []

    if u is None:
        if m:
            raise ValueError("the dynamics take a control but none was given")
        node_u = np.zeros((N + 1, 0))

        def control(k, t, X):
            return np.zeros((X.shape[0], 0))

    elif isinstance(u, PiecewiseControl):
        if u.m != m:
            raise ValueError(f"control has {u.m} components, dynamics expect {m}")
        breaks = _node_breaks(u, T, N)
        seg_of_step = np.searchsorted(np.array([0, *breaks]), np.arange(N), side="right") - 1
        vals = np.array(u.values, dtype=np.float64)
        node_u = vals[np.append(seg_of_step, seg_of_step[-1])]

        def control(k, t, X):
            return np.broadcast_to(vals[seg_of_step[k]], (X.shape[0], m))

    elif isinstance(u, ExprControl):
        if u.m != m or any(e.n != n for e in u.exprs):
            raise ValueError("control expressions do not match the signature")

        def control(k, t, X):
            tt = np.full(X.shape[0], t)
            return np.column_stack([exprlang.evaluate_many(e, tt, X) for e in u.exprs]) if m else np.zeros((X.shape[0], 0))

        node_u = None
    else:
        raise TypeError(f"unsupported control {u!r}")

    states = np.vstack(_rk4(f, x0[None, :], control, T, N))
    if node_u is None:
        node_u = np.column_stack([exprlang.evaluate_many(e, times, states) for e in u.exprs])
    return Trajectory(times, states, node_u, tuple(breaks))


def terminal_value(F: exprlang.Expr, traj: Trajectory) -> float:
    return exprlang.evaluate_many(F, [traj.T], traj.states[-1:])[0]


def trajectory_cost(traj: Trajectory, h: exprlang.Expr, F: exprlang.Expr) -> float:
    """Running cost by Simpson quadrature plus the terminal cost at ``x(T)``."""
    return inner_with_function(h, traj) + terminal_value(F, traj)


def riccati_lq_cost(a: float, bb: float, q: float, r: float, T: float, x0: float, N: int = 2000) -> float:
    """Optimal cost of ``x' = a x + bb u``, cost ``int q x^2 + r u^2``, zero terminal cost.

    Integrates ``-p' = q + 2 a p - p^2 bb^2 / r``, ``p(T) = 0`` backward with RK4.
    """
    if r <= 0 or q < 0:
        raise ValueError("need r > 0 and q >= 0")

    def rhs(p):  # dp/ds in reversed time s = T - t
        return q + 2.0 * a * p - p * p * bb * bb / r

    p = 0.0
    h = T / N
    for _ in range(N):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h * k2)
        k4 = rhs(p + h * k3)
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p * x0 * x0


@dataclass(frozen=True)
class BruteForceResult:
    best_cost: float
    best_control: PiecewiseControl
    candidates: int


def brute_force_cost(spec, levels: Sequence[float], segments: int, N_per_segment: int, chunk: int = 4096) -> BruteForceResult:
    """Exhaustive search over piecewise-constant controls on equal segments.

    ``spec`` needs ``f``, ``h``, ``F``, ``x0``, ``T`` and ``m`` attributes (a
    :class:`~okoc.assembly.ProblemSpec`). Ties go to the lexicographically
    smallest control (levels sorted ascending, earlier segments first).
    """
    levels = sorted({float(v) for v in levels})
    m = spec.m
    slots = segments * m
    if not levels or segments < 1:
        raise ValueError("need at least one level and one segment")
    if m == 0:
        raise ValueError("brute force needs a control input (m >= 1)")
    total = len(levels) ** slots
    if total > ENUMERATION_LIMIT:
        raise ValueError(f"{len(levels)}^{slots} = {total} candidates exceeds the limit {ENUMERATION_LIMIT}")
    if N_per_segment < 2 or N_per_segment % 2:
        raise ValueError("N_per_segment must be even and >= 2")

    T = spec.T
    N = segments * N_per_segment
    hstep = T / N
    seg_w = simpson_weights(N_per_segment, hstep * N_per_segment)
    x0 = np.asarray(spec.x0, dtype=np.float64)
    lv = np.array(levels)

    costs = np.empty(total)
    combos = itertools.product(range(len(levels)), repeat=slots)
    start = 0
    while start < total:
        idx = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        C = idx.shape[0]
        U_all = lv[idx].reshape(C, segments, m)
        X = np.broadcast_to(x0, (C, x0.size)).copy()
        acc = np.zeros(C)
        for s in range(segments):
            Us = np.ascontiguousarray(U_all[:, s, :])
            base = s * N_per_segment

            def running(j, X, Us=Us, base=base):
                t = np.full(C, (base + j) * hstep)
                return exprlang.evaluate_many(spec.h, t, X, Us)

            acc += seg_w[0] * running(0, X)
            for j in range(N_per_segment):
                X = _step(spec.f, X, Us, (base + j) * hstep, hstep)
                acc += seg_w[j + 1] * running(j + 1, X)
        acc += exprlang.evaluate_many(spec.F, np.full(C, T), X)
        costs[start : start + C] = acc
        start += C

    best = int(np.argmin(costs))
    digits = np.unravel_index(best, (len(levels),) * slots) if slots else ()
    values = lv[np.array(digits, dtype=np.intp)].reshape(segments, m)
    control = PiecewiseControl.uniform(values, T)
    traj = simulate(spec.f, x0, control, T, N)
    return BruteForceResult(trajectory_cost(traj, spec.h, spec.F), control, total)


def _step(f, X, U, t, h):
    k1 = _field(f, t, X, U)
    k2 = _field(f, t + 0.5 * h, X + 0.5 * h * k1, U)
    k3 = _field(f, t + 0.5 * h, X + 0.5 * h * k2, U)
    k4 = _field(f, t + h, X + h * k3, U)
    Xn = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(Xn)):
        raise SimulationError(f"non-finite state near t={t + h:g}")
    return Xn


def closed_form_lq_cost(T: float, x0: float) -> float:
    """tanh(T) x0^2: optimal cost of x' = u with running cost x^2 + u^2."""
    return math.tanh(T) * x0 * x0
