"""
Occupation-kernel functionals on sampled trajectories.

The occupation kernel of a signal pair ``(x(.), u(.))`` is the RKHS element
representing ``g -> int_0^T g(t, x(t), u(t)) dt``. Every integral here is a
composite Simpson rule on the trajectory's uniform grid.

Piecewise-constant controls are supported exactly: a trajectory may carry a
tuple of *break* node indices (all even, so they fall on Simpson panel
boundaries). Quadrature is then split per segment, and at the closing node of a
segment the left-limit control (the segment's own value) is used, keeping the
rule fourth order across control switches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import exprlang, kernels
from .kernels import KernelConfig


class TrajectoryError(ValueError):
    pass


def simpson_weights(N: int, T: float) -> np.ndarray:
    """Composite Simpson weights for ``N`` (even) intervals on ``[0, T]``."""
    if N < 2 or N % 2:
        raise TrajectoryError(f"Simpson rule needs an even N >= 2, got {N}")
    h = T / N
    w = np.full(N + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (h / 3.0)


@dataclass(frozen=True)
class Trajectory:
    """States and controls sampled on a uniform grid ``t_k = k T / N``."""

    times: np.ndarray
    states: np.ndarray  # (N+1, n)
    controls: np.ndarray  # (N+1, m)
    breaks: tuple[int, ...] = field(default=())

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        states = np.asarray(self.states, dtype=np.float64)
        controls = np.asarray(self.controls, dtype=np.float64)
        if states.ndim == 1:
            states = states[:, None]
        if controls.ndim == 1:
            controls = controls.reshape(times.size, -1)
        N = times.size - 1
        if N < 2 or N % 2:
            raise TrajectoryError(f"trajectory needs an even number N >= 2 of intervals, got {N}")
        if states.shape[0] != N + 1 or controls.shape[0] != N + 1:
            raise TrajectoryError("states and controls must have one row per time node")
        T = times[-1]
        if times[0] != 0.0 or not T > 0:
            raise TrajectoryError("time grid must start at 0 and end at T > 0")
        if np.max(np.abs(np.diff(times) - T / N)) > 1e-12 * T:
            raise TrajectoryError("time grid is not uniform; resample before building a Trajectory")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(controls))):
            raise TrajectoryError("non-finite state or control sample")
        breaks = tuple(sorted(int(b) for b in self.breaks))
        for b in breaks:
            if b <= 0 or b >= N or b % 2:
                raise TrajectoryError(f"control break at node {b} must be an even interior node")
        for name, arr in (("times", times), ("states", states), ("controls", controls)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "breaks", breaks)

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.controls.shape[1]

    def segments(self):
        """Yield ``(start, stop, controls)`` per constant-control segment.

        ``controls`` has one row per node ``start..stop`` with the closing
        node's control replaced by its left limit.
        """
        edges = (0, *self.breaks, self.N)
        for a, b in zip(edges[:-1], edges[1:]):
            u = self.controls[a : b + 1].copy()
            if b != self.N:
                u[-1] = self.controls[b - 1]
            yield a, b, u

    def quadrature_nodes(self):
        """Nodes and Simpson weights with break nodes split into left/right copies.

        Returns ``(t, X, U, w)`` such that ``sum(w * g(t, X, U))`` is the
        segment-wise Simpson rule for ``int_0^T g(t, x(t), u(t)) dt``.
        """
        h = self.T / self.N
        ts, xs, us, ws = [], [], [], []
        for a, b, u in self.segments():
            ts.append(self.times[a : b + 1])
            xs.append(self.states[a : b + 1])
            us.append(u)
            ws.append(simpson_weights(b - a, h * (b - a)))
        return np.concatenate(ts), np.vstack(xs), np.vstack(us), np.concatenate(ws)

    def samples(self) -> np.ndarray:
        """Stacked ``(t, x, u)`` quadrature points, shape (nodes, 1+n+m)."""
        t, X, U, _ = self.quadrature_nodes()
        return np.column_stack([t, X, U])

    def weights(self) -> np.ndarray:
        return self.quadrature_nodes()[3]

    def check_domain(self, X_box, U_box, tol: float = 1e-12) -> None:
        lo, hi = (np.asarray(v, dtype=float) for v in X_box)
        if np.any(self.states < lo - tol) or np.any(self.states > hi + tol):
            raise TrajectoryError("trajectory leaves the state box X")
        if self.m:
            lo, hi = (np.asarray(v, dtype=float) for v in U_box)
            if np.any(self.controls < lo - tol) or np.any(self.controls > hi + tol):
                raise TrajectoryError("control leaves the box U")


def _check_kernel(k: KernelConfig, want: int, what: str):
    if k.dim != want:
        raise kernels.KernelError(f"{what} kernel has dim {k.dim}, expected {want}")


def occupation_eval(kS: KernelConfig, traj: Trajectory, y) -> float:
    """Gamma(y) = int_0^T K_S(y, (t, x(t), u(t))) dt."""
    _check_kernel(kS, 1 + traj.n + traj.m, "S")
    Z = traj.samples()
    w = traj.weights()
    return float(kernels.matrix(kS, np.atleast_2d(y), Z)[0] @ w)


def occupation_eval_many(kS: KernelConfig, traj: Trajectory, Y) -> np.ndarray:
    _check_kernel(kS, 1 + traj.n + traj.m, "S")
    return kernels.matrix(kS, Y, traj.samples()) @ traj.weights()


def occupation_norm_sq(kS: KernelConfig, traj: Trajectory) -> float:
    """Double Simpson approximation of ``int int K(z(tau), z(t)) dtau dt``."""
    _check_kernel(kS, 1 + traj.n + traj.m, "S")
    Z = traj.samples()
    w = traj.weights()
    return float(w @ kernels.matrix(kS, Z, Z) @ w)


def inner_with_function(h: exprlang.Expr, traj: Trajectory) -> float:
    """int_0^T h(t, x(t), u(t)) dt, i.e. <h, Gamma> when h lies in H(S)."""
    if (h.n, h.m) != (traj.n, traj.m):
        raise exprlang.EvalError(f"expression signature (n={h.n}, m={h.m}) does not match trajectory")
    t, X, U, w = traj.quadrature_nodes()
    return float(w @ exprlang.evaluate_many(h, t, X, U))


def total_derivative_values(kSigma: KernelConfig, f: Sequence[exprlang.Expr], t, X, U, centers) -> np.ndarray:
    """(A_f g_j)(t_k, x_k, u_k) for sections g_j = K_Sigma(., centers[j]).

    Returns shape (len(t), len(centers)).
    """
    t = np.asarray(t, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float).reshape(t.size, -1)
    U = np.asarray(U, dtype=float).reshape(t.size, -1)
    if len(f) != X.shape[1]:
        raise exprlang.EvalError(f"dynamics has {len(f)} components for a {X.shape[1]}-dimensional state")
    _check_kernel(kSigma, 1 + X.shape[1], "Sigma")
    F = np.column_stack([exprlang.evaluate_many(fi, t, X, U) for fi in f]) if len(f) else np.zeros((t.size, 0))
    D = kernels.grad_matrix(kSigma, np.column_stack([t, X]), centers)
    return D[:, :, 0] + np.einsum("kjn,kn->kj", D[:, :, 1:], F)


def adjoint_identity_residuals(kSigma: KernelConfig, f: Sequence[exprlang.Expr], traj: Trajectory, centers) -> np.ndarray:
    """Vectorized adjoint-identity residual for several sigma centers."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    t, X, U, w = traj.quadrature_nodes()
    lhs = w @ total_derivative_values(kSigma, f, t, X, U, centers)
    ends = np.array([[traj.T, *traj.states[-1]], [0.0, *traj.states[0]]])
    G = kernels.matrix(kSigma, ends, centers)
    return np.abs(lhs - (G[0] - G[1]))


def adjoint_identity_residual(kSigma: KernelConfig, f: Sequence[exprlang.Expr], traj: Trajectory, center) -> float:
    """|<A_f g, Gamma> - (g(T, x(T)) - g(0, x(0)))| with g = K_Sigma(., center).

    Only tends to zero when ``traj`` actually solves ``x' = f``.
    """
    return float(adjoint_identity_residuals(kSigma, f, traj, center)[0])


# -- CSV exchange -------------------------------------------------------------


def write_csv(traj: Trajectory, path) -> None:
    header = ["t", *(f"x{i + 1}" for i in range(traj.n)), *(f"u{j + 1}" for j in range(traj.m))]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in np.column_stack([traj.times, traj.states, traj.controls]):
            wr.writerow([repr(float(v)) for v in row])


def read_csv(path, breaks: Sequence[int] = ()) -> Trajectory:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise TrajectoryError(f"{path}: header must start with 't'")
    header = [c.strip() for c in rows[0]]
    n = sum(1 for c in header if c.startswith("x"))
    m = sum(1 for c in header if c.startswith("u"))
    expected = ["t", *(f"x{i + 1}" for i in range(n)), *(f"u{j + 1}" for j in range(m))]
    if header != expected:
        raise TrajectoryError(f"{path}: header {header} is not of the form t,x1..xn,u1..um")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    return Trajectory(data[:, 0], data[:, 1 : 1 + n], data[:, 1 + n :].reshape(len(data), m), breaks)
