"""
Radial kernels with analytic first derivatives.

Three families are supported, all normalized so that ``Phi(0) = 1``:

* ``gaussian``      K(x, y) = exp(-|x - y|^2 / mu)
* ``wendland_c2``   K(x, y) = (1 - q)_+^4 (4q + 1),                q = |x - y| / rho
* ``wendland_c4``   K(x, y) = (1 - q)_+^6 (35q^2 + 18q + 3) / 3,   q = |x - y| / rho

Composite arguments such as ``(t, x)`` or ``(t, x, u)`` are handled as a single
concatenated vector. Pairwise distances are always formed from explicit
differences (never the ``|x|^2 + |y|^2 - 2<x, y>`` expansion) so that
``K(x, y) == K(y, x)`` holds bit for bit and Gram entries agree exactly with
pointwise evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

#: Relative diagonal jitter added wherever a Gram matrix is factorized.
JITTER = 1e-10


class KernelError(ValueError):
    """Invalid kernel configuration or kernel arguments."""


class Family(str, Enum):
    GAUSSIAN = "gaussian"
    WENDLAND_C2 = "wendland_c2"
    WENDLAND_C4 = "wendland_c4"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().lower().replace("-", "_")
        aliases = {"wendlandc2": "wendland_c2", "wendlandc4": "wendland_c4"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            choices = ", ".join(f.value for f in cls)
            raise KernelError(f"unknown kernel family {name!r} (expected one of {choices})") from None


@dataclass(frozen=True)
class KernelConfig:
    """A radial kernel on R^dim.

    ``shape`` is the Gaussian length-scale-squared ``mu``; ``support_radius``
    is the Wendland radius ``rho`` and is ignored for the Gaussian.
    """

    family: Family
    dim: int
    shape: float = 1.0
    support_radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family) if isinstance(self.family, str) else self.family)
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise KernelError(f"dim must be a positive integer, got {self.dim!r}")
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise KernelError(f"shape must be positive, got {self.shape!r}")
        if self.is_wendland and not (np.isfinite(self.support_radius) and self.support_radius > 0):
            raise KernelError(f"support_radius must be positive, got {self.support_radius!r}")

    @property
    def is_wendland(self) -> bool:
        return self.family is not Family.GAUSSIAN

    def with_dim(self, dim: int) -> "KernelConfig":
        return KernelConfig(self.family, dim, self.shape, self.support_radius)

    def to_dict(self) -> dict:
        out = {"family": self.family.value, "shape": float(self.shape)}
        if self.is_wendland:
            out["support_radius"] = float(self.support_radius)
        return out


def _check_points(k: KernelConfig, pts, name: str) -> np.ndarray:
    arr = np.asarray(pts, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != k.dim:
        raise KernelError(f"{name}: expected vectors of length {k.dim}, got shape {np.shape(pts)}")
    if not np.all(np.isfinite(arr)):
        raise KernelError(f"{name}: non-finite entries")
    return arr


def _profile(k: KernelConfig, sq: np.ndarray) -> np.ndarray:
    """Phi as a function of the squared distance."""
    if k.family is Family.GAUSSIAN:
        return np.exp(-sq / k.shape)
    q = np.sqrt(sq) / k.support_radius
    s = np.maximum(1.0 - q, 0.0)
    if k.family is Family.WENDLAND_C2:
        val = s**4 * (4.0 * q + 1.0)
    else:
        val = s**6 * (35.0 * q * q + 18.0 * q + 3.0) / 3.0
    # rounding overshoots 1 by an ulp for q ~ 1e-12
    return np.minimum(val, 1.0)


def _profile_slope(k: KernelConfig, sq: np.ndarray) -> np.ndarray:
    """Scalar ``c(r)`` with grad_x K(x, y) = c(|x-y|) * (x - y)."""
    if k.family is Family.GAUSSIAN:
        return -2.0 / k.shape * np.exp(-sq / k.shape)
    rho2 = k.support_radius * k.support_radius
    q = np.sqrt(sq) / k.support_radius
    s = np.maximum(1.0 - q, 0.0)
    if k.family is Family.WENDLAND_C2:
        return -20.0 * s**3 / rho2
    return -56.0 / 3.0 * s**5 * (5.0 * q + 1.0) / rho2


def _diffs(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X[:, None, :] - Y[None, :, :]


def phi0(k: KernelConfig) -> float:
    """Kernel value at zero separation; 1.0 for every supported family."""
    return float(_profile(k, np.zeros(1))[0])


def eval(k: KernelConfig, x, y) -> float:  # noqa: A001 - mirrors the math name
    """K(x, y) for two single vectors."""
    X = _check_points(k, x, "x")
    Y = _check_points(k, y, "y")
    if X.shape[0] != 1 or Y.shape[0] != 1:
        raise KernelError("eval expects single vectors; use matrix() for batches")
    return float(matrix(k, X, Y)[0, 0])


def matrix(k: KernelConfig, X, Y) -> np.ndarray:
    """Cross-kernel matrix ``M[i, j] = K(X[i], Y[j])``."""
    X = _check_points(k, X, "X")
    Y = _check_points(k, Y, "Y")
    d = _diffs(X, Y)
    return _profile(k, np.einsum("ijk,ijk->ij", d, d))


def grad_first(k: KernelConfig, x, y) -> np.ndarray:
    """Gradient of ``K(., y)`` evaluated at ``x``."""
    X = _check_points(k, x, "x")
    Y = _check_points(k, y, "y")
    if X.shape[0] != 1 or Y.shape[0] != 1:
        raise KernelError("grad_first expects single vectors; use grad_matrix() for batches")
    return grad_matrix(k, X, Y)[0, 0]


def grad_matrix(k: KernelConfig, X, Y) -> np.ndarray:
    """Array ``D[i, j, :] = grad_x K(x, Y[j])`` at ``x = X[i]``; shape (len(X), len(Y), dim)."""
    X = _check_points(k, X, "X")
    Y = _check_points(k, Y, "Y")
    d = _diffs(X, Y)
    slope = _profile_slope(k, np.einsum("ijk,ijk->ij", d, d))
    return slope[:, :, None] * d


def gram(k: KernelConfig, points) -> np.ndarray:
    P = _check_points(k, points, "points")
    if P.shape[0] == 0:
        raise KernelError("gram needs at least one point")
    return matrix(k, P, P)


def jittered(G: np.ndarray, k: KernelConfig | None = None) -> np.ndarray:
    """``G + JITTER * Phi(0) * I``; the form used before any factorization."""
    scale = phi0(k) if k is not None else 1.0
    return G + JITTER * scale * np.eye(G.shape[0])


def median_sq_distance(lower, upper, n_probe: int = 200) -> float:
    """Median pairwise squared distance among Halton probe points in a box.

    Used as the default Gaussian ``mu`` (and, square-rooted, as the default
    Wendland radius).
    """
    from .assembly import halton  # local import: assembly depends on this module

    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    pts = lower + halton(n_probe, lower.size) * (upper - lower)
    d = _diffs(pts, pts)
    sq = np.einsum("ijk,ijk->ij", d, d)
    iu = np.triu_indices(n_probe, k=1)
    return float(np.median(sq[iu]))
