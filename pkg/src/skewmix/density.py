"""Invariant density of the base map and the normalized preimage weights A_n."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonConvergence
from .maps import ExpandingMap
from .trig import TrigPoly, as_points, frequency_box, grid_coefficients, torus_grid


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Trigonometric approximation of the invariant density h (mean one)."""

    poly: TrigPoly
    K_h: int
    mean: float
    positivity_margin: float
    residual: float
    iterations: int = 0

    def __call__(self, x) -> np.ndarray:
        return self.poly.real(x)

    def log(self, x) -> np.ndarray:
        return np.log(self(x))

    @property
    def fourier_coeffs(self) -> dict[tuple, complex]:
        return self.poly.table()

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.poly.freqs == 0))


def transfer_apply(
    tmap: ExpandingMap,
    f: np.ndarray,
    multiplier: Callable[[np.ndarray], np.ndarray] | None = None,
    K_interp: int | None = None,
) -> np.ndarray:
    """(L f)(x) = sum_{Ty=x} m(y) f(y) / |Jac T(y)| on a uniform grid.

    ``f`` holds samples on the uniform grid of shape (M,)*d; values at the
    preimages are obtained by trigonometric interpolation, truncated to
    frequencies |k|_inf <= K_interp when given.  ``multiplier`` (default 1)
    twists the sum, e.g. y -> exp(2 pi i nu.tau(y)).
    """
    f = np.asarray(f)
    d = tmap.dim
    M = f.shape[0]
    if f.shape != (M,) * d:
        raise ValueError(f"expected grid of shape {(M,) * d}, got {f.shape}")
    if M & (M - 1) or M < 4 * tmap.degree:
        raise ValueError("grid size must be a power of two and at least 4N")
    half = (M - 1) // 2 if K_interp is None else min(K_interp, (M - 1) // 2)
    freqs = frequency_box(half, d)
    poly = TrigPoly(freqs, grid_coefficients(f, freqs))
    x = torus_grid(M, d)
    ys = tmap.inverse_branches(x)
    vals = poly(ys)
    if not np.iscomplexobj(f) and multiplier is None:
        vals = vals.real
    weights = np.exp(-tmap.log_jacobian(ys))
    if multiplier is not None:
        vals = vals * multiplier(ys)
    out = np.sum(vals * weights, axis=-1)
    return out.reshape((M,) * d)


def _dirichlet(t: np.ndarray, K: int, M: int) -> np.ndarray:
    """(1/M) sum_{|k|<=K} e(k t), the weight of a grid sample in trigonometric interpolation."""
    t = t - np.round(t)
    den = np.sin(np.pi * t)
    small = np.abs(den) < 1e-12
    safe = np.where(small, 1.0, den)
    return np.where(small, (2 * K + 1) / M, np.sin((2 * K + 1) * np.pi * t) / (M * safe))


def interpolation_matrix(points: np.ndarray, M: int, K: int) -> np.ndarray:
    """Matrix taking samples on the uniform (M,)*d grid to interpolant values at points (P, d)."""
    grid = np.arange(M) / M
    d = points.shape[-1]
    E = _dirichlet(points[:, 0, None] - grid[None, :], K, M)
    for j in range(1, d):
        Ej = _dirichlet(points[:, j, None] - grid[None, :], K, M)
        E = (E[:, :, None] * Ej[:, None, :]).reshape(len(points), -1)
    return E


def transfer_matrix(
    tmap: ExpandingMap,
    M: int,
    multiplier: Callable[[np.ndarray], np.ndarray] | None = None,
    K_interp: int | None = None,
) -> np.ndarray:
    """Dense matrix of :func:`transfer_apply` on the flattened (M,)*d grid."""
    d = tmap.dim
    half = (M - 1) // 2 if K_interp is None else min(K_interp, (M - 1) // 2)
    x = torus_grid(M, d)
    ys = tmap.inverse_branches(x)
    w = np.exp(-tmap.log_jacobian(ys))
    if multiplier is not None:
        w = w * multiplier(ys)
    L = np.zeros((len(x), len(x)), dtype=w.dtype)
    for b in range(ys.shape[-2]):
        L += w[:, b, None] * interpolation_matrix(ys[:, b, :], M, half)
    return L


def invariant_density(
    tmap: ExpandingMap,
    K_h: int = 64,
    tol: float = 1e-12,
    grid: int = 2048,
    max_iter: int = 10_000,
) -> DensityModel:
    """Density of the absolutely continuous invariant measure by power iteration."""
    if tol < 1e-12:
        raise ValueError("tol must be >= 1e-12")
    d = tmap.dim
    if tmap.kind == "linear":
        # Lebesgue measure is invariant for linear toral endomorphisms
        return DensityModel(TrigPoly.constant(1.0, d), K_h, 1.0, 1.0, 0.0, 0)
    M = grid if d == 1 else max(32, int(round(grid ** (1.0 / d))))
    f = np.ones((M,) * d)
    for it in range(1, max_iter + 1):
        g = transfer_apply(tmap, f, K_interp=K_h)
        g = g / g.mean()
        diff = np.abs(g - f).max()
        f = g
        if diff < tol:
            break
    else:
        raise NonConvergence(f"density power iteration stalled at sup-difference {diff:.3g}")
    freqs = frequency_box(K_h, d)
    coeffs = grid_coefficients(f, freqs)
    coeffs = coeffs / coeffs[len(coeffs) // 2]
    poly = TrigPoly(freqs, coeffs).simplify(1e-16)
    # drop the imaginary rounding noise so that h is exactly real
    table = {k: v for k, v in poly.table().items()}
    sym = {k: 0.5 * (v + np.conj(table.get(tuple(-i for i in k), v))) for k, v in table.items()}
    poly = TrigPoly.from_table(sym, d)
    vals = poly.real(torus_grid(M, d)).reshape((M,) * d)
    residual = float(np.abs(transfer_apply(tmap, vals, K_interp=K_h) - vals).max())
    return DensityModel(poly, K_h, float(poly.mean().real), float(vals.min()), residual, it)


def weight_A(tmap: ExpandingMap, h: DensityModel, y, n: int) -> np.ndarray:
    """A_n(y) = h(y) / (|Jac T^n(y)| h(T^n y)), Jacobian accumulated in log space."""
    pts = as_points(y, tmap.dim)
    log_jac = np.zeros(pts.shape[:-1])
    cur = pts
    for _ in range(n):
        log_jac = log_jac + tmap.log_jacobian(cur)
        cur = tmap.eval(cur)
    return np.exp(h.log(pts) - log_jac - h.log(cur))


def step_log_weight(tmap: ExpandingMap, h: DensityModel, y: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """log A(y) for a single step, given y and its known image ty = T y."""
    return h.log(y) - tmap.log_jacobian(y) - h.log(ty)
