"""Symbol bounds for the twisted operators.

The cotangent cocycle F_{n,y}(xi) = (D_yT)^t xi + (D_y tau)^t n transports a
covector sitting at x = T y back to y.  Its n-fold composition along a branch
of T^{-n} x is (D_yT^n)^t xi + W_n(y) n, and p~_{n} averages the weight
quotient [g(|F^n_y xi|) / g(|xi|)]^{2s} over the preimages y with weights A_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .density import DensityModel, step_log_weight, weight_A
from .maps import ExpandingMap, FiberRotation, preimage_levels, preimage_tree
from .trig import as_points, torus_grid


@dataclass(frozen=True)
class WeightG:
    """g(t) = 1 for t <= R, g(t) = t for t >= (gamma+1)R/2, cubic Hermite blend between."""

    R: float
    gamma: float

    def __post_init__(self):
        if self.gamma <= 1.0 or self.R <= 1.0:
            raise ValueError("need gamma > 1 and R > 1")

    @classmethod
    def for_system(cls, tmap: ExpandingMap, tau: FiberRotation, margin: float = 1.01) -> "WeightG":
        bound = max(1.0, max(1.0, 2.0 * tau.dtau_sup) / (tmap.gamma - 1.0))
        return cls(margin * bound, tmap.gamma)

    @property
    def knots(self) -> tuple[float, float]:
        return self.R, 0.5 * (self.gamma + 1.0) * self.R

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        R, b = self.knots
        h = b - R
        u = np.clip((t - R) / h, 0.0, 1.0)
        blend = 1.0 + (b - 1.0) * (3 * u**2 - 2 * u**3) + h * (u**3 - u**2)
        return np.where(t <= R, 1.0, np.where(t >= b, t, blend))

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        R, b = self.knots
        h = b - R
        u = np.clip((t - R) / h, 0.0, 1.0)
        blend = ((b - 1.0) * (6 * u - 6 * u**2) + h * (3 * u**2 - 2 * u)) / h
        return np.where(t <= R, 0.0, np.where(t >= b, 1.0, blend))

    def dg_sup(self) -> float:
        R, b = self.knots
        h = b - R
        # g' on the blend is a quadratic in u; check the endpoints and the vertex
        denom = 12 * (b - 1.0) - 6 * h
        cand = [0.0, 1.0]
        if denom != 0:
            cand.append(min(1.0, max(0.0, (6 * (b - 1.0) - 2 * h) / denom)))
        return float(max(1.0, max(self.derivative(R + h * u) for u in cand)))

    def exterior_bound(self, s: float) -> float:
        """Bound ((gamma+1)/2)^{2s} on p~ for |xi| > R."""
        return (0.5 * (self.gamma + 1.0)) ** (2 * s)


def _direction(n_dir, ell: int) -> np.ndarray:
    n = np.asarray(n_dir, dtype=float).ravel()
    if n.shape != (ell,):
        raise ValueError(f"direction must have {ell} components")
    norm = np.linalg.norm(n)
    if norm != 0.0 and abs(norm - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector or zero")
    return n


def _transpose_apply(D: np.ndarray, xi: np.ndarray) -> np.ndarray:
    # (D^t xi)_j = sum_i D_ij xi_i, batched over leading axes
    return np.einsum("...ij,...i->...j", D, xi)


def cocycle_step(tmap: ExpandingMap, tau: FiberRotation, n_dir, x, xi) -> np.ndarray:
    """F_{n,x}(xi) = (D_xT)^t xi + (D_x tau)^t n."""
    n = _direction(n_dir, tau.fiber_dim)
    pts = as_points(x, tmap.dim)
    xi = as_points(xi, tmap.dim)
    shift = np.einsum("...ld,l->...d", tau.jacobian(pts), n)
    return _transpose_apply(tmap.derivative(pts), xi) + shift


def w_n(tmap: ExpandingMap, tau: FiberRotation, x, n: int) -> np.ndarray:
    """W_n(x) = sum_{k<n} (D_xT^k)^t (D_{T^k x} tau)^t, shape (..., d, l)."""
    pts = as_points(x, tmap.dim)
    d, ell = tmap.dim, tau.fiber_dim
    W = np.zeros(pts.shape[:-1] + (d, ell))
    Jt = np.broadcast_to(np.eye(d), pts.shape[:-1] + (d, d)).copy()
    cur = pts
    for _ in range(n):
        W = W + Jt @ np.swapaxes(tau.jacobian(cur), -1, -2)
        Jt = Jt @ np.swapaxes(tmap.derivative(cur), -1, -2)
        cur = tmap.eval(cur)
    return W


def jacobian_power_t(tmap: ExpandingMap, x, n: int) -> np.ndarray:
    """(D_xT^n)^t, shape (..., d, d)."""
    pts = as_points(x, tmap.dim)
    Jt = np.broadcast_to(np.eye(tmap.dim), pts.shape[:-1] + (tmap.dim,) * 2).copy()
    cur = pts
    for _ in range(n):
        Jt = Jt @ np.swapaxes(tmap.derivative(cur), -1, -2)
        cur = tmap.eval(cur)
    return Jt


def _descend(tmap, tau, h, n_vec, n, x, xi):
    """Walk the preimage tree of x (shape (P, d)) carrying covectors xi (P, Q, d).

    Returns final covectors (P, N^n, Q, d) and log A_n (P, N^n).
    """
    levels = preimage_levels(tmap, x, n)
    N = tmap.degree
    cov = xi[:, None, :, :]
    logA = np.zeros(levels[0].shape[:-1])
    for j in range(1, n + 1):
        pts = levels[j]
        parents = np.repeat(levels[j - 1], N, axis=-2)
        cov = np.repeat(cov, N, axis=1)
        logA = np.repeat(logA, N, axis=-1) + step_log_weight(tmap, h, pts, parents)
        shift = np.einsum("pmld,l->pmd", tau.jacobian(pts), n_vec)
        if tmap.kind == "linear":
            cov = cov @ tmap.matrix.astype(float) + shift[:, :, None, :]
        else:
            cov = np.einsum("pmij,pmqi->pmqj", tmap.derivative(pts), cov) + shift[:, :, None, :]
    return cov, logA


def _ptilde_core(tmap, tau, h, gw, s, n_vec, n, x, xi):
    """p~ for points x (P, d) and covectors xi (P, Q, d); also max_y |F^n_y xi|."""
    cov, logA = _descend(tmap, tau, h, n_vec, n, x, xi)
    A = np.exp(logA)
    g0 = gw(np.linalg.norm(xi, axis=-1))
    norms = np.linalg.norm(cov, axis=-1)
    quot = (gw(norms) / g0[:, None, :]) ** (2 * s)
    vals = np.einsum("pm,pmq->pq", A, quot) / A.sum(axis=1)[:, None]
    # an average of exact ones must not drift an ulp below 1
    vals = np.where(np.all(quot == 1.0, axis=1), 1.0, vals)
    return np.minimum(vals, 1.0), norms.max(axis=1)


def _check_s(s: float) -> None:
    if not s < 0:
        raise ValueError("s must be negative")


def ptilde(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, s: float, n_dir, n: int,
           x, xi, gw: WeightG | None = None, paired: bool = True):
    """p~_{n}(x, xi) by descent through the preimage tree.

    With ``paired`` (default) x has shape (..., d) and xi the same leading
    shape; otherwise the result is the product table over x (P, d) and xi (Q, d).
    A single point and covector return a float.
    """
    _check_s(s)
    gw = gw or WeightG.for_system(tmap, tau)
    n_vec = _direction(n_dir, tau.fiber_dim)
    d = tmap.dim
    xs = as_points(x, d)
    xis = as_points(xi, d)
    scalar = xs.ndim == 1 and xis.ndim == 1
    if paired:
        lead = np.broadcast_shapes(xs.shape[:-1], xis.shape[:-1])
        xs = np.broadcast_to(xs, lead + (d,)).reshape(-1, d)
        xis = np.broadcast_to(xis, lead + (d,)).reshape(-1, 1, d)
        vals, _ = _ptilde_core(tmap, tau, h, gw, s, n_vec, n, xs, xis)
        out = vals[:, 0].reshape(lead)
    else:
        xs = xs.reshape(-1, d)
        xis = np.broadcast_to(xis.reshape(1, -1, d), (len(xs), xis.reshape(-1, d).shape[0], d))
        out, _ = _ptilde_core(tmap, tau, h, gw, s, n_vec, n, xs, xis)
    return float(out) if scalar else out


def ptilde_by_words(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, s: float, n_dir, n: int,
                    x, xi, gw: WeightG | None = None) -> float:
    """Word-by-word evaluation of p~ using the closed form (D_yT^n)^t xi + W_n(y) n.

    Independent of the tree descent in :func:`ptilde`: every leaf is iterated
    forward on its own.
    """
    _check_s(s)
    gw = gw or WeightG.for_system(tmap, tau)
    n_vec = _direction(n_dir, tau.fiber_dim)
    xi = as_points(xi, tmap.dim).ravel()
    g0 = float(gw(np.linalg.norm(xi)))
    total = 0.0
    mass = 0.0
    trapped = True
    for leaf in preimage_tree(tmap, x, n):
        y = leaf.point
        image = jacobian_power_t(tmap, y, n) @ xi + w_n(tmap, tau, y, n) @ n_vec
        a = float(weight_A(tmap, h, y, n))
        q = (float(gw(np.linalg.norm(image))) / g0) ** (2 * s)
        trapped = trapped and q == 1.0
        total += a * q
        mass += a
    return 1.0 if trapped else min(total / mass, 1.0)


def xi_grid(R_grid: float, d: int, spacing: float) -> np.ndarray:
    """Uniform covector grid on the ball |xi| <= R_grid (origin included), shape (Q, d)."""
    m = int(math.ceil(R_grid / spacing - 1e-12))
    axis = np.linspace(-m * spacing, m * spacing, 2 * m + 1)
    mesh = np.stack([g.ravel() for g in np.meshgrid(*([axis] * d), indexing="ij")], axis=-1)
    return mesh[np.linalg.norm(mesh, axis=-1) <= R_grid * (1 + 1e-12)]


@dataclass(frozen=True, eq=False)
class PTildeField:
    """Sampled p~ on grid_x times grid_xi.

    ``escape_fraction`` is the share of grid points where some preimage
    covector leaves the ball of radius R, ``trapped_fraction`` the rest.
    """

    direction: np.ndarray
    n_steps: int
    grid_x: np.ndarray
    grid_xi: np.ndarray
    values: np.ndarray
    sup: float
    grid_max: float
    exterior_bound: float
    escape_fraction: float
    max_norms: np.ndarray = field(repr=False)

    @property
    def trapped_fraction(self) -> float:
        return 1.0 - self.escape_fraction

    def argmax(self) -> tuple[np.ndarray, np.ndarray]:
        i, q = np.unravel_index(int(np.argmax(self.values)), self.values.shape)
        return self.grid_x[i], self.grid_xi[q]


@dataclass(frozen=True)
class GridSpec:
    """x grid points per axis, and xi spacing as a fraction of R (ball radius R * radius_factor)."""

    x_points: int = 64
    xi_spacing: float = 1.0 / 64
    radius_factor: float = 1.0
    chunk: int = 1 << 22


def ptilde_field(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, s: float, n_dir, n: int,
                 grid: GridSpec | None = None, gw: WeightG | None = None) -> PTildeField:
    _check_s(s)
    grid = grid or GridSpec()
    gw = gw or WeightG.for_system(tmap, tau)
    n_vec = _direction(n_dir, tau.fiber_dim)
    tmap.check_budget(n)
    d = tmap.dim
    xs = torus_grid(grid.x_points, d)
    xis = xi_grid(gw.R * grid.radius_factor, d, gw.R * grid.xi_spacing)
    per_x = max(1, tmap.degree**n * len(xis) * d)
    step = max(1, grid.chunk // per_x)
    vals = np.empty((len(xs), len(xis)))
    norms = np.empty_like(vals)
    for lo in range(0, len(xs), step):
        sl = slice(lo, lo + step)
        block = np.broadcast_to(xis, (len(xs[sl]),) + xis.shape)
        vals[sl], norms[sl] = _ptilde_core(tmap, tau, h, gw, s, n_vec, n, xs[sl], block)
    ext = gw.exterior_bound(s)
    grid_max = float(vals.max())
    return PTildeField(n_vec, n, xs, xis, vals, max(grid_max, ext), grid_max, ext,
                       float(np.mean(norms > gw.R)), norms)


def direction_grid(ell: int, resolution_deg: float = 5.0) -> np.ndarray:
    """Unit directions covering S^{l-1}: {+1, -1} for l = 1, equal angles on the
    circle for l = 2, Fibonacci points on spheres for l >= 3."""
    if ell == 1:
        return np.array([[1.0], [-1.0]])
    delta = math.radians(resolution_deg)
    if ell == 2:
        m = int(math.ceil(2 * math.pi / delta))
        ang = 2 * math.pi * np.arange(m) / m
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    # cap area ~ delta^2 per point on the unit sphere; higher l uses random normals
    m = int(math.ceil(4 * math.pi / delta**2))
    if ell == 3:
        i = np.arange(m) + 0.5
        phi = np.arccos(1 - 2 * i / m)
        theta = math.pi * (1 + math.sqrt(5)) * i
        return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1)
    pts = np.random.default_rng(0).standard_normal((m * ell, ell))
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


@dataclass(frozen=True)
class N0Found:
    n0: int
    ptilde0: float
    history: dict[tuple, list[float]]

    @property
    def rate_proxy(self) -> float:
        """Heuristic p~0^{1/(2 n0)}; not a proven rate."""
        return self.ptilde0 ** (1.0 / (2 * self.n0))


@dataclass(frozen=True)
class NotFoundWithin:
    n_max: int
    history: dict[tuple, list[float]]


def find_n0(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, s: float = -1.0,
            directions: np.ndarray | None = None, n_max: int = 8, grid: GridSpec | None = None,
            margin: float = 1e-3) -> N0Found | NotFoundWithin:
    """Smallest n with max over directions of sup p~_n below 1 - margin."""
    gw = WeightG.for_system(tmap, tau)
    if directions is None:
        directions = direction_grid(tau.fiber_dim)
    keys = [tuple(round(float(v), 12) for v in n) for n in directions]
    history: dict[tuple, list[float]] = {k: [] for k in keys}
    for n in range(1, n_max + 1):
        worst = 0.0
        for key, n_dir in zip(keys, directions):
            sup = ptilde_field(tmap, tau, h, s, n_dir, n, grid, gw).sup
            history[key].append(sup)
            worst = max(worst, sup)
        if worst < 1.0 - margin:
            return N0Found(n, worst, history)
    return NotFoundWithin(n_max, history)


def direction_lipschitz(tmap: ExpandingMap, tau: FiberRotation, s: float, n: int,
                        gw: WeightG | None = None) -> float:
    """Lipschitz constant of n_dir -> p~_n(x, xi) from |d/dn F^n| <= |W_n|."""
    gw = gw or WeightG.for_system(tmap, tau)
    if tmap.kind == "linear":
        dt = float(np.linalg.norm(tmap.matrix.astype(float), 2))
    else:
        dt = tmap.base + tmap.perturbation.derivative_l1(1)
    wn = tau.dtau_sup * sum(dt**k for k in range(n))
    return 2 * abs(s) * gw.dg_sup() * wn
