"""Coboundary detection and certification.

A rotation tau is an essential coboundary when v.tau = c + u - u o T for some
nonzero v, constant c and smooth u.  Summing over a periodic orbit of period p
telescopes u away, so v . (orbit sum) = p c on every orbit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NotExact, NotIntegral
from .maps import ExpandingMap, FiberRotation, periodic_orbits
from .trig import TrigPoly, as_points, frequency_box, grid_coefficients, torus_distance, torus_grid

ORBIT_TOL = 1e-6
EQUATION_TOL = 1e-5


@dataclass(frozen=True, eq=False)
class OrbitObstruction:
    orbit_id: int
    period: int
    sum: np.ndarray
    points: np.ndarray = field(repr=False)


def orbit_sum(tau: FiberRotation, points: np.ndarray) -> np.ndarray:
    """sum of tau over the points, accumulated in index order."""
    vals = tau(points)
    total = np.zeros(tau.fiber_dim)
    for row in vals:
        total = total + row
    return total


def collect_obstructions(tmap: ExpandingMap, tau: FiberRotation, p_max: int) -> list[OrbitObstruction]:
    return [OrbitObstruction(i, orb.period, orbit_sum(tau, orb.points), orb.points)
            for i, orb in enumerate(periodic_orbits(tmap, p_max))]


@dataclass(frozen=True)
class Dependence:
    v: np.ndarray
    c: float
    orbit_residual: float
    integral: bool


def _system(obstructions: Sequence[OrbitObstruction]) -> tuple[np.ndarray, np.ndarray]:
    S = np.array([o.sum for o in obstructions], dtype=float)
    p = np.array([o.period for o in obstructions], dtype=float)
    return S, p


def _fit(S: np.ndarray, p: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    r = S @ v
    c = float(p @ r / (p @ p))
    return c, float(np.linalg.norm(r - c * p))


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    return -v if nz.size and v[nz[0]] < 0 else v


def integer_candidates(ell: int, V_max: int) -> np.ndarray:
    """Primitive integer vectors with sup-norm <= V_max, first nonzero entry positive."""
    out = []
    for v in itertools.product(range(-V_max, V_max + 1), repeat=ell):
        if not any(v) or math.gcd(*[abs(x) for x in v]) != 1:
            continue
        first = next(x for x in v if x)
        if first > 0:
            out.append(v)
    return np.array(out, dtype=np.int64).reshape(-1, ell)


def best_dependence(obstructions: Sequence[OrbitObstruction], mode: str = "real",
                    V_max: int = 12) -> Dependence:
    """Best (v, c) for v . sum_o = p_o c in least squares, without thresholding."""
    if mode not in ("real", "integral"):
        raise ValueError("mode must be 'real' or 'integral'")
    S, p = _system(obstructions)
    ell = S.shape[1]
    if len(p) < ell + 2:
        raise ValueError(f"need at least {ell + 2} orbit obstructions, got {len(p)}")
    if mode == "real":
        P = np.eye(len(p)) - np.outer(p, p) / (p @ p)
        _, _, vh = np.linalg.svd(P @ S)
        v = _canonical_sign(vh[-1])
        c, res = _fit(S, p, v)
        return Dependence(v, c, res, False)
    cands = integer_candidates(ell, V_max)
    r = S @ cands.T.astype(float)
    c = (p @ r) / (p @ p)
    res = np.linalg.norm(r - p[:, None] * c[None, :], axis=0)
    best = int(np.argmin(res))
    return Dependence(cands[best], float(c[best]), float(res[best]), True)


def detect_dependence(obstructions: Sequence[OrbitObstruction], mode: str = "real", V_max: int = 12,
                      threshold: float = ORBIT_TOL) -> Dependence | None:
    """Candidate dependence, or None when the best residual exceeds threshold * sum(p)."""
    dep = best_dependence(obstructions, mode, V_max)
    scale = sum(o.period for o in obstructions)
    return dep if dep.orbit_residual <= threshold * scale else None


Itinerary = Sequence[int] | Callable[[int], int] | None


def _label(itinerary: Itinerary, j: int) -> int:
    if itinerary is None:
        return 0
    if callable(itinerary):
        return int(itinerary(j))
    return int(itinerary[j % len(itinerary)])


def vfield(tmap: ExpandingMap, tau: FiberRotation, n_dir, x, itinerary: Itinerary = None,
           tol: float = 1e-12) -> tuple[np.ndarray, int]:
    """Partial sums of V(x) = sum_{j>=1} D_x[n . tau(T_i^{-j} x)] along a branch itinerary.

    Stops once the tail bound |D tau| gamma^{-k} / (1 - 1/gamma) falls below
    tol.  Returns V with shape (..., d) and the number of terms used.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = np.asarray(n_dir, dtype=float).ravel()
    pts = as_points(x, tmap.dim)
    d = tmap.dim
    scale = tau.dtau_sup * float(np.linalg.norm(n))
    g = tmap.gamma
    if scale == 0.0:
        return np.zeros(pts.shape), 0
    k = max(1, math.ceil(math.log(scale / (tol * (1 - 1 / g))) / math.log(g)))
    V = np.zeros(pts.shape)
    J = np.broadcast_to(np.eye(d), pts.shape[:-1] + (d, d)).copy()
    y = pts
    for j in range(k):
        lab = _label(itinerary, j)
        y = tmap.inverse_branches(y)[..., lab, :]
        J = J @ tmap.derivative(y)
        grad = np.einsum("...ld,l->...d", tau.jacobian(y), n)
        # D_x of f(T^{-j} x) is (D_y T^j)^{-t} D_y f
        V = V + np.linalg.solve(np.swapaxes(J, -1, -2), grad[..., None])[..., 0]
    return V, k


def check_exactness(V: np.ndarray) -> float:
    """Largest loop integral of V along coordinate circles of the sampling grid.

    ``V`` has shape (M,)*d + (d,) on the uniform grid; the periodic trapezoid
    rule reduces each loop integral to a mean along one axis.
    """
    d = V.shape[-1]
    if V.ndim != d + 1:
        raise ValueError("V must be sampled on a full uniform grid")
    return float(max(np.abs(V[..., k].mean(axis=k)).max() for k in range(d)))


def reconstruct_u(V: np.ndarray, tol: float = 1e-8, drop: float = 1e-14) -> TrigPoly:
    """Potential u with grad u = V and u(0) = 0, as a trigonometric polynomial.

    Uses the Fourier least-squares solution of grad u = V, which coincides with
    path integration for exact fields.
    """
    resid = check_exactness(V)
    if resid > tol:
        raise NotExact(f"loop integrals of V reach {resid:.3g} > {tol:.3g}")
    d = V.shape[-1]
    M = V.shape[0]
    freqs = frequency_box((M - 1) // 2, d)
    Vhat = np.stack([grid_coefficients(V[..., k], freqs) for k in range(d)], axis=-1)
    w = 2j * math.pi * freqs.astype(float)
    denom = np.sum(np.abs(w) ** 2, axis=-1)
    nz = denom > 0
    coeffs = np.zeros(len(freqs), dtype=complex)
    coeffs[nz] = np.sum(np.conj(w[nz]) * Vhat[nz], axis=-1) / denom[nz]
    big = np.abs(coeffs).max(initial=0.0)
    coeffs[np.abs(coeffs) <= drop * max(big, 1.0)] = 0.0
    # enforce exact Hermitian symmetry, then pin u(0) = 0
    coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    coeffs[~nz] = -coeffs[nz].sum().real
    return TrigPoly(freqs, coeffs).simplify()


def _default_grid(d: int) -> int:
    return 256 if d == 1 else 48


def equation_residual(tmap: ExpandingMap, tau: FiberRotation, v, c: float, u: TrigPoly,
                      grid: int | None = None) -> float:
    """sup over a grid of |v.tau - c - u + u o T|."""
    d = tmap.dim
    M = grid or (4096 if d == 1 else 128)
    x = torus_grid(M, d)
    lhs = tau(x) @ np.asarray(v, dtype=float)
    return float(np.abs(lhs - c - u.real(x) + u.real(tmap.eval(x))).max())


@dataclass(frozen=True, eq=False)
class CoboundaryCertificate:
    v: np.ndarray
    integral: bool
    c: float
    u: TrigPoly = field(repr=False)
    K_u: int
    orbit_residual: float
    equation_residual: float
    exactness_residual: float
    itinerary_spread: float
    tolerance: float = EQUATION_TOL

    @property
    def valid(self) -> bool:
        return bool(self.equation_residual <= self.tolerance)

    @property
    def c_mod1(self) -> float:
        return float(self.c - math.floor(self.c))

    def to_dict(self) -> dict:
        return {
            "v": [int(x) for x in self.v] if self.integral else [float(x) for x in self.v],
            "integral": self.integral,
            "c": float(self.c),
            "c_mod1": self.c_mod1,
            "K_u": self.K_u,
            "valid": self.valid,
            "residuals": {
                "orbit_residual": float(self.orbit_residual),
                "equation_residual": float(self.equation_residual),
                "exactness_residual": float(self.exactness_residual),
                "itinerary_spread": float(self.itinerary_spread),
            },
        }


def certify(tmap: ExpandingMap, tau: FiberRotation, p_max: int = 6, mode: str = "auto",
            V_max: int = 12, orbit_tol: float = ORBIT_TOL, equation_tol: float = EQUATION_TOL,
            grid: int | None = None, vtol: float = 1e-12) -> CoboundaryCertificate | None:
    """Orbit test, then V series, potential and equation residual for the proposed v.

    ``mode`` is "real", "integral" or "auto" (integral first, real otherwise).
    Returns None when no dependence passes the orbit test.
    """
    obs = collect_obstructions(tmap, tau, p_max)
    modes = ("integral", "real") if mode == "auto" else (mode,)
    dep = None
    for m in modes:
        dep = detect_dependence(obs, m, V_max, orbit_tol)
        if dep is not None:
            break
    if dep is None:
        return None
    d = tmap.dim
    M = grid or _default_grid(d)
    x = torus_grid(M, d)
    v = dep.v.astype(float)
    V, _ = vfield(tmap, tau, v, x, None, vtol)
    V_alt, _ = vfield(tmap, tau, v, x, [tmap.degree - 1], vtol)
    spread = float(np.abs(V - V_alt).max())
    Vg = V.reshape((M,) * d + (d,))
    exact = check_exactness(Vg)
    try:
        # the series converges to -grad u for v.tau = c + u - u o T
        u = -reconstruct_u(Vg, tol=max(1e-8, 10 * exact))
    except NotExact:
        u = TrigPoly.zero(d)
    res = equation_residual(tmap, tau, v, dep.c, u)
    return CoboundaryCertificate(dep.v, dep.integral, dep.c, u, u.max_freq(), dep.orbit_residual,
                                 res, exact, spread, equation_tol)


def build_semiconjugacy(tmap: ExpandingMap, tau: FiberRotation, cert: CoboundaryCertificate,
                        grid_x: int | None = None, grid_y: int = 8) -> float:
    """sup distance between pi(F(x, y)) and pi(x, y) + c for pi = v.y + u(x) mod 1."""
    if not cert.integral:
        raise NotIntegral("semiconjugacy to a circle rotation needs an integer vector v")
    d, ell = tmap.dim, tau.fiber_dim
    Mx = grid_x or (1024 if d == 1 else 64)
    Mx = Mx if d == 1 else min(Mx, 64)
    x = torus_grid(Mx, d)
    y = torus_grid(grid_y, ell)
    v = np.asarray(cert.v, dtype=float)
    X = np.repeat(x, len(y), axis=0)
    Y = np.tile(y, (len(x), 1))
    pi = (Y @ v + cert.u.real(X))[:, None]
    FY = Y + tau(X)
    pi_F = (FY @ v + cert.u.real(tmap.eval(X)))[:, None]
    return float(torus_distance(pi_F, pi + cert.c).max())
