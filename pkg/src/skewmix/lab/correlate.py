"""Correlation decay of the skew product F(x, y) = (Tx, y + tau(x)).

Observables are trigonometric polynomials on T^{d+l}.  Writing
phi(x, y) = sum_nu phi_nu(x) e(nu.y), the fiber integral pairs frequency nu of
phi o F^n with -nu of psi, so

    int phi o F^n psi dA = sum_nu int phi_nu L_nu^n(psi_{-nu} h) dx

with L_nu the twisted transfer operator.  The base integrals are computed on a
uniform grid by repeated application of a matrix of L_nu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..density import DensityModel, transfer_matrix
from ..errors import WindowTooNoisy
from ..maps import ExpandingMap, FiberRotation
from ..trig import TWO_PI, TrigPoly, torus_grid


def split_fiber(obs: TrigPoly, d: int) -> dict[tuple, TrigPoly]:
    """Fiber decomposition {nu: phi_nu} of an observable on T^{d+l}."""
    parts: dict[tuple, dict] = {}
    for k, c in obs.table().items():
        if c == 0:
            continue
        parts.setdefault(k[d:], {})[k[:d]] = c
    return {nu: TrigPoly.from_table(tab, d) for nu, tab in sorted(parts.items())}


def _mean(obs_parts: dict[tuple, TrigPoly], h_vals: np.ndarray, x: np.ndarray, ell: int) -> complex:
    zero = (0,) * ell
    if zero not in obs_parts:
        return 0.0
    return complex(np.mean(obs_parts[zero](x) * h_vals))


def correlation_series(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, phi: TrigPoly,
                       psi: TrigPoly, n_max: int, grid: int = 1024, K_interp: int | None = None,
                       signed: bool = False) -> np.ndarray:
    """C_n = |int phi o F^n psi dA - int phi dA int psi dA| for n = 1..n_max.

    With ``signed`` the complex differences are returned instead of moduli.
    """
    d, ell = tmap.dim, tau.fiber_dim
    if phi.dim != d + ell or psi.dim != d + ell:
        raise ValueError("observables must live on T^(d+l)")
    M = grid if d == 1 else max(16, int(round(grid ** (1.0 / d))))
    x = torus_grid(M, d)
    h_vals = h(x)
    phi_parts = split_fiber(phi, d)
    psi_parts = split_fiber(psi, d)
    mean = _mean(phi_parts, h_vals, x, ell) * _mean(psi_parts, h_vals, x, ell)
    total = np.zeros(n_max, dtype=complex)
    for nu, phi_nu in phi_parts.items():
        neg = tuple(-v for v in nu)
        if neg not in psi_parts:
            continue
        nu_vec = np.asarray(nu, dtype=float)

        def twist(ys, nu_vec=nu_vec):
            return np.exp(1j * TWO_PI * (tau(ys) @ nu_vec))

        mult = None if not any(nu) else twist
        L = transfer_matrix(tmap, M, mult, K_interp)
        f = psi_parts[neg](x) * h_vals
        phi_vals = phi_nu(x)
        for n in range(n_max):
            f = L @ f
            total[n] += np.mean(phi_vals * f)
    diff = total - mean
    return diff if signed else np.abs(diff)


def correlation_forward(tmap: ExpandingMap, tau: FiberRotation, h: DensityModel, phi: TrigPoly,
                        psi: TrigPoly, n: int, grid: int = 1 << 14) -> complex:
    """Signed correlation at one n by forward iteration of the base points.

    The fiber integral is done exactly in Fourier space; only suitable for
    small n, since phi_nu o T^n oscillates at frequency ~ gamma^n.
    """
    d, ell = tmap.dim, tau.fiber_dim
    M = grid if d == 1 else max(16, int(round(grid ** (1.0 / d))))
    x = torus_grid(M, d) + 0.5 / M
    h_vals = h(x)
    phi_parts = split_fiber(phi, d)
    psi_parts = split_fiber(psi, d)
    cur = x
    birk = np.zeros((len(x), ell))
    for _ in range(n):
        birk = birk + tau(cur)
        cur = tmap.eval(cur)
    acc = np.zeros(len(x), dtype=complex)
    for nu, phi_nu in phi_parts.items():
        neg = tuple(-v for v in nu)
        if neg in psi_parts:
            phase = np.exp(1j * TWO_PI * (birk @ np.asarray(nu, dtype=float)))
            acc += phi_nu(cur) * phase * psi_parts[neg](x)
    mean = _mean(phi_parts, h_vals, x, ell) * _mean(psi_parts, h_vals, x, ell)
    return complex(np.mean(acc * h_vals) - mean)


FLAT_LOG_SPREAD = 1e-9


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r2: float
    window: tuple[int, int]
    used: list[int] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "r2": self.r2, "window": list(self.window),
                "used": self.used, "excluded": self.excluded}


def fit_decay_rate(C, window: tuple[int, int] = (10, 40), floor: float = 1e-13) -> DecayFit:
    """Least-squares fit of log C_n = a + n log(rho) over the window (1-based n)."""
    C = np.asarray(C, dtype=float)
    lo, hi = int(window[0]), min(int(window[1]), len(C))
    ns = np.arange(lo, hi + 1)
    vals = C[lo - 1:hi]
    ok = vals > floor
    used = ns[ok]
    if len(used) < 5:
        raise WindowTooNoisy(f"only {len(used)} correlations above {floor:g} in window [{lo}, {hi}]")
    logs = np.log(vals[ok])
    slope, icpt = np.polyfit(used, logs, 1)
    pred = icpt + slope * used
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    # a series flat to rounding explains nothing about decay
    r2 = 1.0 - ss_res / ss_tot if np.ptp(logs) > FLAT_LOG_SPREAD else 0.0
    return DecayFit(float(np.exp(slope)), r2, (lo, hi), [int(v) for v in used],
                    [int(v) for v in ns[~ok]])
