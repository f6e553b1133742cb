"""Fiber-twisted Koopman and transfer operators as Fourier-Galerkin matrices.

Basis functions are e(xi.x) = exp(2 pi i xi.x) with |xi|_inf <= K, ordered as
:func:`frequency_box`.  The twisted Koopman operator is
phi -> phi(Tx) e(nu.tau(x)), the twisted transfer operator its dual
psi -> sum_{Ty=x} e(nu.tau(y)) psi(y) / |Jac T(y)|.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AliasingWarning, NotConverged
from .maps import ExpandingMap, FiberRotation
from .symbol import WeightG
from .trig import TWO_PI, frequency_box, grid_coefficients, torus_grid

STYLES = ("bracket", "lambda")
ALIAS_TOL = 1e-6


def _nu_tuple(nu, ell: int) -> tuple[int, ...]:
    arr = np.atleast_1d(np.asarray(nu))
    if arr.shape != (ell,) or not np.array_equal(arr, np.round(arr)):
        raise ValueError(f"nu must be an integer vector of length {ell}")
    return tuple(int(v) for v in arr)


@dataclass(frozen=True, eq=False)
class SobolevWeight:
    """Diagonal weight w(xi) on the Fourier basis.

    ``bracket``: <nu>^{-s} <xi>^{s}; ``lambda``: g(xi / [[nu]])^s with
    [[nu]] = max(1, |nu|).  s = 0 gives the identity weight.
    """

    s: float
    nu: tuple[int, ...]
    style: str
    diagonal: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, freqs: np.ndarray, nu, s: float = -1.0, style: str = "bracket",
              g: WeightG | None = None) -> "SobolevWeight":
        if s > 0:
            raise ValueError("Sobolev exponent must be <= 0")
        if style not in STYLES:
            raise ValueError(f"unknown weight style {style!r}; expected one of {STYLES}")
        nu = tuple(int(v) for v in np.atleast_1d(nu))
        nu_norm = float(np.linalg.norm(nu))
        xi_norm = np.linalg.norm(np.asarray(freqs, dtype=float), axis=-1)
        if style == "bracket":
            diag = (1 + nu_norm**2) ** (-s / 2) * (1 + xi_norm**2) ** (s / 2)
        else:
            if g is None:
                raise ValueError("the lambda style needs the weight function g")
            diag = g(xi_norm / max(1.0, nu_norm)) ** s
        return cls(s, nu, style, np.asarray(diag, dtype=float))


@dataclass(frozen=True, eq=False)
class TwistedGalerkinOperator:
    nu: tuple[int, ...]
    K: int
    matrix: np.ndarray = field(repr=False)
    weight: SobolevWeight
    kind: str
    freqs: np.ndarray = field(repr=False)
    tmap: ExpandingMap = field(repr=False)
    tau: FiberRotation = field(repr=False)

    def index(self, xi) -> int:
        xi = np.atleast_1d(np.asarray(xi, dtype=np.int64))
        if np.abs(xi).max(initial=0) > self.K:
            raise KeyError(f"frequency {tuple(xi)} outside truncation K={self.K}")
        # lexicographic position in the box
        side = 2 * self.K + 1
        pos = 0
        for v in xi:
            pos = pos * side + int(v) + self.K
        return pos

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return self.matrix @ coeffs

    def weighted(self) -> np.ndarray:
        w = self.weight.diagonal
        return (w[:, None] * self.matrix) / w[None, :]

    def with_weight(self, s: float = -1.0, style: str = "bracket") -> "TwistedGalerkinOperator":
        g = WeightG.for_system(self.tmap, self.tau) if style == "lambda" else None
        return replace(self, weight=SobolevWeight.build(self.freqs, self.nu, s, style, g))

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues sorted by decreasing modulus."""
        ev = np.linalg.eigvals(self.matrix)
        return ev[np.argsort(-np.abs(ev), kind="stable")]


def _multiplier_values(tau: FiberRotation, nu: tuple[int, ...], pts: np.ndarray) -> np.ndarray:
    phase = tau(pts) @ np.asarray(nu, dtype=float)
    return np.exp(1j * TWO_PI * phase)


def _multiplier_spectrum(tau: FiberRotation, nu: tuple[int, ...], reach: int, max_size: int):
    """FFT of e(nu.tau) on a grid large enough that indices up to ``reach`` are alias free."""
    d = tau.dim
    M = 64
    while M < 2 * reach + 2:
        M *= 2
    while True:
        vals = _multiplier_values(tau, nu, torus_grid(M, d)).reshape((M,) * d)
        spec = np.fft.fftn(vals) / M**d
        k = np.fft.fftfreq(M, 1.0 / M)
        mesh = np.meshgrid(*([np.abs(k)] * d), indexing="ij")
        kmax = np.max(np.stack(mesh), axis=0)
        total = np.abs(spec).sum()
        # content near Nyquist would alias back into the requested range
        near = np.abs(spec[kmax >= M // 2 - M // 8]).sum()
        if near <= 1e-16 * total or M >= max_size:
            return spec, M, kmax
        M *= 2


def _spec_lookup(spec: np.ndarray, M: int, idx: np.ndarray) -> np.ndarray:
    inside = np.all(np.abs(idx) < M // 2, axis=-1)
    wrapped = tuple((idx[..., j] % M) for j in range(idx.shape[-1]))
    return np.where(inside, spec[wrapped], 0.0)


def _alias_check(spec: np.ndarray, kmax: np.ndarray, K: int) -> float:
    total = np.abs(spec).sum()
    outside = np.abs(spec[kmax > K]).sum()
    frac = float(outside / total) if total > 0 else 0.0
    if frac > ALIAS_TOL:
        warnings.warn(f"multiplier carries {frac:.2e} of its spectral mass beyond K={K}",
                      AliasingWarning, stacklevel=3)
    return frac


def _sample_grid_size(K: int, d: int, grid: int | None) -> int:
    M = grid or 1 << max(0, math.ceil(math.log2(8 * K + 8)))
    if M < 8 * K:
        raise ValueError("sampling grid must have at least 8K points per axis")
    return M


def _assemble(kind: str, tmap: ExpandingMap, tau: FiberRotation, nu, K: int,
              s: float, style: str, grid: int | None, exact: bool | None):
    if tau.dim != tmap.dim:
        raise ValueError("tau and map live on different base tori")
    nu = _nu_tuple(nu, tau.fiber_dim)
    d = tmap.dim
    freqs = frequency_box(K, d)
    if exact is None:
        exact = tmap.kind == "linear"
    if exact and tmap.kind != "linear":
        raise ValueError("exact assembly needs a linear map")
    if exact:
        A = tmap.matrix
        reach = K + int(np.abs(freqs @ A).max())
        max_size = 1 << 16 if d == 1 else 1 << 10
        spec, M, kmax = _multiplier_spectrum(tau, nu, reach, max_size)
        _alias_check(spec, kmax, K)
        if kind == "koopman":
            idx = freqs[:, None, :] - (freqs @ A)[None, :, :]
        else:
            idx = (freqs @ A)[:, None, :] - freqs[None, :, :]
        matrix = _spec_lookup(spec, M, idx)
    else:
        M = _sample_grid_size(K, d, grid)
        x = torus_grid(M, d)
        mult = _multiplier_values(tau, nu, x)
        spec = np.fft.fftn(mult.reshape((M,) * d)) / M**d
        kmax = np.max(np.abs(np.stack(np.meshgrid(*([np.fft.fftfreq(M, 1.0 / M)] * d), indexing="ij"))), axis=0)
        _alias_check(spec, kmax, K)
        matrix = np.empty((len(freqs), len(freqs)), dtype=complex)
        if kind == "koopman":
            tx = tmap.eval(x)
        else:
            ys = tmap.inverse_branches(x)
            wts = np.exp(-tmap.log_jacobian(ys)) * _multiplier_values(tau, nu, ys)
        step = max(1, (1 << 22) // len(x))
        for lo in range(0, len(freqs), step):
            cols = freqs[lo:lo + step].astype(float)
            if kind == "koopman":
                vals = mult[:, None] * np.exp(1j * TWO_PI * (tx @ cols.T))
            else:
                vals = np.einsum("pb,pbc->pc", wts, np.exp(1j * TWO_PI * (ys @ cols.T)))
            vals = vals.reshape((M,) * d + (len(cols),))
            for c in range(len(cols)):
                matrix[:, lo + c] = grid_coefficients(vals[..., c], freqs)
    g = WeightG.for_system(tmap, tau) if style == "lambda" else None
    weight = SobolevWeight.build(freqs, nu, s, style, g)
    return TwistedGalerkinOperator(nu, K, matrix, weight, kind, freqs, tmap, tau)


def assemble_koopman(tmap: ExpandingMap, tau: FiberRotation, nu, K: int, s: float = -1.0,
                     style: str = "bracket", grid: int | None = None,
                     exact: bool | None = None) -> TwistedGalerkinOperator:
    """Matrix of phi -> phi(Tx) e(nu.tau(x)); entry (xi, xi') is the xi-th
    coefficient of e(nu.tau(x)) e(xi'.Tx).

    Linear maps use the exact index shift xi' -> A^t xi' by default; other
    maps (or ``exact=False``) sample on a grid of at least 8K points per axis.
    """
    return _assemble("koopman", tmap, tau, nu, K, s, style, grid, exact)


def assemble_transfer(tmap: ExpandingMap, tau: FiberRotation, nu, K: int, s: float = -1.0,
                      style: str = "bracket", grid: int | None = None,
                      exact: bool | None = None) -> TwistedGalerkinOperator:
    """Matrix of psi -> sum_{Ty=x} e(nu.tau(y)) psi(y) / |Jac T(y)|."""
    return _assemble("transfer", tmap, tau, nu, K, s, style, grid, exact)


def dual_pairing(op: TwistedGalerkinOperator) -> np.ndarray:
    """Matrix of the dual operator under <phi, psi> = integral of phi * psi.

    For the Koopman/transfer pair, L[a, b] = K[-b, -a].
    """
    rev = op.matrix[::-1, ::-1]
    return rev.T


@dataclass(frozen=True)
class NormGrowth:
    norms: np.ndarray
    ratios: np.ndarray

    def log_slope(self, lo: int, hi: int) -> float:
        """Least-squares slope of log ||M^n|| over lo <= n <= hi."""
        n = np.arange(lo, hi + 1)
        return float(np.polyfit(n, np.log(self.norms[lo - 1:hi]), 1)[0])


def weighted_norm_growth(op: TwistedGalerkinOperator, n_max: int) -> NormGrowth:
    """Spectral norms of W M^n W^{-1} for n = 1..n_max."""
    B = op.weighted()
    P = np.eye(len(B), dtype=complex)
    norms = np.empty(n_max)
    for n in range(n_max):
        P = B @ P
        norms[n] = np.linalg.norm(P, 2)
    ratios = norms[1:] / norms[:-1]
    return NormGrowth(norms, ratios)


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    eig: float
    gelfand: float
    uncertainty: float
    K: int
    leading: complex


def _gelfand(op: TwistedGalerkinOperator, lo: int = 20, hi: int = 40) -> float:
    growth = weighted_norm_growth(op, hi)
    # beating between near-equal leading moduli needs a longer fit than the last third
    tail = lo + (hi - lo) // 2
    return float(math.exp(growth.log_slope(tail, hi)))


def spectral_radius(op: TwistedGalerkinOperator, method: str = "eig", window: tuple[int, int] = (20, 40),
                    refine: bool = True, floor: float = 5e-3) -> SpectralEstimate:
    """Spectral radius from eigenvalues and from Gelfand extrapolation.

    The uncertainty is the change of the eigenvalue radius when the
    truncation is halved.  NotConverged is raised when the two estimates
    differ by more than 10 * max(uncertainty, floor).
    """
    if method not in ("eig", "gelfand"):
        raise ValueError("method must be 'eig' or 'gelfand'")
    ev = op.eigenvalues()
    eig = float(abs(ev[0]))
    gel = _gelfand(op, *window)
    delta = 0.0
    if refine and op.K >= 2:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            half = _assemble(op.kind, op.tmap, op.tau, op.nu, op.K // 2, op.weight.s,
                             op.weight.style, None, None)
        delta = abs(eig - float(abs(half.eigenvalues()[0])))
    if abs(gel - eig) > 10 * max(delta, floor):
        raise NotConverged(f"gelfand {gel:.6g} and eigenvalue {eig:.6g} radii disagree (delta {delta:.2g})")
    value = eig if method == "eig" else gel
    return SpectralEstimate(value, eig, gel, delta, op.K, complex(ev[0]))
