"""Trigonometric polynomials on the torus and small torus helpers.

Points on T^d are float arrays whose trailing axis has length d.  For d = 1
a bare scalar or a 1-D array of points is accepted and promoted.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
_CHUNK = 1 << 21


def as_points(x, d: int) -> np.ndarray:
    """Return ``x`` as a float array with trailing axis of length ``d``."""
    arr = np.asarray(x, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != d:
        raise ValueError(f"expected points with trailing dimension {d}, got shape {arr.shape}")
    return arr


def wrap(x: np.ndarray) -> np.ndarray:
    """Reduce coordinates into [0, 1)."""
    y = x - np.floor(x)
    # x slightly below an integer can round up to exactly 1.0
    return np.where(y >= 1.0, 0.0, y)


def torus_distance(a, b) -> np.ndarray:
    """Sup-norm distance on T^d between point arrays (trailing axis = coordinates)."""
    diff = np.abs(np.asarray(a, float) - np.asarray(b, float))
    diff = diff - np.floor(diff)
    diff = np.minimum(diff, 1.0 - diff)
    return diff.max(axis=-1)


def torus_grid(M: int, d: int) -> np.ndarray:
    """Uniform grid of M^d points, C-ordered, shape (M^d, d)."""
    axis = np.arange(M) / M
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def frequency_box(K: int, d: int) -> np.ndarray:
    """All integer vectors with sup-norm <= K, lexicographic order, shape (n, d)."""
    rng = range(-K, K + 1)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64).reshape(-1, d)


def grid_coefficients(values: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Fourier coefficients at ``freqs`` of samples on a uniform grid.

    ``values`` has shape (M,)*d (optionally with trailing batch axes handled by
    the caller).  Coefficients are aliased modulo M.
    """
    d = freqs.shape[1]
    M = values.shape[0]
    spec = np.fft.fftn(values, axes=tuple(range(d))) / M**d
    idx = tuple((freqs[:, j] % M) for j in range(d))
    return spec[idx]


@dataclass(frozen=True)
class TrigPoly:
    """Finite Fourier series sum_k c_k exp(2 pi i k.x) on T^d."""

    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.int64)
        if freqs.ndim == 1:
            freqs = freqs[:, None]
        coeffs = np.asarray(self.coeffs, dtype=complex).ravel()
        if freqs.shape[0] != coeffs.shape[0]:
            raise ValueError("freqs and coeffs must have matching length")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def dim(self) -> int:
        return self.freqs.shape[1]

    @classmethod
    def zero(cls, d: int) -> "TrigPoly":
        return cls(np.zeros((1, d), dtype=np.int64), np.zeros(1, dtype=complex))

    @classmethod
    def constant(cls, c: float, d: int) -> "TrigPoly":
        return cls(np.zeros((1, d), dtype=np.int64), np.array([c], dtype=complex))

    @classmethod
    def from_table(cls, table: Mapping[Sequence[int], complex], d: int) -> "TrigPoly":
        if not table:
            return cls.zero(d)
        keys = [tuple(int(v) for v in np.atleast_1d(k)) for k in table]
        return cls(np.array(keys, dtype=np.int64).reshape(-1, d), np.array(list(table.values())))

    @classmethod
    def from_real_terms(cls, terms: Iterable[tuple], d: int) -> "TrigPoly":
        """Build a real polynomial from ``(k, a, b)`` meaning a cos(2 pi k.x) + b sin(2 pi k.x).

        ``k = 0`` contributes the constant ``a``.
        """
        table: dict[tuple, complex] = {}
        for k, a, b in terms:
            k = tuple(int(v) for v in np.atleast_1d(k))
            if len(k) != d:
                raise ValueError(f"frequency {k} does not have dimension {d}")
            if not any(k):
                table[k] = table.get(k, 0) + a
                continue
            mk = tuple(-v for v in k)
            # a cos + b sin = (a - i b)/2 e(k.x) + (a + i b)/2 e(-k.x)
            table[k] = table.get(k, 0) + (a - 1j * b) / 2
            table[mk] = table.get(mk, 0) + (a + 1j * b) / 2
        return cls.from_table(table, d).simplify()

    def simplify(self, tol: float = 0.0) -> "TrigPoly":
        """Merge duplicate frequencies and drop coefficients with modulus <= tol."""
        keys, inv = np.unique(self.freqs, axis=0, return_inverse=True)
        merged = np.zeros(len(keys), dtype=complex)
        np.add.at(merged, inv.ravel(), self.coeffs)
        keep = np.abs(merged) > tol
        if not keep.any():
            return TrigPoly.zero(self.dim)
        return TrigPoly(keys[keep], merged[keep])

    def table(self) -> dict[tuple, complex]:
        return {tuple(int(v) for v in k): complex(c) for k, c in zip(self.freqs, self.coeffs)}

    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        return TrigPoly(np.vstack([self.freqs, other.freqs]),
                        np.concatenate([self.coeffs, other.coeffs])).simplify()

    def __neg__(self) -> "TrigPoly":
        return TrigPoly(self.freqs, -self.coeffs)

    def __sub__(self, other: "TrigPoly") -> "TrigPoly":
        return self + (-other)

    def scale(self, a: complex) -> "TrigPoly":
        return TrigPoly(self.freqs, a * self.coeffs)

    def compose_linear(self, A: np.ndarray) -> "TrigPoly":
        """Coefficients of x -> self(A x) for an integer matrix A."""
        A = np.asarray(A, dtype=np.int64)
        return TrigPoly(self.freqs @ A, self.coeffs).simplify()

    def max_freq(self) -> int:
        return int(np.abs(self.freqs).max()) if self.freqs.size else 0

    def _phase(self, x: np.ndarray) -> np.ndarray:
        pts = as_points(x, self.dim)
        return np.exp(1j * TWO_PI * (pts @ self.freqs.T.astype(float)))

    def __call__(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        flat = pts.reshape(-1, self.dim)
        step = max(1, _CHUNK // max(1, len(self.coeffs)))
        if len(flat) <= step:
            return self._phase(pts) @ self.coeffs
        out = np.empty(len(flat), dtype=complex)
        for lo in range(0, len(flat), step):
            out[lo:lo + step] = self._phase(flat[lo:lo + step]) @ self.coeffs
        return out.reshape(pts.shape[:-1])

    def real(self, x) -> np.ndarray:
        return self(x).real

    def gradient(self, x) -> np.ndarray:
        """Complex gradient, shape (..., d)."""
        weighted = (1j * TWO_PI) * self.coeffs[:, None] * self.freqs
        return self._phase(x) @ weighted

    def hessian(self, x) -> np.ndarray:
        f = self.freqs.astype(float)
        weighted = -(TWO_PI**2) * self.coeffs[:, None, None] * f[:, :, None] * f[:, None, :]
        ph = self._phase(x)
        return np.einsum("...m,mij->...ij", ph, weighted)

    def derivative_l1(self, order: int = 1) -> float:
        """Upper bound sum_k (2 pi |k|)^order |c_k| for the sup of the order-th derivative."""
        norms = np.linalg.norm(self.freqs.astype(float), axis=1)
        return float(np.sum((TWO_PI * norms) ** order * np.abs(self.coeffs)))

    def hermitian_defect(self) -> float:
        """max |c_k - conj(c_{-k})|; zero iff the polynomial is real valued."""
        tab = self.table()
        worst = 0.0
        for k, c in tab.items():
            mk = tuple(-v for v in k)
            worst = max(worst, abs(c - np.conj(tab.get(mk, 0.0))))
        return worst

    def mean(self) -> complex:
        mask = ~self.freqs.any(axis=1)
        return complex(self.coeffs[mask].sum())

    @classmethod
    def from_grid(cls, values: np.ndarray, tol: float = 0.0) -> "TrigPoly":
        """Interpolating polynomial of samples on a uniform grid (Nyquist modes dropped)."""
        d = values.ndim
        M = values.shape[0]
        half = (M - 1) // 2
        freqs = frequency_box(half, d)
        return cls(freqs, grid_coefficients(values, freqs)).simplify(tol)
