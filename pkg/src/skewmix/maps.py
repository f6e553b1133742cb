"""Expanding endomorphisms of T^d, fiber rotations, preimages and periodic orbits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetExceeded, NewtonDivergence
from .trig import TrigPoly, as_points, torus_distance, torus_grid, wrap

DEFAULT_BUDGET = 2**20


def _coset_offsets(A: np.ndarray) -> np.ndarray:
    """Representatives k of Z^d / A Z^d, lexicographically smallest first.

    The inverse branches of x -> A x are y = A^{-1}(x + k) for these k.
    """
    d = A.shape[0]
    D = int(round(abs(np.linalg.det(A))))
    Ainv = np.linalg.inv(A)
    seen: list[np.ndarray] = []
    reps: list[tuple[int, ...]] = []
    for k in itertools.product(range(D), repeat=d):
        frac = wrap(Ainv @ np.array(k, dtype=float))
        if any(torus_distance(frac, s) < 1e-9 for s in seen):
            continue
        seen.append(frac)
        reps.append(k)
        if len(reps) == D:
            break
    return np.array(reps, dtype=np.int64).reshape(D, d)


@dataclass(frozen=True, eq=False)
class ExpandingMap:
    """A linear toral endomorphism (any d) or a perturbed N0-fold circle map (d = 1).

    Build instances with :meth:`linear` or :meth:`perturbed`.
    """

    dim: int
    kind: str
    degree: int
    gamma: float
    matrix: np.ndarray | None = None
    base: int | None = None
    perturbation: TrigPoly | None = None
    offsets: np.ndarray | None = field(default=None, repr=False)
    budget: int = DEFAULT_BUDGET

    @classmethod
    def linear(cls, A, budget: int = DEFAULT_BUDGET) -> "ExpandingMap":
        A = np.atleast_2d(np.asarray(A))
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        if not np.array_equal(A, np.round(A)):
            raise ValueError("matrix must have integer entries")
        A = A.astype(np.int64)
        eig = np.linalg.eigvals(A.astype(float))
        if np.min(np.abs(eig)) <= 1.0:
            raise ValueError(f"matrix {A.tolist()} has an eigenvalue of modulus <= 1; not expanding")
        gamma = float(np.linalg.svd(A.astype(float), compute_uv=False).min())
        if gamma <= 1.0:
            raise ValueError(
                f"smallest singular value {gamma:.6g} <= 1: |Dx T v| > 1 fails for some unit v"
            )
        degree = int(round(abs(np.linalg.det(A.astype(float)))))
        return cls(dim=A.shape[0], kind="linear", degree=degree, gamma=gamma, matrix=A,
                   offsets=_coset_offsets(A), budget=budget)

    @classmethod
    def perturbed(cls, base: int, perturbation: TrigPoly, budget: int = DEFAULT_BUDGET) -> "ExpandingMap":
        """T(x) = base*x + p(x) mod 1 with ||p'|| < (base - 1)/2."""
        if base < 2:
            raise ValueError("base multiplier must be >= 2")
        if perturbation.dim != 1:
            raise ValueError("perturbed maps are one dimensional")
        if perturbation.hermitian_defect() > 1e-12:
            raise ValueError("perturbation must be real valued")
        dp = perturbation.derivative_l1(1)
        if dp >= (base - 1) / 2:
            raise ValueError(f"||p'|| bound {dp:.6g} must be < (N0-1)/2 = {(base - 1) / 2}")
        return cls(dim=1, kind="perturbed", degree=int(base), gamma=float(base - dp), base=int(base),
                   perturbation=perturbation, budget=budget)

    def eval(self, x) -> np.ndarray:
        pts = as_points(x, self.dim)
        if self.kind == "linear":
            return wrap(pts @ self.matrix.T.astype(float))
        return wrap(self.base * pts + self.perturbation.real(pts)[..., None])

    def derivative(self, x) -> np.ndarray:
        """D_x T with shape (..., d, d)."""
        pts = as_points(x, self.dim)
        if self.kind == "linear":
            return np.broadcast_to(self.matrix.astype(float), pts.shape[:-1] + (self.dim, self.dim)).copy()
        slope = self.base + self.perturbation.gradient(pts).real[..., 0]
        return slope[..., None, None]

    def log_jacobian(self, x) -> np.ndarray:
        """log |det D_x T|."""
        pts = as_points(x, self.dim)
        if self.kind == "linear":
            return np.full(pts.shape[:-1], math.log(self.degree))
        return np.log(np.abs(self.base + self.perturbation.gradient(pts).real[..., 0]))

    def inverse_branches(self, x) -> np.ndarray:
        """All N preimages of each point, shape (..., N, d), ordered by branch label."""
        pts = as_points(x, self.dim)
        if self.kind == "linear":
            Ainv = np.linalg.inv(self.matrix.astype(float))
            shifted = pts[..., None, :] + self.offsets.astype(float)
            return wrap(shifted @ Ainv.T)
        target = pts[..., None, 0] + np.arange(self.base, dtype=float)
        return self._newton_branches(target)[..., None]

    def _newton_branches(self, target: np.ndarray, max_iter: int = 100, tol: float = 1e-12) -> np.ndarray:
        p = self.perturbation
        y = target / self.base
        res = self.base * y + p.real(y) - target
        for _ in range(max_iter):
            if np.all(np.abs(res) < tol):
                break
            slope = self.base + p.gradient(y).real[..., 0]
            step = res / slope
            trial = y - step
            trial_res = self.base * trial + p.real(trial) - target
            # damping: halve the step wherever the residual grew
            for _ in range(30):
                worse = np.abs(trial_res) > np.abs(res)
                if not worse.any():
                    break
                step = np.where(worse, step / 2, step)
                trial = y - step
                trial_res = self.base * trial + p.real(trial) - target
            y, res = trial, trial_res
        if not np.all(np.abs(res) < tol):
            raise NewtonDivergence(f"branch residual {np.abs(res).max():.3g} after {max_iter} iterations")
        return wrap(y)

    def iterate(self, x, n: int) -> np.ndarray:
        pts = as_points(x, self.dim)
        for _ in range(n):
            pts = self.eval(pts)
        return pts

    def check_budget(self, n: int) -> None:
        if self.degree**n > self.budget:
            raise BudgetExceeded(f"{self.degree}^{n} preimages exceed budget {self.budget}")


@dataclass(frozen=True, eq=False)
class FiberRotation:
    """tau: T^d -> R^l given componentwise by real trigonometric polynomials."""

    components: tuple[TrigPoly, ...]
    dtau_sup: float
    dtau_grid_max: float = 0.0

    @classmethod
    def from_components(cls, components: Sequence[TrigPoly], grid: int | None = None) -> "FiberRotation":
        comps = tuple(components)
        if not comps:
            raise ValueError("need at least one component")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ValueError("components must share the base dimension")
        for c in comps:
            if c.hermitian_defect() > 1e-12:
                raise ValueError("fiber rotation components must be real valued")
        rot = cls(comps, 0.0)
        return cls(comps, *rot._dtau_bounds(grid))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def fiber_dim(self) -> int:
        return len(self.components)

    def __call__(self, x) -> np.ndarray:
        return np.stack([c.real(x) for c in self.components], axis=-1)

    def jacobian(self, x) -> np.ndarray:
        """D_x tau with shape (..., l, d)."""
        return np.stack([c.gradient(x).real for c in self.components], axis=-2)

    def max_freq(self) -> int:
        return max(c.max_freq() for c in self.components)

    def project(self, v) -> TrigPoly:
        """The scalar polynomial v . tau."""
        v = np.asarray(v, dtype=float).ravel()
        out = TrigPoly.zero(self.dim)
        for vi, c in zip(v, self.components):
            if vi != 0.0:
                out = out + c.scale(vi)
        return out

    def l1_bound(self) -> float:
        return math.sqrt(sum(c.derivative_l1(1) ** 2 for c in self.components))

    def _dtau_bounds(self, grid: int | None) -> tuple[float, float]:
        d = self.dim
        if grid is None:
            grid = 4096 if d == 1 else 256
        grid = max(grid, 16 * self.max_freq() + 16)
        pts = torus_grid(grid, d)
        J = self.jacobian(pts)
        grid_max = float(np.linalg.norm(J, ord=2, axis=(-2, -1)).max())
        lip = math.sqrt(sum(c.derivative_l1(2) ** 2 for c in self.components))
        upper = grid_max + lip * math.sqrt(d) / (2 * grid)
        return min(self.l1_bound(), upper), grid_max


@dataclass(frozen=True, eq=False)
class PreimageWord:
    """A branch itinerary (i_1, ..., i_n) and the point T_i^{-n} x it selects."""

    word: tuple[int, ...]
    point: np.ndarray


def preimage_levels(tmap: ExpandingMap, x, n: int) -> list[np.ndarray]:
    """Preimage points of depth 0..n, level j having shape (..., N^j, d).

    Leaves are ordered lexicographically in the branch word: the leaf with word
    (i_1, ..., i_j) sits at index sum_k i_k N^(j-k).
    """
    tmap.check_budget(n)
    pts = as_points(x, tmap.dim)
    levels = [pts[..., None, :]]
    for _ in range(n):
        prev = levels[-1]
        kids = tmap.inverse_branches(prev)
        levels.append(kids.reshape(prev.shape[:-2] + (-1, tmap.dim)))
    return levels


def word_array(N: int, n: int) -> np.ndarray:
    """All words of length n over {0..N-1} in lexicographic order, shape (N^n, n)."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.array(list(itertools.product(range(N), repeat=n)), dtype=np.int64)


def preimage_tree(tmap: ExpandingMap, x, n: int) -> list[PreimageWord]:
    """All N^n preimages of a single point x under T^n, with their branch words."""
    if n < 0:
        raise ValueError("depth must be non-negative")
    leaves = preimage_levels(tmap, x, n)[-1]
    if leaves.ndim != 2:
        raise ValueError("preimage_tree takes a single point")
    words = word_array(tmap.degree, n)
    return [PreimageWord(tuple(int(i) for i in w), leaves[j]) for j, w in enumerate(words)]


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    points: np.ndarray
    period: int


def _branch_by_label(tmap: ExpandingMap, y: np.ndarray, labels: np.ndarray) -> np.ndarray:
    kids = tmap.inverse_branches(y)
    return np.take_along_axis(kids, labels[:, None, None], axis=1)[:, 0, :]


def periodic_orbits(tmap: ExpandingMap, p_max: int, tol: float = 1e-10) -> list[PeriodicOrbit]:
    """Distinct periodic orbits of minimal period <= p_max.

    Fixed points of T^p are found as fixed points of the contractions
    T_w^{-p} = T_{w_p}^{-1} ... T_{w_1}^{-1}, one per word w.
    """
    if tmap.kind != "linear" and tmap.dim != 1:
        raise ValueError("periodic orbits need d = 1 or a linear map")
    orbits: list[PeriodicOrbit] = []
    for p in range(1, p_max + 1):
        tmap.check_budget(p)
        words = word_array(tmap.degree, p)
        y = np.full((len(words), tmap.dim), 0.5)
        sweeps = int(math.ceil(60.0 / (p * math.log2(tmap.gamma)))) + 2
        for _ in range(sweeps):
            prev = y
            for j in range(p):
                y = _branch_by_label(tmap, y, words[:, j])
            if torus_distance(y, prev).max() < 1e-15:
                break
        y = np.where(np.minimum(y, 1.0 - y) < 1e-12, 0.0, y)
        fixed = _unique_points(y, 1e-9)
        minimal = [pt for pt in fixed if _minimal_period(tmap, pt, p, tol) == p]
        if not minimal:
            continue
        pool = np.array(minimal)
        used = np.zeros(len(pool), dtype=bool)
        for i in range(len(pool)):
            if used[i]:
                continue
            cycle = [i]
            cur = pool[i]
            for _ in range(p - 1):
                nxt = tmap.eval(cur)
                j = int(np.argmin(torus_distance(pool, nxt)))
                cycle.append(j)
                cur = pool[j]
            used[cycle] = True
            pts = pool[cycle]
            start = min(range(p), key=lambda k: tuple(pts[k]))
            orbits.append(PeriodicOrbit(np.roll(pts, -start, axis=0), p))
    orbits.sort(key=lambda o: (o.period, tuple(o.points[0])))
    return orbits


def _unique_points(pts: np.ndarray, tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for q in pts:
        if out and torus_distance(np.array(out), q).min() < tol:
            continue
        out.append(q)
    return out


def _minimal_period(tmap: ExpandingMap, pt: np.ndarray, p: int, tol: float) -> int:
    cur = pt
    for q in range(1, p + 1):
        cur = tmap.eval(cur)
        if p % q == 0 and torus_distance(cur, pt) < tol:
            return q
    return p + 1
