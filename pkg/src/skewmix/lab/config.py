"""Experiment configuration: a TOML file with sections [map], [tau], [spectral],
[symbol], [livsic] and [correlate], plus top-level ``seed`` and ``output``.

Real trigonometric polynomials are written as rows ``[k_1, ..., k_d, a, b]``
meaning a cos(2 pi k.x) + b sin(2 pi k.x); ``k = 0`` contributes the constant a.
Observables on T^{d+l} use rows ``[k_x..., k_y..., a, b]``.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigError
from ..maps import ExpandingMap, FiberRotation
from ..trig import TrigPoly

Rows = list[list[float]]


@dataclass
class MapSpec:
    kind: str = "linear"
    matrix: list[list[int]] = field(default_factory=lambda: [[2]])
    base: int = 2
    perturbation: Rows = field(default_factory=list)
    K_h: int = 64
    density_tol: float = 1e-12
    density_grid: int = 2048


@dataclass
class TauSpec:
    components: list[Rows] = field(default_factory=lambda: [[[1, 1.0, 0.0]]])
    cobound_v: list[float] = field(default_factory=list)
    cobound_c: float = 0.0
    cobound_u: Rows = field(default_factory=list)


@dataclass
class SpectralSpec:
    K: int = 64
    s: float = -1.0
    weight_style: str = "bracket"
    nu_range: list[int] = field(default_factory=lambda: [1, 1])
    gelfand_window: list[int] = field(default_factory=lambda: [20, 40])
    radius_margin: float = 1e-3
    refine: bool = True


@dataclass
class SymbolSpec:
    enabled: bool = True
    s: float = -1.0
    n_max: int = 8
    dir_resolution: float = 5.0
    x_points: int = 64
    xi_spacing: float = 1.0 / 64
    margin: float = 1e-3


@dataclass
class LivsicSpec:
    p_max: int = 6
    mode: str = "auto"
    v_max: int = 12
    orbit_tol: float = 1e-6
    equation_tol: float = 1e-5
    grid: int = 256


@dataclass
class CorrelateSpec:
    n_max: int = 40
    grid: int = 1024
    window: list[int] = field(default_factory=lambda: [10, 40])
    floor: float = 1e-13
    phi: Rows = field(default_factory=list)
    psi: Rows = field(default_factory=list)


SECTIONS = {
    "map": MapSpec,
    "tau": TauSpec,
    "spectral": SpectralSpec,
    "symbol": SymbolSpec,
    "livsic": LivsicSpec,
    "correlate": CorrelateSpec,
}


@dataclass
class ExperimentConfig:
    map: MapSpec = field(default_factory=MapSpec)
    tau: TauSpec = field(default_factory=TauSpec)
    spectral: SpectralSpec = field(default_factory=SpectralSpec)
    symbol: SymbolSpec = field(default_factory=SymbolSpec)
    livsic: LivsicSpec = field(default_factory=LivsicSpec)
    correlate: CorrelateSpec = field(default_factory=CorrelateSpec)
    seed: int = 0
    output: str = ""

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        kwargs: dict[str, Any] = {}
        for key in ("seed", "output"):
            if key in data:
                kwargs[key] = data.pop(key)
        for name, spec_cls in SECTIONS.items():
            section = data.pop(name, {})
            if not isinstance(section, dict):
                raise ConfigError(f"[{name}] must be a table")
            known = {f.name for f in fields(spec_cls)}
            unknown = set(section) - known
            if unknown:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
            kwargs[name] = spec_cls(**section)
        if data:
            raise ConfigError(f"unknown top-level keys: {sorted(data)}")
        cfg = cls(**kwargs)
        try:
            cfg.validate()
        except TypeError as exc:
            raise ConfigError(f"wrong value type in config: {exc}") from exc
        return cfg

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_toml(text)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"seed": self.seed}
        if self.output:
            out["output"] = self.output
        for name in SECTIONS:
            out[name] = asdict(getattr(self, name))
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    # validation -------------------------------------------------------
    def validate(self) -> None:
        m, t, sp, sy, lv, co = self.map, self.tau, self.spectral, self.symbol, self.livsic, self.correlate
        _check(m.kind in ("linear", "perturbed"), "map.kind must be 'linear' or 'perturbed'")
        _check(isinstance(self.seed, int), "seed must be an integer")
        for name, val in [("map.density_tol", m.density_tol), ("spectral.radius_margin", sp.radius_margin),
                          ("symbol.margin", sy.margin), ("symbol.xi_spacing", sy.xi_spacing),
                          ("livsic.orbit_tol", lv.orbit_tol), ("livsic.equation_tol", lv.equation_tol),
                          ("correlate.floor", co.floor), ("symbol.dir_resolution", sy.dir_resolution)]:
            _check(isinstance(val, (int, float)) and val > 0, f"{name} must be positive")
        for name, val in [("spectral.K", sp.K), ("map.K_h", m.K_h), ("symbol.n_max", sy.n_max),
                          ("livsic.p_max", lv.p_max), ("livsic.v_max", lv.v_max),
                          ("correlate.n_max", co.n_max), ("symbol.x_points", sy.x_points)]:
            _check(isinstance(val, int) and val > 0, f"{name} must be a positive integer")
        _check(-4.0 <= sp.s <= -0.25 and -4.0 <= sy.s <= -0.25, "s must lie in [-4, -1/4]")
        _check(sp.weight_style in ("bracket", "lambda"), "spectral.weight_style must be bracket or lambda")
        _check(lv.mode in ("auto", "real", "integral"), "livsic.mode must be auto, real or integral")
        _check(len(sp.nu_range) == 2 and 1 <= sp.nu_range[0] <= sp.nu_range[1],
               "spectral.nu_range must be [lo, hi] with 1 <= lo <= hi")
        _check(len(sp.gelfand_window) == 2 and 1 <= sp.gelfand_window[0] < sp.gelfand_window[1],
               "spectral.gelfand_window must be [lo, hi]")
        _check(len(co.window) == 2 and 1 <= co.window[0] < co.window[1], "correlate.window must be [lo, hi]")
        _check(co.grid >= 8 and co.grid & (co.grid - 1) == 0, "correlate.grid must be a power of two")
        _check(m.density_tol >= 1e-12, "map.density_tol must be >= 1e-12")
        _check(len(t.components) >= 1, "tau needs at least one component")
        if t.cobound_v:
            _check(len(t.cobound_v) == len(t.components), "tau.cobound_v must have one entry per component")

    # builders ---------------------------------------------------------
    def build_map(self) -> ExpandingMap:
        m = self.map
        try:
            if m.kind == "linear":
                return ExpandingMap.linear(np.array(m.matrix))
            return ExpandingMap.perturbed(m.base, rows_to_poly(m.perturbation, 1))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid map: {exc}") from exc

    def build_tau(self, tmap: ExpandingMap | None = None) -> FiberRotation:
        tmap = tmap or self.build_map()
        d = tmap.dim
        t = self.tau
        try:
            comps = [rows_to_poly(rows, d) for rows in t.components]
            if t.cobound_v:
                u = rows_to_poly(t.cobound_u, d)
                extra = TrigPoly.constant(t.cobound_c, d) + coboundary_part(tmap, u)
                comps = [c + extra.scale(float(w)) for c, w in zip(comps, t.cobound_v)]
            return FiberRotation.from_components(comps)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid tau: {exc}") from exc

    def observables(self, d: int, ell: int) -> tuple[TrigPoly, TrigPoly]:
        """(phi, psi) on T^{d+l}; both default to cos(2 pi y_1)."""
        default = [[0] * d + [1] + [0] * (ell - 1) + [1.0, 0.0]]
        try:
            phi = rows_to_poly(self.correlate.phi or default, d + ell)
            psi = rows_to_poly(self.correlate.psi or default, d + ell)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid observable: {exc}") from exc
        return phi, psi


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def rows_to_poly(rows: Rows, d: int) -> TrigPoly:
    if not rows:
        return TrigPoly.zero(d)
    terms = []
    for row in rows:
        if len(row) != d + 2:
            raise ValueError(f"row {row} should have {d} frequencies and two amplitudes")
        k = [int(v) for v in row[:d]]
        if any(float(v) != int(v) for v in row[:d]):
            raise ValueError(f"frequencies in row {row} must be integers")
        terms.append((k, float(row[d]), float(row[d + 1])))
    return TrigPoly.from_real_terms(terms, d)


def poly_to_rows(poly: TrigPoly) -> Rows:
    """Inverse of :func:`rows_to_poly` for real polynomials (one row per +/- pair)."""
    tab = poly.table()
    rows = []
    for k in sorted(tab):
        if any(k) and k < tuple(-v for v in k):
            continue
        c = tab[k]
        if not any(k):
            rows.append([*k, float(c.real), 0.0])
        else:
            # c e(k.x) + conj(c) e(-k.x) = 2Re(c) cos - 2Im(c) sin
            rows.append([*k, 2 * float(c.real), -2 * float(c.imag)])
    return rows


def coboundary_part(tmap: ExpandingMap, u: TrigPoly, grid: int = 1024) -> TrigPoly:
    """u - u o T, exact for linear maps and interpolated on a fine grid otherwise."""
    if tmap.kind == "linear":
        return u - u.compose_linear(tmap.matrix)
    x = np.arange(grid) / grid
    uT = TrigPoly.from_grid(u.real(tmap.eval(x)), tol=1e-17)
    return u - uT


def default_nus(ell: int, lo: int, hi: int) -> list[tuple[int, ...]]:
    """Integer nu with lo <= |nu|_inf <= hi, one per +/- pair (first nonzero entry positive)."""
    out = []
    for nu in itertools.product(range(-hi, hi + 1), repeat=ell):
        if not lo <= max(abs(v) for v in nu) <= hi:
            continue
        first = next(v for v in nu if v)
        if first > 0:
            out.append(nu)
    return out
