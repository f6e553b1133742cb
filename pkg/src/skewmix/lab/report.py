"""Dichotomy report: coboundary test, twisted spectra, symbol bound and correlations."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..cobound import CoboundaryCertificate, build_semiconjugacy, certify
from ..density import DensityModel, invariant_density
from ..errors import WindowTooNoisy
from ..maps import ExpandingMap, FiberRotation
from ..symbol import GridSpec, N0Found, direction_grid, find_n0
from ..twisted import assemble_koopman, spectral_radius, weighted_norm_growth
from .config import ExperimentConfig, default_nus
from .correlate import correlation_series, fit_decay_rate

log = logging.getLogger(__name__)

MIXING = "ExponentialMixing"
COBOUNDARY_INTEGRAL = "EssentialCoboundary(integral)"
COBOUNDARY_REAL = "EssentialCoboundary(non-integral)"
INCONCLUSIVE = "Inconclusive"

INSTABILITY_NOTE = (
    "tau is only a non-integral essential coboundary: the skew product is mixing "
    "but can be approximated by non-mixing skew products (unstably mixing)"
)


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays, complex numbers and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class DecayReport:
    seed: int
    correlations: list[float]
    fit: dict | None
    radii: list[dict]
    symbol: dict | None
    certificate: dict | None
    semiconjugacy_residual: float | None
    verdict: str
    flags: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "verdict": self.verdict,
            "correlations": self.correlations,
            "fit": self.fit,
            "radii": self.radii,
            "symbol": self.symbol,
            "certificate": self.certificate,
            "semiconjugacy_residual": self.semiconjugacy_residual,
            "flags": self.flags,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def run_livsic(cfg: ExperimentConfig, tmap: ExpandingMap, tau: FiberRotation) -> CoboundaryCertificate | None:
    lv = cfg.livsic
    return certify(tmap, tau, lv.p_max, lv.mode, lv.v_max, lv.orbit_tol, lv.equation_tol, lv.grid)


def run_spectrum(cfg: ExperimentConfig, tmap: ExpandingMap, tau: FiberRotation,
                 nus: list[tuple[int, ...]] | None = None) -> list[dict]:
    sp = cfg.spectral
    lo, hi = sp.gelfand_window
    if nus is None:
        nus = default_nus(tau.fiber_dim, *sp.nu_range)
    out = []
    for nu in nus:
        op = assemble_koopman(tmap, tau, nu, sp.K, sp.s, sp.weight_style)
        est = spectral_radius(op, "eig", (lo, hi), sp.refine)
        norms = weighted_norm_growth(op, hi).norms
        out.append({"nu": list(nu), "radius": est.value, "gelfand": est.gelfand,
                    "uncertainty": est.uncertainty, "leading": est.leading, "norms": norms})
    return out


def symbol_summary(result) -> dict:
    per_dir = [{"dir": list(k), "sup_history": v} for k, v in result.history.items()]
    if isinstance(result, N0Found):
        return {"n0": result.n0, "ptilde0": result.ptilde0, "rate_proxy": result.rate_proxy,
                "found": True, "per_direction": per_dir}
    return {"n0": None, "ptilde0": None, "found": False, "not_found_within": result.n_max,
            "per_direction": per_dir}


def run_symbol(cfg: ExperimentConfig, tmap: ExpandingMap, tau: FiberRotation, h: DensityModel):
    sy = cfg.symbol
    grid = GridSpec(x_points=sy.x_points, xi_spacing=sy.xi_spacing)
    dirs = direction_grid(tau.fiber_dim, sy.dir_resolution)
    return find_n0(tmap, tau, h, sy.s, dirs, sy.n_max, grid, sy.margin)


def run_correlate(cfg: ExperimentConfig, tmap: ExpandingMap, tau: FiberRotation, h: DensityModel):
    co = cfg.correlate
    phi, psi = cfg.observables(tmap.dim, tau.fiber_dim)
    C = correlation_series(tmap, tau, h, phi, psi, co.n_max, co.grid)
    try:
        fit = fit_decay_rate(C, tuple(co.window), co.floor).to_dict()
    except WindowTooNoisy as exc:
        fit = {"refused": str(exc)}
    return C, fit


def _is_multiple(nu, v) -> bool:
    nu = np.asarray(nu, dtype=float)
    v = np.asarray(v, dtype=float)
    m = (nu @ v) / (v @ v)
    return bool(abs(m) > 0.5 and abs(m - round(m)) < 1e-12 and np.allclose(nu, round(m) * v))


def decide(radii: list[dict], cert: CoboundaryCertificate | None, margin: float) -> tuple[str, list[str]]:
    """Verdict from spectral radii and the coboundary certificate."""
    flags: list[str] = []
    below = [r["radius"] < 1.0 - margin for r in radii]
    if cert is not None and cert.valid:
        if not cert.integral:
            return COBOUNDARY_REAL, flags
        clash = [r["nu"] for r in radii if _is_multiple(r["nu"], cert.v) and r["radius"] < 1.0 - margin]
        if clash:
            flags.append(f"CONFLICT: valid certificate for v={list(cert.v)} but radius < 1 at nu={clash}")
            return INCONCLUSIVE, flags
        return COBOUNDARY_INTEGRAL, flags
    if radii and all(below):
        return MIXING, flags
    near = [r["nu"] for r, b in zip(radii, below) if not b]
    flags.append(f"no certificate but radius within margin of 1 at nu={near}" if near else "no radii computed")
    return INCONCLUSIVE, flags


def dichotomy_report(cfg: ExperimentConfig) -> DecayReport:
    tmap = cfg.build_map()
    tau = cfg.build_tau(tmap)
    h = invariant_density(tmap, cfg.map.K_h, cfg.map.density_tol, cfg.map.density_grid)
    cert = run_livsic(cfg, tmap, tau)
    radii = run_spectrum(cfg, tmap, tau)
    symbol = symbol_summary(run_symbol(cfg, tmap, tau, h)) if cfg.symbol.enabled else None
    C, fit = run_correlate(cfg, tmap, tau, h)
    verdict, flags = decide(radii, cert, cfg.spectral.radius_margin)
    for f in flags:
        log.warning(f)
    semi = None
    if cert is not None and cert.valid and cert.integral:
        semi = build_semiconjugacy(tmap, tau, cert)
    notes = [INSTABILITY_NOTE] if verdict == COBOUNDARY_REAL else []
    return DecayReport(cfg.seed, [float(c) for c in C], fit, radii, symbol,
                       cert.to_dict() if cert is not None else None, semi, verdict, flags, notes)
