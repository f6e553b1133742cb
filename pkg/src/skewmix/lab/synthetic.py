"""Random ground-truth experiments on the doubling map.

Coboundary cases satisfy v.tau = c + u - u o T for a random primitive integer v
with |v|_inf <= 3; generic cases draw every Fourier coefficient at random and are
redrawn while the orbit test comes close to a dependence.
"""

from __future__ import annotations

import math

import numpy as np

from ..cobound import best_dependence, collect_obstructions
from .config import ExperimentConfig, poly_to_rows, rows_to_poly


def _random_rows(rng: np.random.Generator, d: int, degree: int, scale: float) -> list[list[float]]:
    return [[k] + [0] * (d - 1) + [float(rng.normal(0, scale)), float(rng.normal(0, scale))]
            for k in range(1, degree + 1)]


def _primitive(rng: np.random.Generator, ell: int, bound: int = 3) -> list[int]:
    while True:
        v = [int(x) for x in rng.integers(-bound, bound + 1, size=ell)]
        if any(v) and math.gcd(*[abs(x) for x in v]) == 1:
            return v


def _light(cfg: ExperimentConfig) -> ExperimentConfig:
    cfg.symbol.n_max = 4
    cfg.symbol.dir_resolution = 30.0
    cfg.symbol.x_points = 16
    cfg.correlate.n_max = 30
    cfg.correlate.window = [5, 30]
    cfg.correlate.grid = 512
    return cfg


def random_coboundary(rng: np.random.Generator, ell: int, seed: int = 0) -> tuple[ExperimentConfig, list[int]]:
    """Config whose tau satisfies v.tau = c + u - u o T; returns (config, v)."""
    v = _primitive(rng, ell)
    degree = int(rng.integers(1, 7))
    u_rows = _random_rows(rng, 1, degree, 0.08)
    c = float(rng.uniform(0, 1))
    vv = np.asarray(v, dtype=float)
    w = vv / (vv @ vv)
    if ell == 1:
        comps = [[]]
    else:
        # rho is added along a direction orthogonal to v, leaving v.tau untouched
        rho = rows_to_poly(_random_rows(rng, 1, int(rng.integers(1, 7)), 0.15), 1)
        z = np.array([-vv[1], vv[0]])
        comps = [poly_to_rows(rho.scale(float(zi))) for zi in z]
    cfg = ExperimentConfig()
    cfg.seed = seed
    cfg.tau.components = comps
    cfg.tau.cobound_v = [float(x) for x in w]
    cfg.tau.cobound_c = c
    cfg.tau.cobound_u = u_rows
    cfg.validate()
    return _light(cfg), v


def random_generic(rng: np.random.Generator, ell: int, seed: int = 0,
                   min_residual: float = 0.01) -> ExperimentConfig:
    """Config with random tau, redrawn until the orbit test is far from any dependence."""
    while True:
        comps = [_random_rows(rng, 1, int(rng.integers(1, 7)), 0.15) for _ in range(ell)]
        cfg = ExperimentConfig()
        cfg.seed = seed
        cfg.tau.components = comps
        cfg.validate()
        tmap = cfg.build_map()
        tau = cfg.build_tau(tmap)
        obs = collect_obstructions(tmap, tau, cfg.livsic.p_max)
        real = best_dependence(obs, "real")
        integral = best_dependence(obs, "integral", cfg.livsic.v_max)
        if min(real.orbit_residual, integral.orbit_residual) >= min_residual:
            return _light(cfg)
