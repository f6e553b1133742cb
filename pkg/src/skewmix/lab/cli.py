"""Command line entry point: ``skewmix <subcommand> --config <path> [overrides]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ..density import invariant_density, transfer_apply
from ..errors import BudgetExceeded, ConfigError, NewtonDivergence, NonConvergence
from ..symbol import GridSpec, N0Found, WeightG, direction_grid, ptilde_field
from ..trig import torus_grid
from .config import ExperimentConfig, default_nus
from .report import dichotomy_report, dumps, run_correlate, run_livsic, run_spectrum, run_symbol, symbol_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_NUMERIC = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skewmix", description="Mixing versus coboundary laboratory for torus skew products.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--out", help="write JSON here instead of stdout")
        p.add_argument("--seed", type=int, help="override the recorded seed")
        return p

    p = add("density", "invariant density samples and invariance residual")
    p.add_argument("--K-h", type=int, dest="K_h")
    p.add_argument("--samples", type=int, default=256, help="number of CSV sample points (d = 1)")
    p.add_argument("--csv", help="write (x, h(x)) samples here")

    p = add("twist-spectrum", "spectral radii of the twisted operators")
    p.add_argument("--nu-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--K", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--weight-style", choices=["bracket", "lambda"])

    p = add("symbol-bound", "search for n0 with sup p~ < 1")
    p.add_argument("--s", type=float)
    p.add_argument("--n-max", type=int)
    p.add_argument("--dir-resolution", type=float, help="direction spacing in degrees (l >= 2)")
    p.add_argument("--xi-grid", type=int, help="covector grid steps per radius R")
    p.add_argument("--csv", help="write the final p~ field for the first direction here")

    p = add("livsic", "periodic-orbit coboundary test and certificate")
    p.add_argument("--p-max", type=int)
    p.add_argument("--mode", choices=["auto", "real", "integral"])
    p.add_argument("--v-max", type=int)

    p = add("correlate", "correlation series and fitted decay rate")
    p.add_argument("--n-max", type=int)
    p.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--csv", help="write (n, C_n) rows here")

    add("dichotomy", "full report with verdict")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> None:
    cmd = args.command
    if args.seed is not None:
        cfg.seed = args.seed
    if cmd == "density" and args.K_h is not None:
        cfg.map.K_h = args.K_h
    if cmd == "twist-spectrum":
        for key, attr in [("nu_range", "nu_range"), ("K", "K"), ("s", "s"), ("weight_style", "weight_style")]:
            val = getattr(args, key)
            if val is not None:
                setattr(cfg.spectral, attr, list(val) if key == "nu_range" else val)
    if cmd == "symbol-bound":
        for key in ("s", "n_max", "dir_resolution"):
            val = getattr(args, key)
            if val is not None:
                setattr(cfg.symbol, key, val)
        if args.xi_grid is not None:
            if args.xi_grid <= 0:
                raise ConfigError("--xi-grid must be positive")
            cfg.symbol.xi_spacing = 1.0 / args.xi_grid
    if cmd == "livsic":
        for key in ("p_max", "mode", "v_max"):
            val = getattr(args, key)
            if val is not None:
                setattr(cfg.livsic, key, val)
    if cmd == "correlate":
        if args.n_max is not None:
            cfg.correlate.n_max = args.n_max
        if args.window is not None:
            cfg.correlate.window = list(args.window)
    cfg.validate()


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])


def _cmd_density(cfg: ExperimentConfig, args) -> dict:
    tmap = cfg.build_map()
    h = invariant_density(tmap, cfg.map.K_h, cfg.map.density_tol, cfg.map.density_grid)
    M = 2048 if tmap.dim == 1 else 64
    vals = h(torus_grid(M, tmap.dim)).reshape((M,) * tmap.dim)
    residual = float(np.abs(transfer_apply(tmap, vals, K_interp=cfg.map.K_h) - vals).max())
    if args.csv:
        n = args.samples if tmap.dim == 1 else 32
        x = torus_grid(n, tmap.dim)
        cols = [f"x{i + 1}" for i in range(tmap.dim)] if tmap.dim > 1 else ["x"]
        _write_csv(args.csv, cols + ["h"], np.column_stack([x, h(x)]))
    return {"mean": h.mean, "positivity_margin": h.positivity_margin, "residual": residual,
            "K_h": h.K_h, "iterations": h.iterations}


def _cmd_spectrum(cfg: ExperimentConfig, args) -> list[dict]:
    tmap = cfg.build_map()
    tau = cfg.build_tau(tmap)
    return run_spectrum(cfg, tmap, tau, default_nus(tau.fiber_dim, *cfg.spectral.nu_range))


def _cmd_symbol(cfg: ExperimentConfig, args) -> dict:
    tmap = cfg.build_map()
    tau = cfg.build_tau(tmap)
    h = invariant_density(tmap, cfg.map.K_h, cfg.map.density_tol, cfg.map.density_grid)
    result = run_symbol(cfg, tmap, tau, h)
    if args.csv:
        n = result.n0 if isinstance(result, N0Found) else result.n_max
        sy = cfg.symbol
        first = direction_grid(tau.fiber_dim, sy.dir_resolution)[0]
        fld = ptilde_field(tmap, tau, h, sy.s, first, n, GridSpec(sy.x_points, sy.xi_spacing),
                           WeightG.for_system(tmap, tau))
        d = tmap.dim
        X = np.repeat(fld.grid_x, len(fld.grid_xi), axis=0)
        XI = np.tile(fld.grid_xi, (len(fld.grid_x), 1))
        header = [f"x{i + 1}" for i in range(d)] + [f"xi{i + 1}" for i in range(d)] + ["ptilde"]
        _write_csv(args.csv, header, np.column_stack([X, XI, fld.values.ravel()]))
    return symbol_summary(result)


def _cmd_livsic(cfg: ExperimentConfig, args) -> dict:
    tmap = cfg.build_map()
    tau = cfg.build_tau(tmap)
    cert = run_livsic(cfg, tmap, tau)
    return {"certificate": cert.to_dict() if cert is not None else None}


def _cmd_correlate(cfg: ExperimentConfig, args) -> dict:
    tmap = cfg.build_map()
    tau = cfg.build_tau(tmap)
    h = invariant_density(tmap, cfg.map.K_h, cfg.map.density_tol, cfg.map.density_grid)
    C, fit = run_correlate(cfg, tmap, tau, h)
    if args.csv:
        _write_csv(args.csv, ["n", "C"], [(n + 1, c) for n, c in enumerate(C)])
    return {"correlations": [float(c) for c in C], "fit": fit}


def _cmd_dichotomy(cfg: ExperimentConfig, args) -> dict:
    return dichotomy_report(cfg).to_dict()


COMMANDS = {
    "density": _cmd_density,
    "twist-spectrum": _cmd_spectrum,
    "symbol-bound": _cmd_symbol,
    "livsic": _cmd_livsic,
    "correlate": _cmd_correlate,
    "dichotomy": _cmd_dichotomy,
}


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        _apply_overrides(cfg, args)
        payload = COMMANDS[args.command](cfg, args)
        if isinstance(payload, list):
            payload = {"results": payload}
        payload["seed"] = cfg.seed
        text = dumps(payload)
        out = args.out or cfg.output
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NonConvergence, NewtonDivergence) as exc:
        print(f"numerical non-convergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main(argv: list[str] | None = None) -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
