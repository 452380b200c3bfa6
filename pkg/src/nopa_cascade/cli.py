"""Command-line entry point: ``nopa-cascade {sweep,calibrate,oracle}``.

Exit codes: 0 success, 2 configuration error, 3 calibration did not converge
or the Monte Carlo oracle disagreed with the engine, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from .calibrate import calibrate
from .config import CONFIG_HELP, SweepConfig, load_config, parse_config
from .errors import ConfigError, OutputError
from .langevin import SimulationRun, compare_with_engine, simulate
from .quad import X_DIFF, X_SUM, Y_DIFF, Y_SUM
from .sweep import emit_csv, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4
BUILTIN_PREFIX = "builtin:"

log = logging.getLogger("nopa_cascade")


def shipped_config_text(name: str) -> str:
    """Text of a packaged example config (``fig2``, ``fig3`` or ``nopa1``)."""
    fname = name if name.endswith(".cfg") else name + ".cfg"
    try:
        return resources.files("nopa_cascade").joinpath("configs", fname).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"no shipped config named {name!r}") from None


def _load(source: str) -> SweepConfig:
    if source.startswith(BUILTIN_PREFIX):
        name = source[len(BUILTIN_PREFIX):]
        return parse_config(shipped_config_text(name), source=source)
    return load_config(source)


def _apply_flags(cfg: SweepConfig, args) -> SweepConfig:
    if getattr(args, "points", None) is not None:
        if args.points < 2:
            raise ConfigError("need at least 2 points", key_path="--points")
        cfg = replace(cfg, sweep=replace(cfg.sweep, points=args.points))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_rows(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _oracle_rows(cfg: SweepConfig, trajectories, detuning=None, dump=None):
    chain = cfg.build_chain()
    if detuning is not None:
        el = chain.elements[chain.index_of(cfg.sweep.element)]
        chain = replace(chain, elements=tuple(
            replace(e, params=e.params.with_detuning(detuning)) if e is el else e for e in chain.elements))
    run = SimulationRun.with_defaults(chain, rng_seed=cfg.seed, n_trajectories=trajectories)
    series = simulate(run)
    if dump:
        try:
            series.dump_csv(dump)
        except OSError as exc:
            raise OutputError(f"cannot write {dump}: {exc.strerror or exc}") from exc
    freq = cfg.analysis_frequency
    return compare_with_engine(run, [freq], (X_SUM, Y_DIFF, X_DIFF, Y_SUM), series=series)


def _print_oracle(rows):
    print(f"{'combination':<12}{'freq/MHz':>10}{'monte carlo':>14}{'engine':>10}{'z':>8}")
    for r in rows:
        flag = "" if r.agrees else "  DISAGREES"
        print(f"{r.combination:<12}{r.analysis_frequency:>10.3f}{r.monte_carlo:>10.4f}+-{r.stderr:<6.4f}"
              f"{r.engine:>8.4f}{r.z_score:>8.2f}{flag}")


def cmd_sweep(args) -> int:
    cfg = _apply_flags(_load(args.config), args)
    result = run_sweep(cfg, workers=args.workers)
    out = args.out or cfg.output_path
    if out:
        emit_csv(result, out)
        print(f"wrote {len(result)} rows to {out}")
    else:
        from .sweep import format_csv

        sys.stdout.write(format_csv(result))
    if cfg.oracle:
        mid = float(result.values[len(result.values) // 2])
        detuning = mid if cfg.sweep.kind == "detuning" else None
        rows = _oracle_rows(cfg, args.trajectories, detuning)
        _print_oracle(rows)
        if not all(r.agrees for r in rows):
            return EXIT_CONVERGENCE
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = _apply_flags(_load(args.config), args)
    if cfg.calibration is None:
        raise ConfigError("no [target.*] sections to calibrate against", key_path="target")
    result = calibrate(cfg.calibration, cfg)
    lines = [f"# converged = {'yes' if result.converged else 'no'} ({result.message})",
             f"# objective = {result.objective:.6e} dB^2 after {result.n_evaluations} evaluations"]
    for name, r in result.residuals.items():
        lines.append(f"# residual {name} = {r:+.6f} dB")
    for path, value in result.parameters.items():
        lines.append(f"{path} = {value:.6f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot write {args.out}: {exc.strerror or exc}") from exc
    return EXIT_OK if result.converged else EXIT_CONVERGENCE


def cmd_oracle(args) -> int:
    cfg = _apply_flags(_load(args.config), args)
    rows = _oracle_rows(cfg, args.trajectories, dump=args.dump)
    _print_oracle(rows)
    if args.out:
        _write_rows(args.out, ["combination", "analysis_frequency", "monte_carlo", "stderr", "engine", "z"],
                    [[r.combination, f"{r.analysis_frequency:.6f}", f"{r.monte_carlo:.6f}", f"{r.stderr:.6f}",
                      f"{r.engine:.6f}", f"{r.z_score:.3f}"] for r in rows])
    return EXIT_OK if all(r.agrees for r in rows) else EXIT_CONVERGENCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nopa-cascade",
        description="Correlation-variance spectra of cascaded sub-threshold NOPAs.",
        epilog="Config keys:\n" + CONFIG_HELP + "\nExit codes: 0 ok, 2 config error, "
        "3 no convergence / oracle disagreement, 4 I/O error.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="config file path, or builtin:<name> for a shipped one (fig2, fig3, nopa1)")
        p.add_argument("--out", help="output path (overrides [output] path)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides [output] seed)")

    p = sub.add_parser("sweep", help="detuning or frequency sweep to CSV")
    common(p)
    p.add_argument("--points", type=int, help="number of sweep points")
    p.add_argument("--workers", type=int, default=1, help="threads used to evaluate sweep points")
    p.add_argument("--trajectories", type=int, default=100, help="Monte Carlo trajectories when oracle = yes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit [free.*] parameters to [target.*] values")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("oracle", help="Monte Carlo cross-check at the configured operating point")
    common(p)
    p.add_argument("--trajectories", type=int, default=100)
    p.add_argument("--dump", help="write the first trajectory's raw series as CSV")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OutputError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
