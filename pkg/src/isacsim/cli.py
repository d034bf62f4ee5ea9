"""
Command-line front end: configure a sweep from defaults, an optional flat
key=value config file and command-line overrides, run it, and write the
results as CSV or JSON lines (optionally rendering figures next to the
output). Exit codes: 0 success, 1 configuration/validation error, 2
runtime/numerical error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .experiments import (
    SweepResult,
    SweepSpec,
    default_grid,
    run_sweep,
)
from .model import CONSTELLATIONS, SystemConfig
from . import validation

CSV_HEADER = (
    "sweep_var,sweep_value,n_rx,trials,seed,ber_theory,ber_sim,ber_stderr,"
    "mse_sic,mse_sic_stderr,mse_mmse,mse_mmse_stderr"
)
CSV_COLUMNS = CSV_HEADER.split(",")

_INT_COLUMNS = {"n_rx", "trials", "seed"}

VALID_CONFIG_KEYS = (
    "seed", "trials", "n_rx", "sigma2_db", "grid_min", "grid_max",
    "grid_points", "n_tx", "theta", "beta", "gamma", "constellation",
)

_DEFAULTS = {
    "seed": 0,
    "trials": 100_000,
    "n_rx": (1, 2, 4),
    "sigma2_db": -30.0,
    "grid_min": 1e-3,
    "grid_max": 1e3,
    "grid_points": 13,
    "n_tx": 4,
    "theta": math.pi / 6,
    "beta": 1.0,
    "gamma": 1.0,
    "constellation": "qpsk",
}


class ConfigError(ValueError):
    """Configuration or argument problem (exit code 1)."""


def _fmt(value: float) -> str:
    """Floats serialize with 9 significant digits everywhere."""
    return format(float(value), ".9g")


def _parse_n_rx(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"invalid n_rx list {text!r}: {exc}") from exc


def load_config_file(path: str | Path) -> dict[str, str]:
    """Flat `key = value` file; blank lines and # comments are ignored."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{path}:{lineno}: expected 'key = value', got {raw!r}"
            )
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in VALID_CONFIG_KEYS:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r}; valid keys: "
                + ", ".join(VALID_CONFIG_KEYS)
            )
        values[key] = value
    return values


def _coerce(key: str, raw: str):
    try:
        if key in ("seed", "trials", "grid_points", "n_tx"):
            return int(raw)
        if key in ("sigma2_db", "grid_min", "grid_max", "theta",
                   "beta", "gamma"):
            return float(raw)
        if key == "n_rx":
            return _parse_n_rx(raw)
        if key == "constellation":
            return raw
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from exc
    raise ConfigError(f"unknown key {key!r}")


def parse_config(subcommand: str, file_values: dict[str, str] | None,
                 overrides: dict) -> SweepSpec:
    """Resolve defaults < config file < overrides into a SweepSpec.

    sweep-beta sweeps beta over the grid at fixed gamma; sweep-gamma the
    converse; single-point runs the one (beta, gamma) cell per n_rx.
    """
    settings = dict(_DEFAULTS)
    for key, raw in (file_values or {}).items():
        settings[key] = _coerce(key, raw)
    for key, value in overrides.items():
        if value is not None:
            settings[key] = value

    name = settings["constellation"]
    if name not in CONSTELLATIONS:
        raise ConfigError(
            f"unknown constellation {name!r}; choices: "
            + ", ".join(sorted(CONSTELLATIONS))
        )
    sigma2 = 10.0 ** (settings["sigma2_db"] / 10.0)

    try:
        base = SystemConfig(
            n_tx=settings["n_tx"],
            n_rx=max(settings["n_rx"]),
            beta=settings["beta"],
            gamma=settings["gamma"],
            sigma2=sigma2,
            theta=settings["theta"],
            constellation=CONSTELLATIONS[name](),
            seed=settings["seed"],
        )
        if subcommand == "single-point":
            sweep_variable = "beta"
            grid = (settings["beta"],)
        else:
            sweep_variable = "beta" if subcommand == "sweep-beta" else "gamma"
            if settings["grid_points"] < 1:
                raise ValueError("grid_points must be >= 1")
            if settings["grid_points"] == 1:
                grid = (settings["grid_min"],)
            else:
                grid = default_grid(
                    settings["grid_min"], settings["grid_max"],
                    settings["grid_points"],
                )
        return SweepSpec(
            base=base,
            sweep_variable=sweep_variable,
            grid=grid,
            n_rx_list=settings["n_rx"],
            trials_per_point=settings["trials"],
            master_seed=settings["seed"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def provenance_line(spec: SweepSpec, fmt: str) -> str:
    """One reproducibility comment embedding every run parameter."""
    base = spec.base
    fixed = "gamma" if spec.sweep_variable == "beta" else "beta"
    fixed_value = getattr(base, fixed)
    parts = [
        f"sweep_var={spec.sweep_variable}",
        f"fixed_{fixed}={_fmt(fixed_value)}",
        f"seed={spec.master_seed}",
        f"trials={spec.trials_per_point}",
        "n_rx=" + ",".join(str(n) for n in spec.n_rx_list),
        "grid=" + ",".join(_fmt(v) for v in spec.grid),
        f"n_tx={base.n_tx}",
        f"sigma2={_fmt(base.sigma2)}",
        f"theta={_fmt(base.theta)}",
        f"constellation={base.constellation.name}",
        f"format={fmt}",
    ]
    return "# isacsim " + " ".join(parts)


def _row_values(row) -> dict:
    m = row.metrics
    return {
        "sweep_var": row.sweep_variable,
        "sweep_value": float(row.sweep_value),
        "n_rx": row.n_rx,
        "trials": row.trials,
        "seed": row.seed,
        "ber_theory": m.ber_theoretical,
        "ber_sim": m.ber_empirical,
        "ber_stderr": m.ber_stderr,
        "mse_sic": m.mse_sic,
        "mse_sic_stderr": m.mse_stderr_sic,
        "mse_mmse": m.mse_mmse,
        "mse_mmse_stderr": m.mse_stderr_mmse,
    }


def write_results(result: SweepResult, fmt: str = "csv",
                  path: str | Path = "results.csv") -> None:
    """Serialize sweep rows deterministically (csv or json-lines)."""
    if fmt not in ("csv", "json-lines"):
        raise ConfigError(f"unknown output format {fmt!r}")
    path = Path(path)
    lines = [provenance_line(result.spec, fmt)]
    if fmt == "csv":
        lines.append(CSV_HEADER)
        for row in result.rows:
            values = _row_values(row)
            cells = []
            for col in CSV_COLUMNS:
                v = values[col]
                cells.append(str(v) if col in _INT_COLUMNS or col == "sweep_var"
                             else _fmt(v))
            lines.append(",".join(cells))
    else:
        for row in result.rows:
            values = _row_values(row)
            rounded = {
                k: (v if isinstance(v, (str, int)) else float(_fmt(v)))
                for k, v in values.items()
            }
            lines.append(json.dumps(rounded))
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise RuntimeError(f"cannot write results to {path}: {exc}") from exc


def read_results(path: str | Path) -> list[dict]:
    """Parse a CSV result file back into typed row dicts."""
    path = Path(path)
    rows = []
    header = None
    for raw in path.read_text().splitlines():
        if not raw or raw.startswith("#"):
            continue
        if header is None:
            header = raw.split(",")
            if header != CSV_COLUMNS:
                raise ValueError(f"unexpected header in {path}: {raw!r}")
            continue
        cells = raw.split(",")
        row = {}
        for col, cell in zip(header, cells):
            if col == "sweep_var":
                row[col] = cell
            elif col in _INT_COLUMNS:
                row[col] = int(cell)
            else:
                row[col] = float(cell)
        rows.append(row)
    if header is None:
        raise ValueError(f"{path} contains no CSV header")
    return rows


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); config errors are 1
        raise ConfigError(message)


def _add_common_options(sub: argparse.ArgumentParser, default_output: str):
    sub.add_argument("--config", help="flat key = value config file")
    sub.add_argument("--output", default=default_output,
                     help=f"output path (default {default_output})")
    sub.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    sub.add_argument("--plot", action="store_true",
                     help="render BER/MSE figures next to the output file")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--trials", type=int)
    sub.add_argument("--n-rx", dest="n_rx", type=_parse_n_rx,
                     help="comma-separated receive antenna counts")
    sub.add_argument("--sigma2-db", dest="sigma2_db", type=float)
    sub.add_argument("--grid-min", dest="grid_min", type=float)
    sub.add_argument("--grid-max", dest="grid_max", type=float)
    sub.add_argument("--grid-points", dest="grid_points", type=int)
    sub.add_argument("--n-tx", dest="n_tx", type=int)
    sub.add_argument("--theta", type=float)
    sub.add_argument("--beta", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--constellation", choices=sorted(CONSTELLATIONS))
    sub.add_argument("--quiet", action="store_true",
                     help="suppress per-row progress on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isacsim",
                     description="Joint sensing/communication receiver sweeps")
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, default_out in (
        ("sweep-beta", "sweep_beta.csv"),
        ("sweep-gamma", "sweep_gamma.csv"),
        ("single-point", "single_point.csv"),
    ):
        sub = subs.add_parser(name)
        _add_common_options(sub, default_out)
    val = subs.add_parser("validate",
                          help="run the numerical self-checks and exit")
    val.add_argument("--seed", type=int, default=0)
    plot = subs.add_parser("plot", help="render figures from a result CSV")
    plot.add_argument("csv_path")
    plot.add_argument("--output-dir", default=None)
    return parser


_OVERRIDE_KEYS = ("seed", "trials", "n_rx", "sigma2_db", "grid_min",
                  "grid_max", "grid_points", "n_tx", "theta", "beta",
                  "gamma", "constellation")


def _run_sweep_command(args) -> int:
    file_values = load_config_file(args.config) if args.config else None
    overrides = {key: getattr(args, key) for key in _OVERRIDE_KEYS}
    spec = parse_config(args.subcommand, file_values, overrides)

    progress = None
    if not args.quiet:
        def progress(row):
            m = row.metrics
            print(
                f"{row.sweep_variable}={row.sweep_value:.3g} n_rx={row.n_rx} "
                f"ber={m.ber_empirical:.3e} mse_sic={m.mse_sic:.3e} "
                f"mse_mmse={m.mse_mmse:.3e}",
                file=sys.stderr,
            )

    result = run_sweep(spec, progress=progress)
    write_results(result, args.format, args.output)
    print(f"wrote {len(result.rows)} rows to {args.output}", file=sys.stderr)
    if args.plot:
        if args.format != "csv":
            raise ConfigError("--plot requires --format csv")
        from . import plots
        written = plots.render_sweep_file(args.output)
        for p in written:
            print(f"wrote {p}", file=sys.stderr)
    return 0


def _run_plot_command(args) -> int:
    from . import plots
    written = plots.render_sweep_file(args.csv_path, args.output_dir)
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand == "validate":
            return validation.run_validation(seed=args.seed)
        if args.subcommand == "plot":
            return _run_plot_command(args)
        return _run_sweep_command(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
