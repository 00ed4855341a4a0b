"""Command-line interface: dataset analysis, simulation studies, power curves.

Every command is a thin adapter over the library: numbers in the output
files are exactly the library results (JSON keeps full precision; the
console prints 6 significant digits). Exit codes: 0 on success, 2 for
usage/configuration/data errors, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DataError, EstimationError, RobustIVError
from .intervals import RealIntervalSet
from .inversion import GridSpec
from .model import IVDataset, SubsetSpec
from .power import PowerSpec, ar_power_exact
from .simulation import (
    SimConfig,
    calibrate_gamma,
    coverage_experiment,
    generate_dataset,
    length_experiment,
    monte_carlo_ar_power,
    power_experiment,
)
from .teststats import sargan_statistic, tsls_fit
from .union import AnalysisConfig, robust_ci, robust_ci_pretest, sensitivity_sweep

THREADS_ENV = "ROBUST_IV_THREADS"


def _sig6(x: float) -> str:
    return f"{x:.6g}"


@dataclass(frozen=True)
class CsvSchema:
    """Column-role mapping for CSV ingestion.

    All named columns must exist, be numeric, and contain no missing
    values; violations are reported with the offending column and row.
    """

    outcome: str
    exposure: str
    instruments: tuple[str, ...]
    covariates: tuple[str, ...] = ()

    def all_columns(self) -> list[str]:
        return [self.outcome, self.exposure, *self.instruments, *self.covariates]


def load_csv_dataset(
    path: str | Path, schema: CsvSchema, add_intercept: bool = True
) -> IVDataset:
    """Read a UTF-8, header-row CSV into a validated dataset."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"CSV file not found: {path}")
    if not schema.instruments:
        raise ConfigError("at least one instrument column is required")
    df = pd.read_csv(path)
    missing = [c for c in schema.all_columns() if c not in df.columns]
    if missing:
        raise DataError(
            f"CSV is missing required columns: {', '.join(missing)} "
            f"(available: {', '.join(df.columns)})"
        )
    numeric = {}
    for col in schema.all_columns():
        coerced = pd.to_numeric(df[col], errors="coerce")
        bad = coerced.isna()
        if bad.any():
            row = int(bad.idxmax())
            raise DataError(
                f"column '{col}' has a missing or non-numeric value at data "
                f"row {row + 1} (file line {row + 2})"
            )
        numeric[col] = coerced.to_numpy(dtype=float)
    x = (
        np.column_stack([numeric[c] for c in schema.covariates])
        if schema.covariates
        else None
    )
    return IVDataset.from_arrays(
        y=numeric[schema.outcome],
        d=numeric[schema.exposure],
        z=np.column_stack([numeric[c] for c in schema.instruments]),
        x=x,
        add_intercept=add_intercept,
        instrument_names=schema.instruments,
    )


def _resolve_threads(args) -> int | None:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return None


def _ensure_outdir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid_from_args(args) -> GridSpec | None:
    given = [args.grid_lo is not None, args.grid_hi is not None, args.grid_step is not None]
    if not any(given):
        return None
    if not all(given):
        raise ConfigError("--grid-lo, --grid-hi, and --grid-step must be given together")
    return GridSpec(lo=args.grid_lo, hi=args.grid_hi, step=args.grid_step)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def cmd_analyze(args) -> int:
    schema = CsvSchema(
        outcome=args.outcome,
        exposure=args.exposure,
        instruments=tuple(_split_list(args.instruments)),
        covariates=tuple(_split_list(args.covariates)) if args.covariates else (),
    )
    data = load_csv_dataset(args.csv, schema, add_intercept=not args.no_intercept)
    u_values = [int(u) for u in _split_list(args.u)]
    if not u_values:
        raise ConfigError("--u must list at least one invalidity bound")
    tests = _split_list(args.test)
    for t in tests:
        if t not in ("ar", "tsls", "clr"):
            raise ConfigError(f"unknown test {t!r}; choose from ar, tsls, clr")
    threads = _resolve_threads(args)
    out_dir = _ensure_outdir(args)

    full = SubsetSpec(indices=(), n_candidates=data.n_instruments)
    naive_fit = tsls_fit(data, full)
    diag = {
        "tsls_estimate": naive_fit.beta_hat,
        "first_stage_f": naive_fit.first_stage_f,
        "sargan_p_value": None,
    }
    if data.n_instruments >= 2:
        diag["sargan_p_value"] = sargan_statistic(data, full, fit=naive_fit).p_value

    variants = [(t, False) for t in tests]
    if args.pretest:
        variants += [(t, True) for t in tests]
    _ = threads  # accepted for interface consistency; analysis runs inline

    results = []
    for test, pretest in variants:
        config = AnalysisConfig(
            u=u_values[0],
            alpha=args.alpha,
            test=test,
            pretest=pretest,
            alpha1=args.alpha1 if pretest else None,
            alpha2=args.alpha2 if pretest else None,
            grid=_grid_from_args(args),
            mc_draws=args.mc_draws,
            seed=args.seed if args.seed is not None else 0,
        )
        sweep = sensitivity_sweep(data, config, u_values)
        label = f"sargan+{test}" if pretest else test
        for u, report, has0 in zip(
            sweep.u_values, sweep.reports, sweep.contains_null
        ):
            results.append(
                {
                    "test": label,
                    "u": u,
                    "interval_set": report.interval_set,
                    "length": report.interval_set.total_length,
                    "contains_zero": has0,
                }
            )

    print(f"robust confidence intervals  (alpha = {_sig6(args.alpha)})")
    print(
        f"n = {data.n}, instruments = {data.n_instruments}, "
        f"first-stage F = {_sig6(diag['first_stage_f'])}, "
        + (
            f"Sargan p = {_sig6(diag['sargan_p_value'])}"
            if diag["sargan_p_value"] is not None
            else "Sargan p = n/a (just identified)"
        )
    )
    header = ["test"] + [f"U={u}" + (" (naive)" if u == 1 else "") for u in u_values]
    print("  ".join(f"{h:>24}" for h in header))
    for test, pre in variants:
        label = f"sargan+{test}" if pre else test
        cells = [r for r in results if r["test"] == label]
        row = [label] + [
            str(next(c["interval_set"] for c in cells if c["u"] == u))
            for u in u_values
        ]
        print("  ".join(f"{c:>24}" for c in row))

    csv_path = out_dir / "analyze.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("test,u,interval_set,length,contains_zero\n")
        for r in results:
            interval_json = json.dumps(r["interval_set"].to_json_obj())
            fh.write(
                f"{r['test']},{r['u']},\"{interval_json}\","
                f"{r['length']!r},{str(r['contains_zero']).lower()}\n"
            )
    json_path = out_dir / "analyze.json"
    payload = {
        "alpha": args.alpha,
        "u_values": u_values,
        "schema": asdict(schema),
        "diagnostics": diag,
        "results": [
            {
                "test": r["test"],
                "u": r["u"],
                "interval_set": r["interval_set"].to_json_obj(),
                "length": r["length"],
                "contains_zero": r["contains_zero"],
            }
            for r in results
        ],
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path} and {json_path}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_SIMCONFIG_KEYS = {
    "n",
    "n_instruments",
    "inst_corr",
    "n_invalid",
    "pi_range",
    "beta_star",
    "sigma1",
    "sigma2",
    "rho",
    "concentration",
    "u",
    "reps",
    "seed",
    "alpha",
    "alpha1",
    "alpha2",
    "clr_draws",
}
_EXPERIMENT_KEYS = _SIMCONFIG_KEYS | {
    "name",
    "experiment",
    "methods",
    "s_values",
    "beta0_grid",
    "clr_reps",
}


def _bundled_config_path(name: str):
    candidate = resources.files("robustiv").joinpath("configs", f"{name}.json")
    return candidate if candidate.is_file() else None


def load_experiment_config(path_or_name: str) -> dict:
    """Parse a simulate config, accepting bundled names like ``table1_strong_desk``."""
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = _bundled_config_path(path_or_name)
        if bundled is None:
            raise ConfigError(
                f"config {path_or_name!r} is neither a file nor a bundled config"
            )
        text = bundled.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object of key-value pairs")
    unknown = sorted(set(raw) - _EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    if "experiment" not in raw:
        raise ConfigError("config must set 'experiment' to coverage, length, or power")
    if raw["experiment"] not in ("coverage", "length", "power"):
        raise ConfigError(
            f"experiment must be coverage, length, or power, got {raw['experiment']!r}"
        )
    if "methods" not in raw or not raw["methods"]:
        raise ConfigError("config must list at least one method, e.g. 'union-ar'")
    return raw


def _sim_config_from_raw(raw: dict, seed_override: int | None) -> SimConfig:
    kwargs = {k: raw[k] for k in _SIMCONFIG_KEYS if k in raw}
    if "pi_range" in kwargs:
        kwargs["pi_range"] = tuple(kwargs["pi_range"])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return SimConfig(**kwargs)


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(float(v))  # plain-float repr, shortest round-trip form
    return str(v)


def _write_wide_table(
    path: Path, cells, value_attr: str, s_values: list[int]
) -> None:
    methods = []
    for c in cells:
        if c.method not in methods:
            methods.append(c.method)
    lookup = {(c.method, c.n_invalid): getattr(c, value_attr) for c in cells}
    header = ["method"] + [f"s={s}" for s in s_values]
    rows = []
    for m in methods:
        rows.append([m] + [lookup.get((m, s), math.nan) for s in s_values])
    _write_csv(path, header, rows)


def cmd_simulate(args) -> int:
    raw = load_experiment_config(args.config)
    config = _sim_config_from_raw(raw, args.seed)
    threads = _resolve_threads(args)
    out_dir = _ensure_outdir(args)
    experiment = raw["experiment"]
    methods = list(raw["methods"])
    clr_reps = raw.get("clr_reps")
    outputs = []

    if experiment == "coverage":
        s_values = [int(s) for s in raw.get("s_values", [config.n_invalid])]
        cells = coverage_experiment(
            config, methods, s_values, threads=threads, clr_reps=clr_reps
        )
        long_path = out_dir / "coverage.csv"
        _write_csv(
            long_path,
            ["method", "s", "coverage", "mc_se", "reps"],
            [[c.method, c.n_invalid, c.coverage, c.mc_se, c.reps] for c in cells],
        )
        wide_path = out_dir / "coverage_table.csv"
        _write_wide_table(wide_path, cells, "coverage", s_values)
        outputs += [str(long_path), str(wide_path)]
    elif experiment == "length":
        s_values = [int(s) for s in raw.get("s_values", [config.n_invalid])]
        cells = length_experiment(
            config, methods, s_values, threads=threads, clr_reps=clr_reps
        )
        long_path = out_dir / "lengths.csv"
        _write_csv(
            long_path,
            ["method", "s", "median_length", "finite_fraction", "reps"],
            [
                [c.method, c.n_invalid, c.median_length, c.finite_fraction, c.reps]
                for c in cells
            ],
        )
        wide_path = out_dir / "lengths_table.csv"
        _write_wide_table(wide_path, cells, "median_length", s_values)
        outputs += [str(long_path), str(wide_path)]
    else:
        grid_spec = raw.get("beta0_grid")
        if not grid_spec:
            raise ConfigError("power experiments need a 'beta0_grid' entry")
        grid = GridSpec(
            lo=float(grid_spec["lo"]),
            hi=float(grid_spec["hi"]),
            step=float(grid_spec["step"]),
        )
        cells = power_experiment(
            config, grid.values(), methods, threads=threads, clr_reps=clr_reps
        )
        path = out_dir / "power.csv"
        _write_csv(
            path,
            ["method", "beta0", "rejection_rate", "mc_se", "reps"],
            [[c.method, c.beta0, c.rejection_rate, c.mc_se, c.reps] for c in cells],
        )
        outputs.append(str(path))

    summary = {
        "experiment": experiment,
        "methods": methods,
        "config": {**asdict(config), "pi_range": list(config.pi_range)},
        "seed": config.seed,
        "outputs": sorted(os.path.basename(p) for p in outputs),
    }
    if experiment in ("coverage", "length"):
        summary["s_values"] = s_values
    summary_path = out_dir / "summary.json"
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(str(summary_path))
    for p in outputs:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------

_POWER_KEYS = _SIMCONFIG_KEYS | {"name", "invalid_set", "pi"}


def cmd_power(args) -> int:
    path = Path(args.config)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        bundled = _bundled_config_path(args.config)
        if bundled is None:
            raise ConfigError(
                f"config {args.config!r} is neither a file nor a bundled config"
            )
        text = bundled.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    unknown = sorted(set(raw) - _POWER_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    config = _sim_config_from_raw(raw, args.seed)
    out_dir = _ensure_outdir(args)

    L = config.n_instruments
    invalid = raw.get("invalid_set", list(range(config.u - 1)))
    subset = SubsetSpec(indices=tuple(int(i) for i in invalid), n_candidates=L)
    if "pi" in raw:
        pi = np.asarray(raw["pi"], dtype=float)
        if pi.shape[0] != L:
            raise ConfigError(f"pi must have length {L}, got {pi.shape[0]}")
    else:
        pi = np.zeros(L)
        mid = 0.5 * (config.pi_range[0] + config.pi_range[1])
        pi[: config.n_invalid] = mid
    gamma = calibrate_gamma(config)
    rng = np.random.default_rng((config.seed, 2))
    design = rng.standard_normal((config.n, L)) @ np.linalg.cholesky(
        (1 - config.inst_corr) * np.eye(L) + config.inst_corr * np.ones((L, L))
    ).T

    lo = args.beta0_lo if args.beta0_lo is not None else config.beta_star - 1.0
    hi = args.beta0_hi if args.beta0_hi is not None else config.beta_star + 1.0
    step = args.beta0_step if args.beta0_step is not None else 0.05
    grid = GridSpec(lo=lo, hi=hi, step=step)

    rows = []
    for b0 in grid.values():
        spec = PowerSpec(
            beta_star=config.beta_star,
            beta0=float(b0),
            pi=pi,
            gamma=gamma,
            subset=subset,
            design=design,
            alpha=config.alpha,
            sigma1=config.sigma1,
            sigma2=config.sigma2,
            rho=config.rho,
        )
        row = [float(b0), ar_power_exact(spec)]
        if args.mc:
            row.append(
                monte_carlo_ar_power(spec, reps=args.mc, seed=(config.seed, 3))
            )
        rows.append(row)

    header = ["beta0", "power_exact"] + (["power_mc"] if args.mc else [])
    path_out = out_dir / "power_curve.csv"
    _write_csv(path_out, header, rows)
    print(f"wrote {path_out}")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustiv",
        description=(
            "Confidence intervals for an instrumental-variable causal effect "
            "that stay valid when some candidate instruments are invalid."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--alpha", type=float, default=0.05, help="miscoverage level")
        p.add_argument("--alpha1", type=float, default=None, help="pretest level")
        p.add_argument("--alpha2", type=float, default=None, help="post-pretest level")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help=f"worker cap (falls back to ${THREADS_ENV})",
        )
        p.add_argument("--out-dir", default=".", help="directory for output files")

    p_an = sub.add_parser("analyze", help="analyze a CSV dataset with a U-sweep")
    p_an.add_argument("csv", help="path to the dataset CSV (header row, UTF-8)")
    p_an.add_argument("--outcome", required=True, help="outcome column name")
    p_an.add_argument("--exposure", required=True, help="exposure column name")
    p_an.add_argument(
        "--instruments", required=True, help="comma-separated instrument columns"
    )
    p_an.add_argument(
        "--covariates", default="", help="comma-separated exogenous covariate columns"
    )
    p_an.add_argument(
        "--u", default="1", help="comma-separated invalidity bounds, e.g. 1,2,3"
    )
    p_an.add_argument(
        "--test", default="ar", help="tests to run: ar, tsls, clr (comma-separated)"
    )
    p_an.add_argument(
        "--pretest", action="store_true", help="add Sargan-screened variants"
    )
    p_an.add_argument(
        "--no-intercept",
        action="store_true",
        help="do not add an intercept to the exogenous covariates",
    )
    p_an.add_argument("--grid-lo", type=float, default=None, help="CLR grid lower bound")
    p_an.add_argument("--grid-hi", type=float, default=None, help="CLR grid upper bound")
    p_an.add_argument("--grid-step", type=float, default=None, help="CLR grid step")
    p_an.add_argument(
        "--mc-draws", type=int, default=10_000, help="CLR critical-value draws"
    )
    add_common(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="run a simulation experiment from a config")
    p_sim.add_argument(
        "config", help="JSON config path or a bundled name such as table1_strong_desk"
    )
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_pow = sub.add_parser("power", help="emit an exact power curve as CSV")
    p_pow.add_argument("config", help="JSON config path or bundled name")
    p_pow.add_argument("--beta0-lo", type=float, default=None)
    p_pow.add_argument("--beta0-hi", type=float, default=None)
    p_pow.add_argument("--beta0-step", type=float, default=None)
    p_pow.add_argument(
        "--mc",
        type=int,
        default=0,
        help="also simulate rejection rates with this many replicates",
    )
    add_common(p_pow)
    p_pow.set_defaults(func=cmd_power)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RobustIVError as exc:  # pragma: no cover - future error classes
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - internal failures
        traceback.print_exc()
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
