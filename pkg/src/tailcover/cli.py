"""Command-line front end: reproducible experiments emitting CSV/JSON tables.

Commands: ``simulate``, ``calibrate``, ``curve``, ``compare``, ``ingest``.
Every command is a pure function of (config, input files, seed); outputs
carry a ``# config=<hash> seed=<seed>`` header line so reruns are
byte-identical and traceable. Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import calibrate as cal
from . import compare as cmp
from . import ingest as ing
from .contract import (
    PayoffFamily,
    PayoffKind,
    UpperStat,
    empirical_premium,
    payout_trace_rows,
    threshold_quantile,
)
from .dists import (
    CovariateSample,
    LossSample,
    ModelKind,
    TailLinkModel,
    fit_mle,
)
from .errors import (
    DataError,
    DomainError,
    FitError,
    InvalidConfigError,
    NoSolutionError,
    OptimizationError,
    TailcoverError,
)
from .objective import MetricConfig, approx_curve, empirical_curve

logger = logging.getLogger(__name__)

ENV_PREFIX = "TAILCOVER_"

# Shape-link intercept/slope used for the simulated dataset; fixed by the
# boundary conditions gamma(0) = 0.7 and gamma(1) = 0.2.
DEFAULT_LINK_A = 0.35667494393873245   # -log(0.7)
DEFAULT_LINK_B = 1.2527629684953681    # log(0.7 / 0.2)


@dataclass
class ExperimentConfig:
    """Flat, human-editable experiment configuration.

    Defaults reproduce the calibrated baseline: exponential metric with
    mu = 1.5, rational price aversion with kappa = 1.415 and beta = 1.65,
    premium loading tau = 10%, threshold at the 85th loss percentile, and a
    traditional loading of 40% for the equal-price comparison.
    """

    dataset: str = "sim"              # "sim" or "tornado"
    input_path: str = ""              # SPC-style CSV for dataset = "tornado"
    out_dir: str = "out"

    l_kind: str = "exp_utility"
    mu: float = 1.5
    f_kind: str = "rational"
    kappa: float = 1.415
    beta: float = 1.65
    tau: float = 0.10

    s_quantile: float = 0.85
    tau_trad: float = 0.40
    tau_index: List[float] = field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])
    compare_quantiles: List[float] = field(default_factory=lambda: [0.80, 0.85, 0.90, 0.95])

    master_seed: int = 20240
    replications: int = 20

    m: int = 5000
    n_start: int = 500
    increment: int = 500
    theta_grid_points: int = 256

    link_a: float = DEFAULT_LINK_A
    link_b: float = DEFAULT_LINK_B
    year_min: int = 2016
    year_max: int = 2023
    mle_threshold: float = -1.0       # < 0 means "fit on the full sample"
    theta_domain: List[List[float]] = field(default_factory=list)  # [] -> per-dataset default
    recalibrate_per_s: bool = False


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    if name not in _FIELDS:
        raise InvalidConfigError(f"unknown config key {name!r}")
    kind = _FIELDS[name].type
    try:
        if kind == "float":
            return float(value)
        if kind == "int":
            if isinstance(value, float) and value != int(value):
                raise ValueError("not an integer")
            return int(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            raise ValueError("not a boolean")
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError("not a string")
            return value
        if kind == "List[float]":
            return [float(v) for v in value]
        if kind == "List[List[float]]":
            return [[float(a), float(b)] for a, b in value]
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(f"config key {name!r}: {exc}") from exc
    raise InvalidConfigError(f"unhandled config key type for {name!r}")


def load_config(path: Optional[str] = None, env: Optional[dict] = None,
                overrides: Optional[dict] = None) -> ExperimentConfig:
    """Resolve the config: defaults < TOML file < environment < CLI flags."""
    config = ExperimentConfig()
    if path:
        try:
            with open(path, "rb") as handle:
                doc = tomllib.load(handle)
        except FileNotFoundError as exc:
            raise InvalidConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfigError(f"config file {path} is not valid TOML: {exc}") from exc
        for key, value in doc.items():
            setattr(config, key, _coerce(key, value))
    env = os.environ if env is None else env
    for key, raw in sorted(env.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if name not in _FIELDS:
            raise InvalidConfigError(f"unknown config key in environment: {key}")
        if _FIELDS[name].type == "str":
            setattr(config, name, raw)
            continue
        try:
            value = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise InvalidConfigError(f"cannot parse {key}={raw!r}") from exc
        setattr(config, name, _coerce(name, value))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(config, key, _coerce(key, value))
    if config.dataset not in ("sim", "tornado"):
        raise InvalidConfigError(f"dataset must be 'sim' or 'tornado', got {config.dataset!r}")
    if not 0.0 < config.s_quantile < 1.0:
        raise InvalidConfigError("s_quantile must lie in (0, 1)")
    return config


def config_hash(config: ExperimentConfig) -> str:
    payload = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def metric_config(config: ExperimentConfig) -> MetricConfig:
    return MetricConfig(
        l_kind=config.l_kind,
        mu=config.mu,
        f_kind=config.f_kind,
        kappa=config.kappa,
        beta=config.beta,
        tau=config.tau,
    )


# ---------------------------------------------------------------------------
# dataset construction


def simulated_model(config: ExperimentConfig) -> TailLinkModel:
    return TailLinkModel(
        ModelKind.PARETO_UNIT, (config.link_a, config.link_b), covariate_dim=1
    )


def simulated_sample(config: ExperimentConfig, rep: int) -> LossSample:
    """Uniform covariate on [0, 1], conditional unit-Pareto loss; one stream
    per (master_seed, rep)."""
    rng = np.random.default_rng(np.random.SeedSequence((config.master_seed, rep)))
    w = rng.uniform(size=(config.m, 1))
    y = simulated_model(config).sample_given(w, rng)
    return LossSample(y, w)


def resolve_theta_domain(config: ExperimentConfig, sample: LossSample, s: float):
    if config.theta_domain:
        return tuple((lo, hi) for lo, hi in config.theta_domain)
    if config.dataset == "sim":
        return ((0.0, 5.0),)
    # Linear 2D link on (lat, lon): scale the box so the variable part can
    # sweep from the floor to well above the clamp across the sample.
    med = np.median(sample.w, axis=0)
    hi1 = 3.0 * s / abs(med[0])
    lo2 = -3.0 * s / abs(med[1])
    return ((0.0, hi1), (lo2, 0.0))


def build_family(config: ExperimentConfig, sample: LossSample, model: TailLinkModel) -> PayoffFamily:
    s = threshold_quantile(sample.y, config.s_quantile)
    domain = resolve_theta_domain(config, sample, s)
    if config.dataset == "sim":
        return PayoffFamily(PayoffKind.EXP_LINK_1D, UpperStat.MEAN_EXCESS, s, model, domain)
    return PayoffFamily(PayoffKind.LINEAR_2D, UpperStat.MEDIAN_EXCESS, s, model, domain)


def load_tornado_sample(config: ExperimentConfig):
    if not config.input_path:
        raise DataError("dataset 'tornado' needs input_path (or --input)")
    report = ing.parse_tornado_csv(config.input_path)
    built = ing.build_sample(report.records, config.year_min, config.year_max)
    return report, built


def reference_model(config: ExperimentConfig, sample: LossSample) -> TailLinkModel:
    """True model for simulations, full-sample fit for real data."""
    if config.dataset == "sim":
        return simulated_model(config)
    threshold = None if config.mle_threshold < 0 else config.mle_threshold
    return fit_mle(sample, ModelKind.GPD, threshold).model


def load_dataset(config: ExperimentConfig, rep: int = 0):
    if config.dataset == "sim":
        sample = simulated_sample(config, rep)
    else:
        _, built = load_tornado_sample(config)
        sample = built.sample
    model = reference_model(config, sample)
    family = build_family(config, sample, model)
    return sample, family


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_table(path: Path, header_comment: str, columns: Sequence[str], rows) -> None:
    lines = [f"# {header_comment}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path: Path, header_comment: str, payload: dict) -> None:
    doc = {"meta": header_comment, **payload}
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _meta(config: ExperimentConfig) -> str:
    return f"config={config_hash(config)} seed={config.master_seed}"


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(config: ExperimentConfig) -> List[Path]:
    out = _out_dir(config)
    sample = simulated_sample(config, rep=0)
    model = simulated_model(config)
    gamma = model.tail_index(sample.w)
    sample_path = out / "sample_sim.csv"
    write_table(
        sample_path,
        _meta(config),
        ["y", "w1"],
        ((sample.y[i], sample.w[i, 0]) for i in range(len(sample))),
    )
    params_path = out / "sim_params.json"
    write_json(
        params_path,
        _meta(config),
        {
            "model": json.loads(model.to_json()),
            "m": len(sample),
            "s_quantile": config.s_quantile,
            "s": threshold_quantile(sample.y, config.s_quantile),
            "gamma_min": float(np.min(gamma)),
            "gamma_max": float(np.max(gamma)),
        },
    )
    return [sample_path, params_path]


def cmd_calibrate(config: ExperimentConfig) -> List[Path]:
    out = _out_dir(config)
    sample, family = load_dataset(config)
    metric = metric_config(config)
    clamp = "family" if config.dataset == "sim" else "fitted"

    one = cal.one_step_calibrate(sample, family, metric)
    two = cal.two_step_calibrate(sample, sample.covariates(), family, metric, clamp=clamp)
    fam_two = family.with_model(two.fitted_model) if clamp == "fitted" else family

    grid = cal.default_theta_grid(family.theta_domain, config.theta_grid_points)
    l_hat = empirical_curve(sample, family, grid, metric)
    l_star = approx_curve(two.fitted_model, sample.covariates(), fam_two, grid, metric, sample)
    premiums = [empirical_premium(sample, family, theta, config.tau) for theta in grid]

    theta_cols = [f"theta_{i + 1}" for i in range(family.dim)]
    curves_path = out / f"curves_{config.dataset}.csv"
    write_table(
        curves_path,
        _meta(config),
        theta_cols + ["l_hat", "l_star_hat", "premium"],
        (
            (*grid[i], l_hat[i], l_star[i], premiums[i])
            for i in range(len(grid))
        ),
    )

    scatter_path = out / f"payout_scatter_{config.dataset}.csv"
    w_cols = [f"w{i + 1}" for i in range(sample.covariate_dim)]
    write_table(
        scatter_path,
        _meta(config),
        ["y", *w_cols, "branch", "x"],
        payout_trace_rows(sample, family, one.theta_hat),
    )

    result_path = out / f"calibration_{config.dataset}.json"
    write_json(
        result_path,
        _meta(config),
        {
            "s": family.s,
            "theta_domain": [list(b) for b in family.theta_domain],
            "one_step": _result_payload(one),
            "two_step": _result_payload(two),
        },
    )
    return [curves_path, scatter_path, result_path]


def _result_payload(result: cal.CalibrationResult) -> dict:
    payload = {
        "method": result.method.value,
        "theta_hat": [float(t) for t in result.theta_hat],
        "objective_at_opt": result.objective_at_opt,
        "premium_at_opt": result.premium_at_opt,
        "flags": list(result.flags),
        "n_evaluations": len(result.optimizer_trace),
    }
    if result.fitted_model is not None:
        payload["fitted_model"] = json.loads(result.fitted_model.to_json())
    return payload


def cmd_curve(config: ExperimentConfig) -> List[Path]:
    out = _out_dir(config)
    metric = metric_config(config)
    per_rep_rows = []
    for rep in range(config.replications):
        if config.dataset == "sim":
            sample = simulated_sample(config, rep)
        else:
            _, built = load_tornado_sample(config)
            order = np.random.default_rng(
                np.random.SeedSequence((config.master_seed, rep))
            ).permutation(len(built.sample))
            sample = LossSample(built.sample.y[order], built.sample.w[order])
        model = reference_model(config, sample)
        family = build_family(config, sample, model)
        grid = cal.default_theta_grid(family.theta_domain, config.theta_grid_points)
        rows = cal.learning_curve(sample, family, metric, config.n_start, config.increment, grid)
        per_rep_rows.append(rows)
        logger.info("learning curve replication %d/%d done", rep + 1, config.replications)

    n_values = [row.n for row in per_rep_rows[0]]
    n_coeffs = max(len(r.fitted_params) for r in per_rep_rows[0])
    coeff_names = ["a_hat", "b_hat", "c_hat"][:n_coeffs] + [
        f"coef{i}_hat" for i in range(3, n_coeffs)
    ]
    table = []
    for i, n in enumerate(n_values):
        rows = [rep_rows[i] for rep_rows in per_rep_rows]
        params = np.full((len(rows), n_coeffs), np.nan)
        for j, row in enumerate(rows):
            if row.fit_ok:
                params[j, : len(row.fitted_params)] = row.fitted_params
        record = [n]
        record.extend(np.nanmedian(params, axis=0))
        record.append(np.median([r.error_one_step for r in rows]))
        record.append(np.nanmedian([r.error_two_step for r in rows]))
        record.append(np.median([r.opt_one for r in rows]))
        record.append(np.nanmedian([r.opt_two for r in rows]))
        table.append(record)

    curve_path = out / f"learning_curve_{config.dataset}.csv"
    write_table(
        curve_path,
        _meta(config),
        ["n", *coeff_names, "error_one", "error_two", "opt_one", "opt_two"],
        table,
    )
    return [curve_path]


def cmd_compare(config: ExperimentConfig) -> List[Path]:
    out = _out_dir(config)
    sample, family = load_dataset(config)
    metric = metric_config(config)
    theta_hat = cal.one_step_calibrate(sample, family, metric).theta_hat
    s_grid = [threshold_quantile(sample.y, q) for q in config.compare_quantiles]
    rows = cmp.comparison_sweep(
        sample,
        family,
        theta_hat,
        s_grid,
        config.tau_index,
        config.tau_trad,
        config=metric,
        recalibrate_per_s=config.recalibrate_per_s,
    )
    path = out / f"comparison_{config.dataset}.csv"
    write_table(
        path,
        _meta(config),
        ["s", "tau_index", "premium_hybrid", "m_of_s", "ratio_hybrid", "ratio_capped", "saturated"],
        (
            (r.s, r.tau_index, r.premium_hybrid, r.m_of_s, r.ratio_hybrid, r.ratio_capped, r.saturated)
            for r in rows
        ),
    )
    return [path]


def cmd_ingest(config: ExperimentConfig) -> List[Path]:
    out = _out_dir(config)
    report, built = load_tornado_sample(config)
    canonical_path = out / "sample_tornado.csv"
    write_table(
        canonical_path,
        _meta(config),
        ["y", "w1", "w2", "year"],
        (
            (built.sample.y[i], built.sample.w[i, 0], built.sample.w[i, 1], built.years[i])
            for i in range(len(built.sample))
        ),
    )
    rejects_path = out / "rejects_tornado.csv"
    write_table(
        rejects_path,
        _meta(config),
        ["raw_row", "reason"],
        (('"' + raw.replace('"', '""') + '"', reason) for raw, reason in report.rejects),
    )
    summary_path = out / "ingest_summary.json"
    write_json(
        summary_path,
        _meta(config),
        {
            "n_parsed": len(report.records),
            "n_rejects": len(report.rejects),
            "n_kept": built.n_kept,
            "n_outside_years": built.n_outside_years,
            "n_nonpositive_loss": built.n_nonpositive_loss,
            "n_zero_area": built.n_zero_area,
            "year_min": config.year_min,
            "year_max": config.year_max,
        },
    )
    return [canonical_path, rejects_path, summary_path]


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "curve": cmd_curve,
    "compare": cmd_compare,
    "ingest": cmd_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailcover",
        description="Calibrate hybrid (traditional + index) covers for heavy-tail losses.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat TOML config file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--dataset", choices=["sim", "tornado"])
    parser.add_argument("--input", help="SPC-style tornado CSV (dataset=tornado)")
    parser.add_argument("--s-quantile", type=float, dest="s_quantile")
    parser.add_argument(
        "--tau-index", dest="tau_index", help="comma-separated index loadings"
    )
    parser.add_argument(
        "--recalibrate-per-s",
        action="store_true",
        default=None,
        help="re-run the one-step calibration at every s of the comparison sweep",
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        overrides = {
            "master_seed": args.seed,
            "out_dir": args.out,
            "dataset": args.dataset,
            "input_path": args.input,
            "s_quantile": args.s_quantile,
            "recalibrate_per_s": args.recalibrate_per_s,
        }
        if args.tau_index is not None:
            overrides["tau_index"] = [float(v) for v in args.tau_index.split(",")]
        config = load_config(args.config, overrides=overrides)
        paths = COMMANDS[args.command](config)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (FitError, OptimizationError, NoSolutionError, DomainError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
