"""
Bayes-risk lower bounds toolkit - CLI Entry Point

Usage:
    python -m src.main risk --config configs/gg.json
    python -m src.main sweep --config configs/gg.json --out output/sweep.csv
"""
import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional

import numpy as np

from .bounds import bayes_risk_exact, bound_asymptotic
from .config import RunConfig, load_run_config, require_for_command
from .errors import AllDegenerate, ConfigError, InvalidSpec, RiskBoundError
from .excel_writer import create_compare_workbook, create_sweep_workbook
from .integrate import mc_expect_joint, posterior_mean
from .matrix_bounds import make_linear_gaussian_vector_model, mat_bound, mse_matrix_exact, optimal_psi, stacked_ratio_psi
from .model import make_model
from .optimize import evaluate_bound, maximize, sweep
from .report import (
    COMPARE_HEADER,
    SWEEP_HEADER,
    VERIFY_HEADER,
    format_bound,
    format_number,
    format_table,
    sweep_rows,
    write_bound_csv,
    write_matrix_csv,
    write_sweep_csv,
    write_table_csv,
)
from .verify import verify_scalar, verify_vector

logger = logging.getLogger(__name__)

COMMANDS = ('risk', 'bound', 'sweep', 'optimize', 'verify', 'compare')
COMPARE_FLAVORS = (
    ('ww', 'ww'),
    ('ww', 'global'),
    ('ww', 'avg_conditional'),
    ('ww', 'avg_theta'),
    ('cond', 'global'),
    ('cond', 'avg_conditional'),
    ('cond', 'avg_theta'),
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskbound",
        description="Bayes-risk lower bounds: exact risk, Cauchy-Schwarz bound families and their verification",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  riskbound risk --config gg.json
  riskbound bound --config gg.json --out output/bound.csv
  riskbound sweep --config gg.json --out output/sweep.csv
  riskbound verify --config bsc.json
        """,
    )
    parser.add_argument("command", choices=COMMANDS, help="Subcommand to run")
    parser.add_argument("--config", required=True, help="Path to the run config JSON file")
    parser.add_argument("--out", default=None, help="Output CSV path (overrides output.csv_path)")
    return parser


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

def build_model(config: RunConfig):
    spec = config.model
    if not config.is_vector:
        return make_model(spec, config.integration)
    try:
        return make_linear_gaussian_vector_model(spec.H, spec.prior_cov, spec.noise_cov, spec.target)
    except InvalidSpec as exc:
        first = str(exc).split(' ', 1)[0]
        key = first if first in ('prior_cov', 'noise_cov', 'target') else 'H'
        raise ConfigError(f"model.{key}", str(exc)) from exc


def _vector_psi(config: RunConfig, vmodel):
    bound = config.bound
    if bound.family == 'optimal':
        return optimal_psi()
    p = vmodel.parameter_dim
    return stacked_ratio_psi(bound.family, [bound.h] * p, bound.s, p)


def _format_matrix(matrix, precision: int) -> str:
    return '\n'.join('  '.join(format_number(v, precision) for v in row) for row in np.atleast_2d(matrix))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_risk(config: RunConfig, out: Optional[str]) -> int:
    precision = config.output.precision
    model = build_model(config)
    cfg = config.integration
    if config.is_vector:
        sigma = mse_matrix_exact(model, model.posterior_mean_g, cfg)
        print(_format_matrix(sigma, precision))
        if out:
            write_matrix_csv(sigma, out, precision)
        return EXIT_OK

    result = bayes_risk_exact(model, cfg)
    print(format_number(result.value, precision))
    if cfg.mc_samples > 0:
        estimate, std_error = mc_expect_joint(
            model, lambda y, t: (t - posterior_mean(model, y, cfg, strict=False)) ** 2, cfg.mc_samples, cfg.seed
        )
        print(f"monte carlo: {format_number(estimate, precision)} +/- {format_number(std_error, 3)}")
    if out:
        write_bound_csv([result], out, precision)
    return EXIT_OK


def cmd_bound(config: RunConfig, out: Optional[str]) -> int:
    precision = config.output.precision
    bound = config.bound
    model = build_model(config)
    cfg = config.integration

    if config.is_vector:
        y = None if bound.y is None else np.asarray(bound.y, dtype=float)
        result = mat_bound(model, _vector_psi(config, model), bound.flavor, cfg, y=y)
        print(f"flavor: {result.flavor}")
        print(f"status: {result.status}")
        if result.ok:
            print(_format_matrix(result.bound_matrix, precision))
            if out:
                write_matrix_csv(result.bound_matrix, out, precision)
        return EXIT_OK

    if bound.flavor == 'exact_risk':
        result = bayes_risk_exact(model, cfg)
    elif bound.flavor == 'asymptotic':
        result = bound_asymptotic(model, cfg)
    else:
        result = evaluate_bound(model, bound.family, bound.flavor, bound.h, bound.s, cfg, y=bound.y)
    print(format_bound(result, precision))
    if out:
        write_bound_csv([result], out, precision)
    return EXIT_OK


def cmd_sweep(config: RunConfig, out: Optional[str]) -> int:
    precision = config.output.precision
    model = build_model(config)
    table = sweep(model, config.bound.family, config.bound.flavor, config.sweep.h_grid, config.sweep.s_grid,
                  config.integration, y=config.bound.y)
    print(format_table(SWEEP_HEADER, sweep_rows(table, precision)))
    path = out or config.output.csv_path
    if path:
        write_sweep_csv(table, path, precision)
    if config.output.xlsx_path:
        create_sweep_workbook(table, model.name, config.output.xlsx_path)
    return EXIT_OK


def cmd_optimize(config: RunConfig, out: Optional[str]) -> int:
    precision = config.output.precision
    model = build_model(config)
    bound = config.bound
    optimum = maximize(model, bound.family, bound.flavor, config.optimize.h_range, config.optimize.s_range,
                       config.integration, y=bound.y)
    result = optimum.result
    row = [
        format_number(optimum.h_star, precision),
        format_number(optimum.s_star, precision),
        bound.flavor,
        format_number(optimum.value, precision),
        format_number(result.numerator, precision),
        format_number(result.denominator, precision),
        result.status,
    ]
    print(format_table(SWEEP_HEADER, [row]))
    print(f"evaluations: {optimum.evaluations}, converged: {optimum.converged}")
    path = out or config.output.csv_path
    if path:
        write_table_csv(SWEEP_HEADER, [row], path)
    return EXIT_OK


def cmd_verify(config: RunConfig, out: Optional[str]) -> int:
    model = build_model(config)
    if config.is_vector:
        checks = verify_vector(model, config.integration)
    else:
        checks = verify_scalar(model, config.integration)
    for check in checks:
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name}  {check.detail}")
    path = out or config.output.csv_path
    if path:
        write_table_csv(VERIFY_HEADER, [[c.name, 'PASS' if c.passed else 'FAIL', c.detail] for c in checks], path)
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning("verify failed: %s", ', '.join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def _compare_rows(config: RunConfig, model) -> List[List[str]]:
    precision = config.output.precision
    cfg = config.integration
    risk = bayes_risk_exact(model, cfg).value

    def task(pair):
        family, flavor = pair
        try:
            optimum = maximize(model, family, flavor, config.optimize.h_range, config.optimize.s_range, cfg)
        except AllDegenerate as exc:
            logger.warning("compare %s/%s: %s", family, flavor, exc)
            return [family, flavor, '', '', '', 'all_degenerate', '']
        return [
            family,
            flavor,
            format_number(optimum.h_star, precision),
            format_number(optimum.s_star, precision),
            format_number(optimum.value, precision),
            optimum.result.status,
            format_number(optimum.value / risk, precision),
        ]

    if cfg.workers == 1:
        rows = [task(pair) for pair in COMPARE_FLAVORS]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(task, COMPARE_FLAVORS))

    asymptotic = bound_asymptotic(model, cfg)
    rows.append([
        'fisher', 'asymptotic', '', '',
        format_number(asymptotic.value, precision),
        asymptotic.status,
        format_number(asymptotic.value / risk if asymptotic.ok else None, precision),
    ])
    rows.append(['optimal', 'exact_risk', '', '', format_number(risk, precision), 'ok', format_number(1.0, precision)])
    return rows


def cmd_compare(config: RunConfig, out: Optional[str]) -> int:
    if config.is_vector:
        raise ConfigError('model.kind', "compare supports scalar models only")
    model = build_model(config)
    rows = _compare_rows(config, model)
    print(format_table(COMPARE_HEADER, rows))
    path = out or config.output.csv_path
    if path:
        write_table_csv(COMPARE_HEADER, rows, path)
    if config.output.xlsx_path:
        create_compare_workbook(rows, model.name, config.output.xlsx_path)
    return EXIT_OK


HANDLERS = {
    'risk': cmd_risk,
    'bound': cmd_bound,
    'sweep': cmd_sweep,
    'optimize': cmd_optimize,
    'verify': cmd_verify,
    'compare': cmd_compare,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config)
        require_for_command(config, args.command)
        return HANDLERS[args.command](config, args.out)
    except InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RiskBoundError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    sys.exit(run())


if __name__ == "__main__":
    main()
