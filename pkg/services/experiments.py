"""
Experiment Runner
Drives the estimators over seeded replicates and writes the result tables
(CSV with a config header line) and figures (SVG) into cfg.output_dir.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
import pandas as pd
import structlog

from config import ExperimentConfig
from errors import ExperimentAborted, InvalidInputError, NonConvergence, NumericalError
from models import PenalizedModel, write_frame
from services import plots
from services.amp import amp_run, check_fixed_point, trace_frame
from services.datagen import SyntheticSpec, derive_seed, figure1_spec, generate
from services.diagnostics import (concentration_suite, discrepancy_sweep, linearization_sweep,
                                  summarize_sweep, sweep_frame, theta_trace_gap)
from services.families import FamilyKind, parse_family
from services.pool import run_parallel
from services.risk import REPORT_COLUMNS, calibrate, risk_report
from services.solver import fit

logger = structlog.get_logger(__name__)

# A run is aborted when more than this share of its cells fail
FAILURE_LIMIT = 0.10


@dataclass
class ExperimentOutput:
    name: str
    files: Dict[str, Path] = field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)


def _model(cfg: ExperimentConfig, lam: float) -> PenalizedModel:
    return PenalizedModel(parse_family(cfg.loss_spec), parse_family(cfg.reg_spec), lam)


def _generator(cfg: ExperimentConfig, seed: int) -> SyntheticSpec:
    return figure1_spec(cfg.n, cfg.p, seed, cfg.beta_variance, cfg.noise_sd)


def _seeds(cfg: ExperimentConfig, name: str) -> List[int]:
    return [derive_seed(cfg.seed, name, rep) for rep in range(cfg.reps)]


def _output_dir(cfg: ExperimentConfig) -> Path:
    path = Path(cfg.output_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidInputError(f"cannot create output directory {path}: {e}") from e
    return path


def _check_failures(name: str, failed: int, total: int) -> None:
    if failed:
        logger.warning("cells_failed", experiment=name, failed=failed, total=total)
    if failed > FAILURE_LIMIT * total:
        raise ExperimentAborted(f"{name}: {failed} of {total} cells failed", failures=failed)


# ---- figure 1 -------------------------------------------------------------------

def _figure1_rep(cfg: ExperimentConfig, rep: int) -> List[dict]:
    seed = derive_seed(cfg.seed, 'figure1', rep)
    gen = _generator(cfg, seed)
    data, beta_star, _ = generate(gen)
    base = _model(cfg, cfg.lambda_grid[0])
    rows = []
    for lam in cfg.lambda_grid:
        model = base.with_lambda(lam)
        try:
            report = risk_report(model, data, folds=cfg.folds, seed=seed, beta_star=beta_star,
                                 noise_sd=cfg.noise_sd, gen=gen, n_jobs=1)
            row = {'rep': rep, 'seed': seed, **report.to_row(), 'error': ''}
        except NumericalError as e:
            logger.error("figure1_cell_failed", rep=rep, lam=lam, error=str(e))
            row = {'rep': rep, 'seed': seed, 'lambda': lam, 'error': f"{type(e).__name__}: {e}"}
        rows.append(row)
    return rows


def run_figure1(cfg: ExperimentConfig) -> ExperimentOutput:
    """Oracle, LO, ALO, AMP and K-fold estimates over a lambda grid, averaged over reps"""
    loss, reg = parse_family(cfg.loss_spec), parse_family(cfg.reg_spec)
    if loss.kind is not FamilyKind.SQUARED or reg.kind is not FamilyKind.RIDGE:
        raise InvalidInputError("figure1 needs loss_spec=squared and reg_spec=ridge")
    out_dir = _output_dir(cfg)
    header = cfg.header_line()
    logger.info("figure1_started", reps=cfg.reps, n=cfg.n, p=cfg.p, grid=len(cfg.lambda_grid))

    per_rep = run_parallel(lambda rep: _figure1_rep(cfg, rep), range(cfg.reps), cfg.n_jobs)
    reps = pd.DataFrame([row for rows in per_rep for row in rows])
    estimate_columns = [c for c in REPORT_COLUMNS if c != 'lambda']
    estimate_columns += sorted((c for c in reps.columns
                                if c.startswith('kfold') and c not in estimate_columns),
                               key=lambda c: int(c[5:]))
    reps = reps.reindex(columns=['rep', 'seed', 'lambda'] + estimate_columns + ['error'])
    _check_failures('figure1', int((reps['error'] != '').sum()), len(reps))

    means = (reps[reps['error'] == '']
             .groupby('lambda', sort=True)[estimate_columns].mean()
             .reset_index())
    output = ExperimentOutput('figure1', tables={'reps': reps, 'means': means})
    output.files['reps'] = out_dir / 'fig1_reps.csv'
    output.files['means'] = out_dir / 'fig1_means.csv'
    write_frame(reps, output.files['reps'], header)
    write_frame(means, output.files['means'], header)
    output.files['figure'] = plots.plot_figure1(means, out_dir / 'fig1.svg')
    logger.info("figure1_finished", output_dir=str(out_dir))
    return output


# ---- rate sweep -------------------------------------------------------------------

def run_rates(cfg: ExperimentConfig) -> ExperimentOutput:
    """|LO - ALO| and |LO - AMP| over an n grid at the fixed aspect ratio n/p of cfg"""
    out_dir = _output_dir(cfg)
    model = _model(cfg, cfg.lambda_value)
    rows = discrepancy_sweep(model, _generator(cfg, cfg.seed), cfg.n_grid,
                             _seeds(cfg, 'rates'), n_jobs=cfg.n_jobs)
    _check_failures('rates', sum(row.error is not None for row in rows), len(rows))

    sweep = sweep_frame(rows)
    summary = summarize_sweep(rows)
    output = ExperimentOutput('rates', tables={'sweep': sweep, 'summary': summary})
    output.files['sweep'] = out_dir / 'rates_sweep.csv'
    write_frame(sweep, output.files['sweep'], cfg.header_line())
    output.files['figure'] = plots.plot_rates(summary, out_dir / 'rates.svg')
    return output


# ---- AMP trace --------------------------------------------------------------------

def run_amp_trace(cfg: ExperimentConfig) -> ExperimentOutput:
    """AMP from beta = 0 at the calibrated tau_hat, with the per-iteration trace"""
    out_dir = _output_dir(cfg)
    model = _model(cfg, cfg.lambda_value)
    data, _, _ = generate(_generator(cfg, cfg.seed))
    full = fit(model, data)
    tau_hat, theta_hat = calibrate(full, model, data.aspect_ratio())
    header = cfg.header_line()
    trace_path = out_dir / 'amp_trace.csv'
    try:
        state, trace = amp_run(model, data, tau_hat, max_iter=cfg.amp_max_iter,
                               tol=cfg.amp_tol, damping=cfg.damping)
    except NonConvergence as e:
        # keep what was computed so the divergence can be inspected
        if e.trace:
            write_frame(trace_frame(e.trace), trace_path, header)
        raise

    frame = trace_frame(trace)
    residual = check_fixed_point(state, model, data)
    gap = float(np.max(np.abs(state.beta - full.beta_hat)))
    logger.info("amp_trace_finished", iterations=state.t, tau_hat=tau_hat, theta_hat=theta_hat,
                beta_gap=gap, fixed_point_residual=residual.max())
    summary = pd.DataFrame([{'tau_hat': tau_hat, 'theta_hat': theta_hat, 'iterations': state.t,
                             'beta_gap': gap, 'stationarity': residual.stationarity,
                             'tau_eq': residual.tau_eq, 'theta_eq': residual.theta_eq,
                             'z_eq': residual.z_eq}])
    output = ExperimentOutput('amp_trace', tables={'trace': frame, 'summary': summary})
    output.files['trace'] = trace_path
    write_frame(frame, trace_path, header)
    output.files['figure'] = plots.plot_amp_trace(frame, out_dir / 'amp_trace.svg')
    return output


# ---- diagnostics ------------------------------------------------------------------

def _theta_row(cfg: ExperimentConfig, seed: int) -> dict:
    model = _model(cfg, cfg.lambda_value)
    data, _, _ = generate(_generator(cfg, seed))
    gap = theta_trace_gap(model, data, fit(model, data))
    return {'seed': seed, 'n': data.n, 'p': data.p, **gap._asdict()}


def run_diagnostics(cfg: ExperimentConfig) -> ExperimentOutput:
    """Spectrum and tail checks, the leave-one-out linearization sweep and theta_hat vs trace"""
    out_dir = _output_dir(cfg)
    header = cfg.header_line()
    seeds = _seeds(cfg, 'diagnostics')
    model = _model(cfg, cfg.lambda_value)

    spectrum = concentration_suite(cfg.n, cfg.delta, seeds, lam=cfg.lambda_value, n_jobs=cfg.n_jobs)
    linearization = linearization_sweep(model, _generator(cfg, cfg.seed), cfg.n_grid, seeds,
                                        n_jobs=cfg.n_jobs)
    theta = pd.DataFrame(run_parallel(lambda seed: _theta_row(cfg, seed), seeds, cfg.n_jobs))
    logger.info("diagnostics_finished", min_ok=int(spectrum['min_ok'].sum()),
                max_ok=int(spectrum['max_ok'].sum()), tail_ok=int(spectrum['tail_ok'].sum()),
                seeds=len(seeds))

    output = ExperimentOutput('diagnostics', tables={
        'spectrum': spectrum, 'linearization': linearization, 'theta': theta})
    for key, frame in output.tables.items():
        path = out_dir / f'diagnostics_{key}.csv'
        write_frame(frame, path, header)
        output.files[key] = path
    return output


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig], ExperimentOutput]] = {
    'figure1': run_figure1,
    'rates': run_rates,
    'amp_trace': run_amp_trace,
    'diagnostics': run_diagnostics,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentOutput:
    return EXPERIMENTS[cfg.experiment](cfg)
