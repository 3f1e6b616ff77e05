"""
Experiment orchestration: single runs, K=S sweeps with an MCMC baseline,
energy histograms, and the files each of them leaves behind.

Every run owns a directory named after its method, sizes and seed:

    instance.json  config.json  samples.txt  report.json
    metrics.csv    histogram.csv  [paths.txt]  [posterior.npz]

A sweep writes one such directory per row plus ``sweep.csv``,
``summary.csv`` and ``sweep.svg`` at its top level.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..exceptions import DecisionFlowError, describe_error
from .decision_flow import (
    EMPIRICAL, DfConfig, Posterior, SampleSet, build_posterior, sample_posterior,
    save_posterior_snapshot, write_samples,
)
from .ising import IsingInstance, save_instance
from .metrics import (
    EnergyHistogram, MetricsReport, delta_metrics, energy_histogram, failed_row,
    moments, sample_total_variation, terminal_total_variation, write_csv, write_histogram_csv,
)
from .prior import write_paths
from .reference import ExactGibbs, McmcConfig, exact_gibbs, mcmc_reference, mcmc_sample

logger = logging.getLogger(__name__)

EXACT_REFERENCE = 'exact'
MCMC_REFERENCE = 'mcmc'

DF_METHOD = 'df'
MCMC_METHOD = 'mcmc'


@dataclass(frozen=True, eq=False)
class Reference:
    """Reference moments, plus the full Gibbs table when it was enumerated."""
    kind: str
    magnetizations: np.ndarray
    correlations: np.ndarray
    gibbs: Optional[ExactGibbs] = None
    elapsed_ms: float = 0.0


def compute_reference(inst: IsingInstance, kind: str, seed: int, gibbs_cap=None, mcmc_samples=None) -> Reference:
    started = time.perf_counter()
    if kind == EXACT_REFERENCE:
        gibbs = exact_gibbs(inst, gibbs_cap)
        reference = Reference(kind, gibbs.magnetizations, gibbs.correlations, gibbs)
    else:
        chain = mcmc_reference(inst, seed, mcmc_samples)
        stats = moments(chain)
        reference = Reference(kind, stats.magnetizations, stats.correlations)
    elapsed = (time.perf_counter() - started) * 1000
    logger.info(f"{kind} reference ready in {elapsed:.1f} ms")
    return Reference(reference.kind, reference.magnetizations, reference.correlations, reference.gibbs, elapsed)


def evaluate(inst: IsingInstance, samples: SampleSet, reference: Reference, *, method, seed, bins=None,
             mode=None, n_paths=None, posterior: Optional[Posterior] = None, timings=None) -> MetricsReport:
    """Score a sample set against the reference."""
    started = time.perf_counter()
    stats = moments(samples)
    deltas = delta_metrics(stats.magnetizations, stats.correlations, reference.magnetizations, reference.correlations)
    tv = sample_tv = None
    if reference.gibbs is not None:
        sample_tv = sample_total_variation(samples, reference.gibbs)
        if posterior is not None:
            tv = terminal_total_variation(posterior.terminal_spins, posterior.terminal_marginal(), reference.gibbs)
    histogram = energy_histogram(inst, samples, bins)
    timings = dict(timings or {})
    timings['reference'] = reference.elapsed_ms
    timings['metrics'] = (time.perf_counter() - started) * 1000
    return MetricsReport(
        method=method,
        mode=mode,
        n_paths=n_paths,
        n_samples=len(samples),
        seed=seed,
        reference=reference.kind,
        delta1=deltas.delta1,
        delta2=deltas.delta2,
        tv=tv,
        sample_tv=sample_tv,
        clamped_magnetizations=deltas.clamped_magnetizations,
        clamped_correlations=deltas.clamped_correlations,
        energy_histogram=histogram,
        timings_ms=timings,
    )


def run_name(method, mode, n_paths, n_samples, seed) -> str:
    if method == MCMC_METHOD:
        return f"run-mcmc-S{n_samples}-seed{seed}"
    if mode == EMPIRICAL:
        return f"run-{mode}-K{n_paths}-S{n_samples}-seed{seed}"
    return f"run-{mode}-S{n_samples}-seed{seed}"


def write_run(run_dir: Path, inst: IsingInstance, config: dict, samples: SampleSet, report: MetricsReport,
              posterior: Optional[Posterior] = None, log_paths=False, snapshot=False) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_instance(inst, run_dir / 'instance.json')
    (run_dir / 'config.json').write_text(json.dumps(config, indent=2, sort_keys=True, default=str) + '\n')
    write_samples(samples, run_dir / 'samples.txt')
    (run_dir / 'report.json').write_text(json.dumps(report.as_document(), indent=2) + '\n')
    write_csv([report.csv_row()], run_dir / 'metrics.csv')
    write_histogram_csv(report.energy_histogram, run_dir / 'histogram.csv')
    if posterior is not None and posterior.paths is not None and log_paths:
        write_paths(posterior.paths, run_dir / 'paths.txt')
    if posterior is not None and posterior.dag is not None and snapshot:
        save_posterior_snapshot(posterior, run_dir / 'posterior.npz')
    return run_dir


@dataclass(eq=False)
class RunOutcome:
    report: MetricsReport
    run_dir: Path
    samples: SampleSet
    posterior: Optional[Posterior] = None


def run_decision_flow(inst: IsingInstance, cfg: DfConfig, reference: Reference, output_dir, *,
                      bins=None, config_echo=None, log_paths=False, snapshot=False) -> RunOutcome:
    """Posterior build, S rollouts, scoring and run directory for one Decision Flow run."""
    posterior = build_posterior(inst, cfg)
    started = time.perf_counter()
    samples = sample_posterior(posterior.policy, cfg.n_samples, cfg.seed, cfg.threads)
    timings = dict(posterior.timings_ms, sample=(time.perf_counter() - started) * 1000)
    n_paths = cfg.n_paths if cfg.mode == EMPIRICAL else None
    report = evaluate(
        inst, samples, reference, method=DF_METHOD, seed=cfg.seed, bins=bins,
        mode=cfg.mode, n_paths=n_paths, posterior=posterior, timings=timings,
    )
    run_dir = Path(output_dir) / run_name(DF_METHOD, cfg.mode, n_paths, cfg.n_samples, cfg.seed)
    write_run(run_dir, inst, config_echo or {}, samples, report, posterior, log_paths, snapshot)
    logger.info(f"Run {run_dir.name}: delta1={report.delta1:.4g} delta2={report.delta2:.4g}")
    return RunOutcome(report, run_dir, samples, posterior)


def run_mcmc(inst: IsingInstance, cfg: McmcConfig, reference: Reference, output_dir, *,
             bins=None, config_echo=None) -> RunOutcome:
    started = time.perf_counter()
    samples = mcmc_sample(inst, cfg)
    timings = {'sample': (time.perf_counter() - started) * 1000}
    report = evaluate(inst, samples, reference, method=MCMC_METHOD, seed=cfg.seed, bins=bins, timings=timings)
    run_dir = Path(output_dir) / run_name(MCMC_METHOD, None, None, len(samples), cfg.seed)
    write_run(run_dir, inst, config_echo or {}, samples, report)
    return RunOutcome(report, run_dir, samples)


@dataclass(eq=False)
class SweepOutcome:
    rows: List[dict]
    summary: List[dict]
    sweep_dir: Path
    failures: int = 0
    outcomes: List[RunOutcome] = field(default_factory=list)

    @property
    def completed(self):
        return self.failures == 0


def _row_error(exc) -> str:
    error = describe_error(exc)
    return f"[{error['error']}] {error['message']}"


def _log_row_failure(exc, what):
    if isinstance(exc, DecisionFlowError):
        logger.warning(f"{what} failed: {exc.message}")
    else:
        logger.error(f"{what} failed unexpectedly: {exc!r}", exc_info=True)


def run_sweep(inst: IsingInstance, sizes, reference: Reference, output_dir, *, mode=EMPIRICAL, seed=0,
              repetitions=1, mcmc: Optional[McmcConfig] = None, degeneracy='literal', min_visits=None,
              threads=None, bins=None, config_echo=None, on_row: Optional[Callable] = None) -> SweepOutcome:
    """
    One Decision Flow run per (K=S, repetition) with seed ``seed + r``, then
    one MCMC baseline row per repetition. A failing row is recorded and the
    sweep moves on.
    """
    sweep_dir = Path(output_dir)
    sweep_dir.mkdir(parents=True, exist_ok=True)
    rows, outcomes = [], []
    failures = 0

    def record(row, outcome=None, error=None):
        rows.append(row)
        if outcome is not None:
            outcomes.append(outcome)
        if on_row is not None:
            on_row(row, outcome, error)

    for size in sizes:
        for r in range(repetitions):
            run_seed = seed + r
            n_paths = size if mode == EMPIRICAL else None
            try:
                cfg = DfConfig(mode=mode, n_paths=n_paths, n_samples=size, seed=run_seed,
                               degeneracy=degeneracy, min_visits=min_visits, threads=threads)
                outcome = run_decision_flow(inst, cfg, reference, sweep_dir, bins=bins, config_echo=config_echo)
                record(outcome.report.csv_row(), outcome)
            except Exception as exc:
                failures += 1
                _log_row_failure(exc, f"Sweep row K=S={size} seed={run_seed}")
                record(failed_row(DF_METHOD, mode, n_paths, size, run_seed, _row_error(exc)), error=exc)

    if mcmc is not None:
        for r in range(repetitions):
            cfg = McmcConfig(total=mcmc.total, burn_in=mcmc.burn_in, stride=mcmc.stride,
                             seed=seed + r, chains=mcmc.chains)
            try:
                outcome = run_mcmc(inst, cfg, reference, sweep_dir, bins=bins, config_echo=config_echo)
                record(outcome.report.csv_row(), outcome)
            except Exception as exc:
                failures += 1
                _log_row_failure(exc, f"MCMC baseline seed={cfg.seed}")
                record(failed_row(MCMC_METHOD, None, None, cfg.recorded_per_chain * cfg.chains, cfg.seed,
                                  _row_error(exc)), error=exc)

    write_csv(rows, sweep_dir / 'sweep.csv')
    summary = summarise(rows)
    write_summary(summary, sweep_dir / 'summary.csv')
    plot_sweep(summary, sweep_dir / 'sweep.svg')
    logger.info(f"Sweep finished: {len(rows)} rows, {failures} failed")
    return SweepOutcome(rows, summary, sweep_dir, failures, outcomes)


SUMMARY_COLUMNS = ['method', 'S', 'runs', 'delta1_median', 'delta2_median', 'tv_median']


def summarise(rows) -> List[dict]:
    """Median metrics per (method, S) over completed rows."""
    groups = {}
    for row in rows:
        if row['status'] != 'completed':
            continue
        groups.setdefault((row['method'], int(row['S'])), []).append(row)
    summary = []
    for (method, size), members in sorted(groups.items()):
        entry = {'method': method, 'S': size, 'runs': len(members)}
        for metric in ('delta1', 'delta2', 'tv'):
            values = [float(m[metric]) for m in members if m[metric] != '']
            entry[f'{metric}_median'] = repr(float(np.median(values))) if values else ''
        summary.append(entry)
    return summary


def write_summary(summary, path) -> Path:
    path = Path(path)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(summary)
    return path


def _figure():
    matplotlib.rcParams['svg.hashsalt'] = 'decisionflow'
    return Figure(figsize=(6, 4))


def plot_sweep(summary, path) -> Path:
    """Median Δ₁/Δ₂ against K=S on log axes, MCMC medians as dashed lines."""
    fig = _figure()
    ax = fig.subplots()
    df_rows = [row for row in summary if row['method'] == DF_METHOD]
    mcmc_rows = [row for row in summary if row['method'] == MCMC_METHOD]
    for metric, colour in (('delta1', 'tab:blue'), ('delta2', 'tab:orange')):
        points = [(row['S'], float(row[f'{metric}_median'])) for row in df_rows if row[f'{metric}_median'] != '']
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker='o', color=colour, label=f"DF {metric}")
        for row in mcmc_rows:
            if row[f'{metric}_median'] != '':
                ax.axhline(float(row[f'{metric}_median']), linestyle='--', color=colour, label=f"MCMC {metric}")
    ax.set_xscale('log')
    if df_rows or mcmc_rows:
        ax.set_yscale('log')
    ax.set_xlabel('K = S')
    ax.set_ylabel('median mismatch')
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format='svg', metadata={'Date': None})
    return path


def histogram_against_gibbs(histogram: EnergyHistogram, gibbs: ExactGibbs) -> np.ndarray:
    """Exact Gibbs energy density on the histogram's bins."""
    inside = (gibbs.energies >= histogram.edges[0]) & (gibbs.energies <= histogram.edges[-1])
    mass, _ = np.histogram(gibbs.energies[inside], bins=histogram.edges, weights=gibbs.probabilities[inside])
    return mass / histogram.widths


def write_histogram_plot(histogram: EnergyHistogram, path, exact_density=None, label='samples') -> Path:
    fig = _figure()
    ax = fig.subplots()
    ax.stairs(histogram.densities, histogram.edges, label=label)
    if exact_density is not None:
        ax.stairs(exact_density, histogram.edges, linestyle='--', label='exact Gibbs')
    ax.set_xlabel('E(σ)')
    ax.set_ylabel('density')
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    return path

