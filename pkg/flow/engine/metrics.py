"""
Mismatch metrics, distribution distances and energy histograms.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np

from ..conf import resolve
from ..exceptions import InputError
from .ising import IsingInstance, energies
from .reference import configuration_index

logger = logging.getLogger(__name__)

TIMING_STAGES = ('enumerate', 'prior', 'index', 'solve', 'sample', 'reference', 'metrics')
CSV_COLUMNS = [
    'method', 'mode', 'K', 'S', 'delta1', 'delta2', 'tv', 'sample_tv', 'seed', 'status', 'error',
] + [f'wall_ms_{stage}' for stage in TIMING_STAGES]


def _spin_matrix(samples) -> np.ndarray:
    spins = getattr(samples, 'spins', samples)
    spins = np.asarray(spins, dtype=np.float64)
    if spins.ndim != 2 or spins.shape[0] < 1:
        raise InputError("Moments need at least one sample", field='samples')
    return spins


@dataclass(frozen=True, eq=False)
class Moments:
    magnetizations: np.ndarray
    correlations: np.ndarray

    @property
    def pairs(self) -> np.ndarray:
        """Upper-triangle correlations c_ab, a < b, row-major."""
        return upper_triangle(self.correlations)


def upper_triangle(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        return matrix
    return matrix[np.triu_indices(matrix.shape[0], k=1)]


def moments(samples) -> Moments:
    """m*_a = ⟨σ_a⟩ and c*_ab = ⟨σ_a σ_b⟩ over the samples."""
    spins = _spin_matrix(samples)
    count = spins.shape[0]
    return Moments(spins.mean(axis=0), spins.T @ spins / count)


@dataclass(frozen=True)
class DeltaResult:
    delta1: float
    delta2: float
    clamped_magnetizations: int = 0
    clamped_correlations: int = 0


def delta_metrics(m, c, m_ref, c_ref, n_nodes=None, epsilon=None) -> DeltaResult:
    """
    Δ₁ = Σ_a |m_a − m_ref_a| / (T max(|m_ref_a|, ε))
    Δ₂ = Σ_{a<b} 2|c_ab − c_ref_ab| / (T(T−1) max(|c_ref_ab|, ε))

    Correlations may be given as full matrices or as upper-triangle vectors.
    """
    epsilon = resolve(epsilon, 'DELTA_EPSILON')
    m, m_ref = np.asarray(m, dtype=np.float64), np.asarray(m_ref, dtype=np.float64)
    pairs, pairs_ref = upper_triangle(c), upper_triangle(c_ref)
    if m.shape != m_ref.shape or pairs.shape != pairs_ref.shape:
        raise InputError(
            f"Moment dimensions differ: magnetizations {m.shape} vs {m_ref.shape}, "
            f"pairs {pairs.shape} vs {pairs_ref.shape}",
            field='moments',
        )
    n_nodes = m.shape[0] if n_nodes is None else n_nodes
    if pairs.shape[0] != n_nodes * (n_nodes - 1) // 2:
        raise InputError(f"Expected {n_nodes * (n_nodes - 1) // 2} pair correlations, got {pairs.shape[0]}",
                         field='moments')

    m_scale = np.abs(m_ref)
    c_scale = np.abs(pairs_ref)
    clamped_m = int(np.sum(m_scale < epsilon))
    clamped_c = int(np.sum(c_scale < epsilon))
    if clamped_m or clamped_c:
        logger.info(f"Clamped {clamped_m} magnetization and {clamped_c} correlation denominators to {epsilon}")

    delta1 = float(np.sum(np.abs(m - m_ref) / np.maximum(m_scale, epsilon)) / n_nodes)
    if n_nodes > 1:
        delta2 = float(np.sum(2.0 * np.abs(pairs - pairs_ref) / np.maximum(c_scale, epsilon)) / (n_nodes * (n_nodes - 1)))
    else:
        delta2 = 0.0
    return DeltaResult(delta1, delta2, clamped_m, clamped_c)


def total_variation(p, q) -> float:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InputError(f"Distributions have different supports: {p.shape} vs {q.shape}", field='distribution')
    return float(0.5 * np.sum(np.abs(p - q)))


def empirical_distribution(samples, n_nodes) -> np.ndarray:
    """Sample frequencies over all 2^N configurations, in exact-enumeration order."""
    spins = _spin_matrix(samples)
    counts = np.bincount(configuration_index(spins), minlength=2 ** n_nodes)
    return counts / spins.shape[0]


def sample_total_variation(samples, gibbs) -> float:
    return total_variation(empirical_distribution(samples, gibbs.n_nodes), gibbs.probabilities)


def terminal_total_variation(terminal_spins, terminal_marginal, gibbs) -> float:
    """TV between a marginal over some terminals (zero elsewhere) and the exact Gibbs law."""
    dense = np.zeros_like(gibbs.probabilities)
    dense[configuration_index(terminal_spins)] = terminal_marginal
    return total_variation(dense, gibbs.probabilities)


@dataclass(frozen=True, eq=False)
class EnergyHistogram:
    edges: np.ndarray
    densities: np.ndarray
    mean_energy: float

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centres(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def energy_histogram(inst: IsingInstance, samples, bins=None) -> EnergyHistogram:
    """Density estimate of E(σ) over equal-width bins spanning the observed energies."""
    bins = resolve(bins, 'HISTOGRAM_BINS')
    if bins < 1:
        raise InputError(f"Histogram needs at least one bin, got {bins}", field='bins')
    values = energies(inst, _spin_matrix(samples))
    densities, edges = np.histogram(values, bins=bins, density=True)
    return EnergyHistogram(edges, densities, float(values.mean()))


@dataclass(eq=False)
class MetricsReport:
    method: str
    n_samples: int
    seed: int
    reference: str
    delta1: float
    delta2: float
    energy_histogram: EnergyHistogram
    mode: Optional[str] = None
    n_paths: Optional[int] = None
    tv: Optional[float] = None
    sample_tv: Optional[float] = None
    clamped_magnetizations: int = 0
    clamped_correlations: int = 0
    timings_ms: Dict[str, float] = field(default_factory=dict)
    status: str = 'completed'
    error: Optional[str] = None

    def as_document(self) -> dict:
        from ..serializers import MetricsReportSerializer

        return dict(MetricsReportSerializer(self).data)

    def csv_row(self) -> dict:
        row = {
            'method': self.method,
            'mode': self.mode or '',
            'K': '' if self.n_paths is None else self.n_paths,
            'S': self.n_samples,
            'delta1': _number(self.delta1),
            'delta2': _number(self.delta2),
            'tv': _number(self.tv),
            'sample_tv': _number(self.sample_tv),
            'seed': self.seed,
            'status': self.status,
            'error': self.error or '',
        }
        for stage in TIMING_STAGES:
            value = self.timings_ms.get(stage)
            row[f'wall_ms_{stage}'] = '' if value is None else f"{value:.3f}"
        return row


def _number(value):
    return '' if value is None else repr(float(value))


def failed_row(method, mode, n_paths, n_samples, seed, error) -> dict:
    row = {column: '' for column in CSV_COLUMNS}
    row.update({
        'method': method,
        'mode': mode or '',
        'K': '' if n_paths is None else n_paths,
        'S': n_samples,
        'seed': seed,
        'status': 'failed',
        'error': error,
    })
    return row


def write_csv(rows: Iterable[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def read_csv(path):
    with Path(path).open(newline='') as handle:
        return list(csv.DictReader(handle))


def write_histogram_csv(histogram: EnergyHistogram, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['left', 'right', 'density'])
        for left, right, density in zip(histogram.edges[:-1], histogram.edges[1:], histogram.densities):
            writer.writerow([repr(float(left)), repr(float(right)), repr(float(density))])
    return path
