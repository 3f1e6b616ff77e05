"""
Ground-truth samplers: exact Gibbs enumeration and single-flip Metropolis-Hastings.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.special import logsumexp

from ..conf import flow_setting, resolve
from ..exceptions import CapacityError, InputError
from . import rng as rng_streams
from .decision_flow import SampleSet
from .ising import IsingInstance, SpinConfig, as_spins, energies

logger = logging.getLogger(__name__)

# dense MH kernels are 2^N x 2^N
KERNEL_NODE_LIMIT = 12


def all_configurations(n_nodes) -> np.ndarray:
    """Every spin vector, row i having spin −1 on the set bits of i."""
    index = np.arange(2 ** n_nodes, dtype=np.int64)
    bits = (index[:, None] >> np.arange(n_nodes)) & 1
    return (1 - 2 * bits).astype(np.int8)


def configuration_index(spins) -> np.ndarray:
    """Inverse of ``all_configurations`` for an ``(m, n_nodes)`` spin matrix."""
    spins = np.atleast_2d(spins)
    return ((spins < 0).astype(np.int64) << np.arange(spins.shape[1])).sum(axis=1)


@dataclass(frozen=True, eq=False)
class ExactGibbs:
    spins: np.ndarray
    energies: np.ndarray
    probabilities: np.ndarray
    log_z: float
    magnetizations: np.ndarray
    correlations: np.ndarray

    @property
    def n_nodes(self):
        return self.spins.shape[1]

    @property
    def partition(self):
        return math.exp(self.log_z)

    @property
    def mean_energy(self):
        return float(np.dot(self.probabilities, self.energies))

    @property
    def energy_variance(self):
        return float(np.dot(self.probabilities, (self.energies - self.mean_energy) ** 2))

    def probability(self, cfg) -> float:
        spins = as_spins(cfg, self.n_nodes)
        return float(self.probabilities[configuration_index(spins)[0]])

    def probabilities_of(self, spins) -> np.ndarray:
        return self.probabilities[configuration_index(spins)]

    def distribution(self) -> Dict[SpinConfig, float]:
        return {tuple(int(s) for s in row): float(p) for row, p in zip(self.spins, self.probabilities)}


def check_gibbs_capacity(n_nodes, cap=None):
    cap = resolve(cap, 'GIBBS_CONFIG_CAP')
    required = 2 ** n_nodes
    if required > cap:
        logger.warning(f"Exact Gibbs enumeration refused: {required} configurations exceed the cap of {cap}")
        raise CapacityError(
            f"Exact Gibbs reference needs {required} configurations, above the cap of {cap}",
            limit=cap,
            required=required,
            hint="use --reference mcmc",
        )


def exact_gibbs(inst: IsingInstance, cap=None) -> ExactGibbs:
    """p(σ) = exp(−E(σ)) / Z by full enumeration."""
    check_gibbs_capacity(inst.n_nodes, cap)
    spins = all_configurations(inst.n_nodes)
    values = energies(inst, spins)
    log_z = float(logsumexp(-values))
    probabilities = np.exp(-values - log_z)
    weighted = spins.astype(np.float64)
    return ExactGibbs(
        spins=spins,
        energies=values,
        probabilities=probabilities,
        log_z=log_z,
        magnetizations=probabilities @ weighted,
        correlations=weighted.T @ (probabilities[:, None] * weighted),
    )


@dataclass(frozen=True)
class McmcConfig:
    total: int = 5000
    burn_in: int = 2000
    stride: int = 10
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if self.total < 1:
            raise InputError(f"MCMC total must be at least 1, got {self.total}", field='total')
        if not 0 <= self.burn_in < self.total:
            raise InputError(
                f"MCMC burn-in ({self.burn_in}) must be in [0, total={self.total})", field='burn_in'
            )
        if self.stride < 1:
            raise InputError(f"MCMC stride must be at least 1, got {self.stride}", field='stride')
        if self.chains < 1:
            raise InputError(f"MCMC chain count must be at least 1, got {self.chains}", field='chains')

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            'total': flow_setting('MCMC_TOTAL'),
            'burn_in': flow_setting('MCMC_BURN_IN'),
            'stride': flow_setting('MCMC_STRIDE'),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def recorded_per_chain(self):
        return len(range(self.burn_in, self.total, self.stride))


def delta_energy(inst: IsingInstance, spins, a) -> float:
    """E(flip_a σ) − E(σ) = 2 σ_a (h_a + Σ_b J_ab σ_b)."""
    local = inst.h[a] + sum(coupling * spins[b] for b, coupling in inst.adjacency[a])
    return float(2.0 * spins[a] * local)


def run_chain(inst: IsingInstance, cfg: McmcConfig, stream: np.random.Generator) -> np.ndarray:
    """
    One single-flip chain. Proposal i (0-based) flips a uniformly chosen
    node; the state after it is recorded when i ≥ burn_in and
    (i − burn_in) is a multiple of the stride.
    """
    n_nodes = inst.n_nodes
    spins = (2 * stream.integers(0, 2, size=n_nodes) - 1).tolist()
    proposals = stream.integers(0, n_nodes, size=cfg.total).tolist()
    uniforms = stream.random(cfg.total).tolist()
    h = inst.h.tolist()
    adjacency = inst.adjacency
    recorded = np.empty((cfg.recorded_per_chain, n_nodes), dtype=np.int8)
    row = 0
    accepted = 0
    for i, (a, u) in enumerate(zip(proposals, uniforms)):
        local = h[a]
        for b, coupling in adjacency[a]:
            local += coupling * spins[b]
        change = 2.0 * spins[a] * local
        if change <= 0.0 or u < math.exp(-change):
            spins[a] = -spins[a]
            accepted += 1
        if i >= cfg.burn_in and (i - cfg.burn_in) % cfg.stride == 0:
            recorded[row] = spins
            row += 1
    logger.debug(f"Chain accepted {accepted} of {cfg.total} proposals")
    return recorded


def mcmc_sample(inst: IsingInstance, cfg: McmcConfig, purpose=rng_streams.MCMC_CHAIN) -> SampleSet:
    """Recorded states of ``cfg.chains`` chains, chain c on stream ``(seed, purpose, c)``, concatenated."""
    started = time.perf_counter()
    parts = [
        run_chain(inst, cfg, rng_streams.split_stream(cfg.seed, purpose, c))
        for c in range(cfg.chains)
    ]
    samples = SampleSet(np.concatenate(parts))
    logger.info(
        f"MCMC recorded {len(samples)} samples from {cfg.chains} chain(s) in "
        f"{(time.perf_counter() - started) * 1000:.1f} ms"
    )
    return samples


def mcmc_reference(inst: IsingInstance, seed: int, n_recorded=None, burn_in=None, stride=None) -> SampleSet:
    """Long single chain used as the reference when exact enumeration is out of reach."""
    n_recorded = resolve(n_recorded, 'REFERENCE_MCMC_SAMPLES')
    burn_in = resolve(burn_in, 'MCMC_BURN_IN')
    stride = resolve(stride, 'MCMC_STRIDE')
    cfg = McmcConfig(total=burn_in + n_recorded * stride, burn_in=burn_in, stride=stride, seed=seed)
    return mcmc_sample(inst, cfg, purpose=rng_streams.REFERENCE_CHAIN)


def mh_transition_matrix(inst: IsingInstance, node_limit: Optional[int] = None) -> np.ndarray:
    """
    Exact single-flip kernel over all 2^N configurations (ordered as
    ``all_configurations``): P[i, flip_a(i)] = min(1, e^{−ΔE}) / N.
    """
    node_limit = KERNEL_NODE_LIMIT if node_limit is None else node_limit
    if inst.n_nodes > node_limit:
        raise CapacityError(
            f"Dense MH kernel limited to {node_limit} nodes, instance has {inst.n_nodes}",
            limit=node_limit,
            required=inst.n_nodes,
        )
    spins = all_configurations(inst.n_nodes)
    size = spins.shape[0]
    kernel = np.zeros((size, size))
    for i, row in enumerate(spins.tolist()):
        for a in range(inst.n_nodes):
            j = i ^ (1 << a)
            kernel[i, j] = min(1.0, math.exp(-delta_energy(inst, row, a))) / inst.n_nodes
        kernel[i, i] = 1.0 - kernel[i].sum()
    return kernel
