"""
Posterior construction and rollout.

The prior graph (exact enumeration or empirical path index) gets terminal
desirabilities ``log u_T = −E − log π_T`` where ``π_T`` is the prior's own
terminal marginal on that graph. The LS-MDP backward sweep then yields a
policy whose terminal marginal is proportional to ``exp(−E)`` over the
graph's terminals.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from scipy import sparse

from ..conf import resolve
from ..exceptions import InputError, LogicError, VerificationError
from . import rng as rng_streams
from .ising import IsingInstance, SpinConfig, as_spins, energies
from .lsmdp import (
    GraphLevel, LayeredGraph, LsMdpProblem, PosteriorPolicy, backward_values, marginals,
    optimal_policy, segment_logsumexp,
)
from .path_index import LayeredDag, build_index, save_snapshot
from .prior import (
    PathBatch, TransitionDistribution, candidate_log_probs, enumerate_prior_graph, sample_paths,
    terminal_spin_matrix,
)
from .states import PartialState, delta_between, digits_matrix

logger = logging.getLogger(__name__)

EXACT = 'exact'
EMPIRICAL = 'empirical'
MODES = (EXACT, EMPIRICAL)

LITERAL = 'literal'
PRIOR_FALLBACK = 'prior'
DEGENERACY_POLICIES = (LITERAL, PRIOR_FALLBACK)

CHUNK_SIZE = 4096


@dataclass(frozen=True)
class DfConfig:
    mode: str = EMPIRICAL
    n_paths: Optional[int] = None
    n_samples: int = 1
    seed: int = 0
    degeneracy: str = LITERAL
    min_visits: Optional[int] = None
    threads: Optional[int] = None
    state_cap: Optional[int] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"Mode must be one of {', '.join(MODES)}, got '{self.mode}'", field='mode')
        if self.mode == EMPIRICAL and (self.n_paths is None or self.n_paths < 1):
            raise InputError("Empirical mode needs at least one prior path (K >= 1)", field='paths')
        if self.n_samples < 1:
            raise InputError(f"Sample count must be at least 1, got {self.n_samples}", field='samples')
        if self.degeneracy not in DEGENERACY_POLICIES:
            raise InputError(
                f"Degeneracy policy must be one of {', '.join(DEGENERACY_POLICIES)}, got '{self.degeneracy}'",
                field='degeneracy',
            )


@dataclass(frozen=True, eq=False)
class Posterior:
    """A solved posterior together with the graph and statistics it was built from."""
    inst: IsingInstance
    mode: str
    graph: LayeredGraph
    problem: LsMdpProblem
    policy: PosteriorPolicy
    prior_marginal: np.ndarray
    terminal_spins: np.ndarray
    dag: Optional[LayeredDag] = None
    paths: Optional[PathBatch] = None
    timings_ms: Dict[str, float] = field(default_factory=dict)

    @property
    def values(self):
        return self.policy.values

    def terminal_marginal(self) -> np.ndarray:
        """π*_T under the posterior policy, aligned with ``terminal_spins``."""
        return marginals(self.graph, self.policy.log_prob)[-1]

    def terminal_distribution(self) -> Dict[SpinConfig, float]:
        return {
            tuple(int(s) for s in row): float(p)
            for row, p in zip(self.terminal_spins, self.terminal_marginal())
        }


@dataclass(frozen=True, eq=False)
class SampleSet:
    """S complete spin configurations as an ``(S, n_nodes)`` int8 matrix."""
    spins: np.ndarray

    def __len__(self):
        return self.spins.shape[0]

    @property
    def n_nodes(self):
        return self.spins.shape[1]

    def configurations(self) -> List[SpinConfig]:
        return [tuple(row) for row in self.spins.tolist()]


def terminal_values(graph: LayeredGraph, inst: IsingInstance, prior_marginal=None) -> np.ndarray:
    """
    log u_T(s_T) = −E(s_T) − log π_T(s_T), the global constant dropped.
    ``π_T`` defaults to the forward marginal of the graph's own prior.
    """
    if prior_marginal is None:
        prior_marginal = marginals(graph, [level.log_prior for level in graph.levels[:-1]])[-1]
    if np.any(prior_marginal <= 0):
        raise LogicError("Every terminal of the graph must carry positive prior mass")
    spins = terminal_spin_matrix(graph, inst.n_nodes)
    return -energies(inst, spins) - np.log(prior_marginal)


def _edge_deltas(graph: LayeredGraph, t, n_nodes):
    """(node, digit) assigned along every edge of level t."""
    level = graph.levels[t]
    before = digits_matrix(level.ids[level.rows], n_nodes)
    after = digits_matrix(graph.levels[t + 1].ids[level.succ], n_nodes)
    node = (after != before).argmax(axis=1)
    return node, after[np.arange(len(node)), node]


def prior_fallback(inst: IsingInstance, graph: LayeredGraph, dag: LayeredDag, min_visits) -> LayeredGraph:
    """
    Replace the empirical transitions of states visited fewer than
    ``min_visits`` times by the exact prior transition, restricted to and
    renormalised over the successors actually observed.
    """
    levels = []
    replaced = 0
    for t, level in enumerate(graph.levels[:-1]):
        visits = np.array([dag.levels[t][code].visits for code in level.ids.tolist()])
        sparse_rows = visits < min_visits
        if not np.any(sparse_rows):
            levels.append(level)
            continue
        replaced += int(sparse_rows.sum())
        _, log_probs = candidate_log_probs(inst, level.ids[sparse_rows])
        local = np.full(level.size, -1)
        local[sparse_rows] = np.arange(int(sparse_rows.sum()))
        node, digit = _edge_deltas(graph, t, inst.n_nodes)
        rows = level.rows
        affected = sparse_rows[rows]
        log_prior = level.log_prior.copy()
        log_prior[affected] = log_probs[local[rows[affected]], 2 * node[affected] + (digit[affected] == 2)]
        norm = segment_logsumexp(level, log_prior)
        log_prior[affected] -= norm[rows[affected]]
        levels.append(GraphLevel(level.ids, level.indptr, level.succ, log_prior))
    levels.append(graph.levels[-1])
    logger.info(f"Prior fallback applied at {replaced} sparsely visited states (min visits {min_visits})")
    return LayeredGraph(tuple(levels))


def build_posterior(inst: IsingInstance, cfg: DfConfig, dag: Optional[LayeredDag] = None) -> Posterior:
    """Build the Decision Flow posterior policy in exact or empirical mode."""
    timings = {}
    paths = None
    started = time.perf_counter()
    if cfg.mode == EXACT:
        graph = enumerate_prior_graph(inst, cfg.state_cap)
        timings['enumerate'] = (time.perf_counter() - started) * 1000
    else:
        if dag is None:
            paths = sample_paths(inst, cfg.n_paths, cfg.seed, cfg.threads)
            timings['prior'] = (time.perf_counter() - started) * 1000
            started = time.perf_counter()
            dag = build_index(paths, inst)
        elif not dag.sealed:
            dag.seal(inst)
        graph = dag.to_graph()
        if cfg.degeneracy == PRIOR_FALLBACK:
            graph = prior_fallback(inst, graph, dag, resolve(cfg.min_visits, 'MIN_VISITS'))
        timings['index'] = (time.perf_counter() - started) * 1000

    started = time.perf_counter()
    prior_marginal = marginals(graph, [level.log_prior for level in graph.levels[:-1]])[-1]
    log_u_terminal = terminal_values(graph, inst, prior_marginal)
    problem = LsMdpProblem.with_terminal_energies(graph, -log_u_terminal)
    values = backward_values(problem)
    policy = optimal_policy(problem, values)
    if dag is not None:
        dag.attach_values(graph, values)
    timings['solve'] = (time.perf_counter() - started) * 1000
    logger.info(
        f"Built {cfg.mode} posterior over {graph.n_states} states "
        f"({graph.levels[-1].size} terminals) in {sum(timings.values()):.1f} ms"
    )
    return Posterior(
        inst=inst,
        mode=cfg.mode,
        graph=graph,
        problem=problem,
        policy=policy,
        prior_marginal=prior_marginal,
        terminal_spins=terminal_spin_matrix(graph, inst.n_nodes),
        dag=dag,
        paths=paths,
        timings_ms=timings,
    )


def _cdf_tables(policy: PosteriorPolicy):
    tables = []
    for t, level in enumerate(policy.graph.levels[:-1]):
        cdf = np.cumsum(level.padded(policy.probabilities(t), 0.0), axis=1)
        with np.errstate(invalid='ignore', divide='ignore'):
            cdf /= cdf[:, -1:]
        tables.append(cdf)
    return tables


def rollout(policy: PosteriorPolicy, n_samples: int, seed: int, threads=None) -> np.ndarray:
    """
    Terminal positions of ``n_samples`` independent rollouts from root 0.
    Rollout i draws its uniforms from ``rng.rollout_stream(seed, i)``.
    """
    if n_samples < 1:
        raise InputError(f"Sample count must be at least 1, got {n_samples}", field='samples')
    threads = resolve(threads, 'THREADS')
    graph = policy.graph
    horizon = graph.horizon
    cdfs = _cdf_tables(policy)

    def work(bounds):
        start, stop = bounds
        uniforms = rng_streams.uniform_block(seed, rng_streams.POSTERIOR_ROLLOUT, start, stop, horizon)
        positions = np.zeros(stop - start, dtype=np.int64)
        for t in range(horizon):
            level = graph.levels[t]
            if policy.dead and np.any(policy.dead[t][positions]):
                raise VerificationError(f"Rollout reached a state without posterior mass at level {t}")
            choice = (cdfs[t][positions] <= uniforms[:, t:t + 1]).sum(axis=1)
            positions = level.succ[level.indptr[positions] + choice]
        return positions

    chunks = [(start, min(start + CHUNK_SIZE, n_samples)) for start in range(0, n_samples, CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(chunk) for chunk in chunks]
    return np.concatenate(parts)


def sample_posterior(policy: PosteriorPolicy, n_samples: int, seed: int, threads=None) -> SampleSet:
    """Roll out S complete spin configurations from the empty assignment."""
    started = time.perf_counter()
    terminals = rollout(policy, n_samples, seed, threads)
    spins = terminal_spin_matrix(policy.graph, policy.horizon)[terminals]
    logger.info(f"Drew {n_samples} posterior samples in {(time.perf_counter() - started) * 1000:.1f} ms")
    return SampleSet(spins.astype(np.int8))


def policy_transition(policy: PosteriorPolicy, state: PartialState) -> TransitionDistribution:
    """Posterior transition out of ``state`` as (node, spin) deltas."""
    if state.level >= policy.horizon:
        raise LogicError("Terminal state has no outgoing transition")
    options = []
    for code, probability in policy.distribution(state.level, state.code):
        options.append((delta_between(state.n_nodes, state.code, code), probability))
    return TransitionDistribution(tuple(options))


# -- Green functions ---------------------------------------------------------

def transition_matrix(graph: LayeredGraph, t, log_prob=None) -> sparse.csr_matrix:
    """Level-t transitions as a sparse ``(n_t, n_{t+1})`` matrix."""
    level = graph.levels[t]
    data = np.exp(level.log_prior if log_prob is None else log_prob)
    return sparse.csr_matrix((data, level.succ, level.indptr), shape=(level.size, graph.levels[t + 1].size))


def green_functions(graph: LayeredGraph) -> List[np.ndarray]:
    """
    Dense G_t(s_t | s_T) for every level: G_T = I and
    G_t = P_t G_{t+1} with P_t the prior transition matrix.
    """
    n_terminals = graph.levels[-1].size
    result = [np.eye(n_terminals)]
    for t in range(graph.horizon - 1, -1, -1):
        result.append(np.asarray(transition_matrix(graph, t) @ result[-1]))
    return result[::-1]


def green_function(graph: LayeredGraph, level, state_id, terminal_id) -> float:
    table = green_functions(graph)[level]
    return float(table[graph.index(level, state_id), graph.index(graph.horizon, terminal_id)])


def policy_from_green_functions(graph: LayeredGraph, inst: IsingInstance, greens=None) -> List[np.ndarray]:
    """
    p*_t(s'|s) ∝ p_t(s'|s) · Σ_{s_T} e^{−E(s_T)} G_{t+1}(s'|s_T) / π_T(s_T),
    evaluated directly from the Green functions; per-edge probabilities.
    """
    greens = green_functions(graph) if greens is None else greens
    prior_marginal = greens[0][0]
    log_weight = terminal_values(graph, inst, prior_marginal)
    weight = np.exp(log_weight - log_weight.max())
    result = []
    for t, level in enumerate(graph.levels[:-1]):
        reach = greens[t + 1] @ weight
        unnormalised = np.exp(level.log_prior) * reach[level.succ]
        totals = np.bincount(level.rows, weights=unnormalised, minlength=level.size)
        result.append(unnormalised / totals[level.rows])
    return result


# -- sample files ------------------------------------------------------------
#
# One configuration per line, spins written as ``+1``/``-1`` separated by spaces.

def write_samples(samples: SampleSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w') as handle:
        for row in samples.spins.tolist():
            handle.write(' '.join(f"{s:+d}" for s in row) + '\n')
    return path


def read_samples(path, n_nodes=None) -> SampleSet:
    path = Path(path)
    try:
        lines = [line for line in path.read_text().splitlines() if line.strip()]
    except OSError as exc:
        raise InputError(f"Cannot read sample file {path}: {exc.strerror}", field='path')
    rows = []
    for lineno, line in enumerate(lines, start=1):
        try:
            row = [int(token) for token in line.split()]
        except ValueError:
            raise InputError(f"{path}: line {lineno} is not a spin vector", field='samples')
        width = n_nodes if n_nodes is not None else (len(rows[0]) if rows else len(row))
        rows.append(as_spins(row, width))
    if not rows:
        raise InputError(f"{path}: no samples", field='samples')
    return SampleSet(np.vstack(rows))


def save_posterior_snapshot(posterior: Posterior, path) -> Path:
    """Snapshot the path index of an empirical posterior with its values and edge probabilities."""
    if posterior.dag is None:
        raise LogicError("Only empirical posteriors carry a path index to snapshot")
    return save_snapshot(posterior.dag, path, policy_log_prob=posterior.policy.log_prob)
