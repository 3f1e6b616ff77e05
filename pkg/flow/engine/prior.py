"""
The sequential softmax prior.

Starting from the empty assignment, each step picks one (unassigned node,
spin) pair jointly with probability proportional to ``exp(h̃_b σ_b)``, where
``h̃_b = h_b + Σ_{assigned a ~ b} J_ab σ_a`` is the effective bias. After
``n_nodes`` steps every spin is set.

Candidate pairs are always listed node-ascending with +1 before −1; path
sampling inverts the cumulative distribution in that order with one uniform
per step.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from ..conf import resolve
from ..exceptions import CapacityError, InputError, LogicError
from . import rng as rng_streams
from .ising import IsingInstance, SpinConfig
from .lsmdp import GraphLevel, LayeredGraph, marginals
from .states import PartialState, delta_between, digits_matrix, powers_of_three, spins_from_digits

logger = logging.getLogger(__name__)

Delta = Tuple[int, int]

# paths per worker task in sample_paths
CHUNK_SIZE = 4096


def effective_bias(inst: IsingInstance, state: PartialState, b: int) -> float:
    """h̃_b = h_b + Σ J_ab σ_a over assigned neighbours a of b."""
    if state.is_assigned(b):
        raise LogicError(f"Node {b} is already assigned; its effective bias is undefined")
    assignment = state.assignment
    return float(inst.h[b]) + sum(coupling * assignment[a] for a, coupling in inst.adjacency[b] if a in assignment)


@dataclass(frozen=True)
class TransitionDistribution:
    """Categorical distribution over the (node, spin) deltas out of one state."""
    options: Tuple[Tuple[Delta, float], ...]

    @property
    def deltas(self) -> List[Delta]:
        return [delta for delta, _ in self.options]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.options])

    def probability(self, node, spin) -> float:
        for delta, p in self.options:
            if delta == (node, spin):
                return p
        return 0.0

    def as_dict(self) -> Dict[Delta, float]:
        return dict(self.options)


def _candidate_logits(field, free):
    """Interleave +h̃ / −h̃ per node, masking assigned nodes with −inf."""
    logits = np.empty(field.shape[:-1] + (2 * field.shape[-1],))
    logits[..., 0::2] = field
    logits[..., 1::2] = -field
    logits[~np.repeat(free, 2, axis=-1)] = -np.inf
    return logits


def prior_transition(inst: IsingInstance, state: PartialState) -> TransitionDistribution:
    if state.is_terminal:
        raise LogicError("Terminal state has no outgoing prior transition")
    free = np.array([not state.is_assigned(b) for b in range(inst.n_nodes)])
    spins = np.array([state.assignment.get(b, 0) for b in range(inst.n_nodes)], dtype=np.float64)
    field = inst.h + inst.coupling_matrix() @ spins
    logits = _candidate_logits(field, free)
    probs = softmax(logits)
    options = tuple(
        ((j // 2, 1 if j % 2 == 0 else -1), float(probs[j]))
        for j in np.flatnonzero(np.repeat(free, 2))
    )
    return TransitionDistribution(options)


@dataclass(frozen=True)
class PathRecord:
    """One prior path, as the ordered (node, spin) deltas from ∅ to a full assignment."""
    n_nodes: int
    nodes: Tuple[int, ...]
    spins: Tuple[int, ...]

    @property
    def deltas(self) -> List[Delta]:
        return list(zip(self.nodes, self.spins))

    @property
    def states(self) -> List[PartialState]:
        state = PartialState.empty(self.n_nodes)
        result = [state]
        for node, spin in self.deltas:
            state = state.extend(node, spin)
            result.append(state)
        return result

    @property
    def terminal(self) -> SpinConfig:
        spins = [0] * self.n_nodes
        for node, spin in self.deltas:
            spins[node] = spin
        return tuple(spins)


@dataclass(frozen=True, eq=False)
class PathBatch:
    """K paths stored as ``(K, n_nodes)`` arrays of chosen nodes and spins, step-major per row."""
    nodes: np.ndarray
    spins: np.ndarray

    def __post_init__(self):
        if self.nodes.shape != self.spins.shape or self.nodes.ndim != 2:
            raise InputError(
                f"Path node and spin arrays must share a 2-d shape, got {self.nodes.shape} and {self.spins.shape}",
                field='paths',
            )

    def __len__(self):
        return self.nodes.shape[0]

    @property
    def n_nodes(self):
        return self.nodes.shape[1]

    def records(self) -> Iterator[PathRecord]:
        for nodes, spins in zip(self.nodes.tolist(), self.spins.tolist()):
            yield PathRecord(self.n_nodes, tuple(nodes), tuple(spins))

    def level_codes(self) -> np.ndarray:
        """``(K, n_nodes + 1)`` canonical state codes along every path."""
        powers = powers_of_three(self.n_nodes)
        digits = np.where(self.spins > 0, 1, 2).astype(powers.dtype)
        steps = digits * powers[self.nodes]
        codes = np.zeros((len(self), self.n_nodes + 1), dtype=powers.dtype)
        np.cumsum(steps, axis=1, out=codes[:, 1:])
        return codes

    def terminal_spins(self) -> np.ndarray:
        result = np.zeros(self.nodes.shape, dtype=np.int8)
        np.put_along_axis(result, self.nodes, self.spins.astype(np.int8), axis=1)
        return result

    @classmethod
    def from_records(cls, records, n_nodes) -> PathBatch:
        records = list(records)
        nodes = np.empty((len(records), n_nodes), dtype=np.int64)
        spins = np.empty((len(records), n_nodes), dtype=np.int8)
        for k, record in enumerate(records):
            if len(record.nodes) != n_nodes or sorted(record.nodes) != list(range(n_nodes)):
                raise InputError(
                    f"Path {k} does not assign each of the {n_nodes} nodes exactly once", field='paths'
                )
            nodes[k] = record.nodes
            spins[k] = record.spins
        return cls(nodes, spins)


def _grow(inst: IsingInstance, uniforms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Grow one path per row of ``uniforms`` (shape ``(B, n_nodes)``)."""
    batch, n_nodes = uniforms.shape
    coupling = inst.coupling_matrix()
    field = np.tile(inst.h, (batch, 1))
    free = np.ones((batch, n_nodes), dtype=bool)
    nodes = np.empty((batch, n_nodes), dtype=np.int64)
    spins = np.empty((batch, n_nodes), dtype=np.int8)
    rows = np.arange(batch)
    for t in range(n_nodes):
        logits = _candidate_logits(field, free)
        weights = np.exp(logits - logits.max(axis=1, keepdims=True))
        cdf = np.cumsum(weights, axis=1)
        cdf /= cdf[:, -1:]
        choice = (cdf <= uniforms[:, t:t + 1]).sum(axis=1)
        node = choice // 2
        spin = np.where(choice % 2 == 0, 1, -1)
        nodes[:, t] = node
        spins[:, t] = spin
        free[rows, node] = False
        field += spin[:, None] * coupling[node]
    return nodes, spins


def sample_path(inst: IsingInstance, stream: np.random.Generator) -> PathRecord:
    """Draw one prior path; consumes exactly ``n_nodes`` uniforms from ``stream``."""
    nodes, spins = _grow(inst, stream.random(inst.n_nodes)[None, :])
    return PathRecord(inst.n_nodes, tuple(nodes[0].tolist()), tuple(spins[0].tolist()))


def sample_paths(inst: IsingInstance, n_paths: int, seed: int, threads=None) -> PathBatch:
    """
    Draw ``n_paths`` prior paths. Path k uses ``rng.path_stream(seed, k)``, so
    the batch does not depend on ``threads``.
    """
    if n_paths < 1:
        raise InputError(f"Number of paths must be at least 1, got {n_paths}", field='paths')
    threads = resolve(threads, 'THREADS')
    started = time.perf_counter()

    def work(bounds):
        start, stop = bounds
        uniforms = rng_streams.uniform_block(seed, rng_streams.PRIOR_PATH, start, stop, inst.n_nodes)
        return _grow(inst, uniforms)

    chunks = [(start, min(start + CHUNK_SIZE, n_paths)) for start in range(0, n_paths, CHUNK_SIZE)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(chunk) for chunk in chunks]

    batch = PathBatch(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
    logger.info(f"Sampled {n_paths} prior paths in {(time.perf_counter() - started) * 1000:.1f} ms")
    return batch


def check_exact_capacity(n_nodes, cap=None):
    cap = resolve(cap, 'EXACT_STATE_CAP')
    required = 3 ** n_nodes
    if required > cap:
        logger.warning(f"Exact enumeration refused: {required} states exceed the cap of {cap}")
        raise CapacityError(
            f"Exact mode needs {required} states for {n_nodes} nodes, above the cap of {cap}",
            limit=cap,
            required=required,
            hint="use --mode empirical, --reference mcmc, or raise DF_EXACT_STATE_CAP",
        )


def candidate_log_probs(inst: IsingInstance, codes, coupling=None):
    """
    Prior log-probabilities of all 2N candidates for a batch of state codes,
    as an ``(m, 2N)`` matrix (−inf on assigned nodes), plus the free-node mask.
    """
    if coupling is None:
        coupling = inst.coupling_matrix()
    digits = digits_matrix(codes, inst.n_nodes)
    spins = spins_from_digits(digits).astype(np.float64)
    free = digits == 0
    return free, log_softmax(_candidate_logits(inst.h + spins @ coupling, free), axis=1)


def enumerate_prior_graph(inst: IsingInstance, cap=None) -> LayeredGraph:
    """
    Expand every partial assignment level by level: C(N, t)·2^t states at
    level t, 3^N in total. State ids are the canonical codes, sorted
    ascending within each level.
    """
    check_exact_capacity(inst.n_nodes, cap)
    n_nodes = inst.n_nodes
    started = time.perf_counter()
    coupling = inst.coupling_matrix()
    powers = powers_of_three(n_nodes)
    codes = np.zeros(1, dtype=np.int64)
    levels = []
    for t in range(n_nodes):
        free, log_probs = candidate_log_probs(inst, codes, coupling)

        rows, cols = np.nonzero(np.repeat(free, 2, axis=1))
        node = cols // 2
        digit = np.where(cols % 2 == 0, 1, 2).astype(np.int64)
        successor_codes = codes[rows] + digit * powers[node]
        next_codes = np.unique(successor_codes)

        width = 2 * (n_nodes - t)
        indptr = np.arange(len(codes) + 1, dtype=np.int64) * width
        levels.append(GraphLevel(
            ids=codes,
            indptr=indptr,
            succ=np.searchsorted(next_codes, successor_codes),
            log_prior=log_probs[rows, cols],
        ))
        codes = next_codes
    levels.append(GraphLevel(ids=codes))
    graph = LayeredGraph(tuple(levels))
    logger.info(
        f"Enumerated {graph.n_states} prior states for {n_nodes} nodes in "
        f"{(time.perf_counter() - started) * 1000:.1f} ms"
    )
    return graph


def terminal_spin_matrix(graph: LayeredGraph, n_nodes) -> np.ndarray:
    """Spin vectors of the terminal level, one row per terminal id."""
    return spins_from_digits(digits_matrix(graph.levels[-1].ids, n_nodes))


def prior_terminal_marginal(graph: LayeredGraph) -> np.ndarray:
    """π_T under the prior transitions of ``graph``, aligned with its terminal ids."""
    return marginals(graph, [level.log_prior for level in graph.levels[:-1]])[-1]


def exact_prior_marginal(inst: IsingInstance, cap=None) -> Dict[SpinConfig, float]:
    graph = enumerate_prior_graph(inst, cap)
    spins = terminal_spin_matrix(graph, inst.n_nodes)
    pi = prior_terminal_marginal(graph)
    return {tuple(int(s) for s in row): float(p) for row, p in zip(spins, pi)}


# -- path log ---------------------------------------------------------------
#
# One path per line, deltas in assignment order: ``node:+1 node:-1 ...``

def write_paths(batch: PathBatch, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w') as handle:
        for nodes, spins in zip(batch.nodes.tolist(), batch.spins.tolist()):
            handle.write(' '.join(f"{n}:{s:+d}" for n, s in zip(nodes, spins)) + '\n')
    return path


def read_paths(path, n_nodes) -> PathBatch:
    path = Path(path)
    records = []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"Cannot read path log {path}: {exc.strerror}", field='path')
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            deltas = [token.split(':') for token in line.split()]
            nodes = tuple(int(node) for node, _ in deltas)
            spins = tuple(int(spin) for _, spin in deltas)
        except ValueError:
            raise InputError(f"{path}: line {lineno} is not a list of node:spin deltas", field='paths')
        if any(s not in (1, -1) for s in spins):
            raise InputError(f"{path}: line {lineno} has a spin other than +1/-1", field='paths')
        records.append(PathRecord(n_nodes, nodes, spins))
    return PathBatch.from_records(records, n_nodes)


def transition_from_graph(graph: LayeredGraph, n_nodes, state: PartialState) -> TransitionDistribution:
    """Read a prior transition back out of an enumerated graph."""
    level = state.level
    if level >= graph.horizon:
        raise LogicError("Terminal state has no outgoing prior transition")
    position = graph.index(level, state.code)
    next_ids = graph.levels[level + 1].ids
    options = []
    for succ, log_p in graph.successors(level, position):
        node, spin = delta_between(n_nodes, state.code, int(next_ids[succ]))
        options.append(((node, spin), float(np.exp(log_p))))
    return TransitionDistribution(tuple(options))

