"""
Empirical statistics over sampled prior paths.

A ``LayeredDag`` keeps one hash table per level, keyed by canonical state
code. Each record holds the visit count, the outgoing (node, spin) → count
map and a slot for the backward value. Counts are plain integers, so shards
ingested separately merge exactly.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import InputError, LogicError, StateLookupError
from .ising import IsingInstance, SpinConfig, energies
from .lsmdp import GraphLevel, LayeredGraph, ValueTable
from .prior import PathBatch, PathRecord, TransitionDistribution
from .states import PartialState, digits_matrix, powers_of_three, spins_from_digits

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1


@dataclass
class StateRecord:
    visits: int = 0
    edges: Dict[tuple, int] = field(default_factory=dict)
    log_u: float = float('nan')
    spins: Optional[SpinConfig] = None
    energy: Optional[float] = None


def _delta_order(delta):
    node, spin = delta
    return node, 0 if spin > 0 else 1


class LayeredDag:
    """
    Visit and transition counts of K prior paths, level by level.

    Mutable until ``seal()``; read-only afterwards.
    """

    def __init__(self, n_nodes):
        self.n_nodes = int(n_nodes)
        self.levels: List[Dict[int, StateRecord]] = [{} for _ in range(self.n_nodes + 1)]
        self.n_paths = 0
        self.sealed = False
        self.policy_log_prob: Optional[Tuple[np.ndarray, ...]] = None

    def __repr__(self):
        return f"LayeredDag(n_nodes={self.n_nodes}, n_paths={self.n_paths}, states={self.n_states})"

    @property
    def n_states(self):
        return sum(len(level) for level in self.levels)

    @property
    def horizon(self):
        return self.n_nodes

    def _check_mutable(self):
        if self.sealed:
            raise LogicError("LayeredDag is sealed and can no longer be modified")

    def ingest(self, paths: Union[PathBatch, Iterable[PathRecord]]) -> LayeredDag:
        """Add the counts of a batch of paths."""
        self._check_mutable()
        if not isinstance(paths, PathBatch):
            records = list(paths)
            for k, record in enumerate(records):
                if record.n_nodes != self.n_nodes or len(record.nodes) != self.n_nodes:
                    raise InputError(
                        f"Path {k} has {len(record.nodes)} steps but the index expects {self.n_nodes}",
                        field='paths',
                    )
            paths = PathBatch.from_records(records, self.n_nodes)
        if paths.n_nodes != self.n_nodes:
            raise InputError(
                f"Paths have {paths.n_nodes} steps but the index expects {self.n_nodes}", field='paths'
            )
        if len(paths) == 0:
            return self

        codes = paths.level_codes()
        for t in range(self.n_nodes):
            level = self.levels[t]
            transitions = Counter(zip(codes[:, t].tolist(), paths.nodes[:, t].tolist(), paths.spins[:, t].tolist()))
            for (code, node, spin), count in transitions.items():
                record = level.setdefault(code, StateRecord())
                record.visits += count
                record.edges[(node, spin)] = record.edges.get((node, spin), 0) + count
        terminal = self.levels[-1]
        for code, count in Counter(codes[:, -1].tolist()).items():
            terminal.setdefault(code, StateRecord()).visits += count
        self.n_paths += len(paths)
        logger.debug(f"Ingested {len(paths)} paths; index now holds {self.n_states} states")
        return self

    def merge(self, other: LayeredDag) -> LayeredDag:
        """New index holding the summed counts of both shards."""
        if other.n_nodes != self.n_nodes:
            raise InputError(
                f"Cannot merge indexes over {self.n_nodes} and {other.n_nodes} nodes", field='paths'
            )
        merged = LayeredDag(self.n_nodes)
        for source in (self, other):
            for t, level in enumerate(source.levels):
                target = merged.levels[t]
                for code, record in level.items():
                    mine = target.setdefault(code, StateRecord())
                    mine.visits += record.visits
                    for delta, count in record.edges.items():
                        mine.edges[delta] = mine.edges.get(delta, 0) + count
            merged.n_paths += source.n_paths
        return merged

    def seal(self, inst: Optional[IsingInstance] = None) -> LayeredDag:
        """
        Freeze the index. With an instance, terminal records also get their
        spin vectors and energies.
        """
        if self.n_paths == 0:
            raise InputError("Cannot seal an index without paths", field='paths')
        for t, level in enumerate(self.levels):
            total = sum(record.visits for record in level.values())
            if total != self.n_paths:
                raise LogicError(f"Level {t} holds {total} visits for {self.n_paths} paths")
        if inst is not None:
            if inst.n_nodes != self.n_nodes:
                raise InputError(
                    f"Instance has {inst.n_nodes} nodes but the index covers {self.n_nodes}", field='instance'
                )
            codes = np.array(list(self.levels[-1].keys()), dtype=powers_of_three(self.n_nodes).dtype)
            spins = spins_from_digits(digits_matrix(codes, self.n_nodes))
            for code, row, e in zip(codes.tolist(), spins, energies(inst, spins)):
                record = self.levels[-1][code]
                record.spins = tuple(int(s) for s in row)
                record.energy = float(e)
        self.sealed = True
        return self

    def record(self, state: PartialState) -> StateRecord:
        if state.n_nodes != self.n_nodes:
            raise InputError(f"State covers {state.n_nodes} nodes, index covers {self.n_nodes}", field='state')
        try:
            return self.levels[state.level][state.code]
        except KeyError:
            raise StateLookupError(f"State {state!r} was never visited by the sampled paths", state=state.assignment)

    def terminal_codes(self) -> np.ndarray:
        return np.array(sorted(self.levels[-1]), dtype=powers_of_three(self.n_nodes).dtype)

    def to_graph(self) -> LayeredGraph:
        """
        Layered graph of the visited states with empirical transition
        probabilities; ids ascending per level, edges in canonical delta order.
        """
        powers = powers_of_three(self.n_nodes)
        levels = []
        next_position = None
        for t in range(self.n_nodes, -1, -1):
            ids = sorted(self.levels[t])
            if t == self.n_nodes:
                levels.append(GraphLevel(np.array(ids, dtype=powers.dtype)))
            else:
                indptr, succ, log_prior = [0], [], []
                for code in ids:
                    record = self.levels[t][code]
                    for delta in sorted(record.edges, key=_delta_order):
                        node, spin = delta
                        succ.append(next_position[code + (1 if spin > 0 else 2) * int(powers[node])])
                        log_prior.append(np.log(record.edges[delta] / record.visits))
                    indptr.append(len(succ))
                levels.append(GraphLevel(
                    np.array(ids, dtype=powers.dtype),
                    np.array(indptr, dtype=np.int64),
                    np.array(succ, dtype=np.int64),
                    np.array(log_prior, dtype=np.float64),
                ))
            next_position = {code: i for i, code in enumerate(ids)}
        return LayeredGraph(tuple(reversed(levels)))

    def attach_values(self, graph: LayeredGraph, values: ValueTable):
        """Store log u into the value slot of every record."""
        for t, level in enumerate(graph.levels):
            for code, log_u in zip(level.ids.tolist(), values.log_u[t].tolist()):
                self.levels[t][code].log_u = log_u


def empirical_transition(dag: LayeredDag, state: PartialState) -> TransitionDistribution:
    """Edge count / visit count over the observed deltas out of ``state``."""
    if state.is_terminal:
        raise LogicError("Terminal state has no outgoing transition")
    record = dag.record(state)
    return TransitionDistribution(tuple(
        (delta, record.edges[delta] / record.visits) for delta in sorted(record.edges, key=_delta_order)
    ))


def empirical_terminal_marginal(dag: LayeredDag) -> Dict[SpinConfig, float]:
    if dag.n_paths == 0:
        raise InputError("Index holds no paths", field='paths')
    result = {}
    for code, record in dag.levels[-1].items():
        spins = record.spins or PartialState(dag.n_nodes, code).spins()
        result[spins] = record.visits / dag.n_paths
    return result


def build_index(paths: PathBatch, inst: Optional[IsingInstance] = None, shards=1) -> LayeredDag:
    """Ingest ``paths`` in ``shards`` contiguous pieces, merge them and seal."""
    bounds = np.linspace(0, len(paths), max(1, shards) + 1).astype(int)
    dag = None
    for start, stop in zip(bounds[:-1], bounds[1:]):
        shard = LayeredDag(paths.n_nodes).ingest(PathBatch(paths.nodes[start:stop], paths.spins[start:stop]))
        dag = shard if dag is None else dag.merge(shard)
    logger.info(f"Indexed {dag.n_paths} paths into {dag.n_states} states")
    return dag.seal(inst)


# -- snapshots --------------------------------------------------------------

def save_snapshot(dag: LayeredDag, path, policy_log_prob=None) -> Path:
    """
    Write a sealed index to ``.npz``: a version header, then per level the
    digit matrix of its states, visit counts and value slots, and the edge
    table (source row, node, spin, count). Optional per-edge posterior log
    probabilities, aligned with ``to_graph()`` edge order, are stored too.
    """
    if not dag.sealed:
        raise LogicError("Only a sealed LayeredDag can be snapshotted")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {'header': np.array([SNAPSHOT_VERSION, dag.n_nodes, dag.n_paths], dtype=np.int64)}
    for t, level in enumerate(dag.levels):
        codes = sorted(level)
        arrays[f'digits_{t}'] = digits_matrix(np.array(codes, dtype=powers_of_three(dag.n_nodes).dtype), dag.n_nodes)
        arrays[f'visits_{t}'] = np.array([level[c].visits for c in codes], dtype=np.int64)
        arrays[f'log_u_{t}'] = np.array([level[c].log_u for c in codes], dtype=np.float64)
        if t < dag.n_nodes:
            rows, nodes, spins, counts = [], [], [], []
            for row, code in enumerate(codes):
                for delta in sorted(level[code].edges, key=_delta_order):
                    rows.append(row)
                    nodes.append(delta[0])
                    spins.append(delta[1])
                    counts.append(level[code].edges[delta])
            arrays[f'edges_{t}'] = np.array([rows, nodes, spins, counts], dtype=np.int64).reshape(4, -1)
            if policy_log_prob is not None:
                arrays[f'policy_{t}'] = np.asarray(policy_log_prob[t], dtype=np.float64)
    with path.open('wb') as handle:
        np.savez_compressed(handle, **arrays)
    return path


def load_snapshot(path, inst: Optional[IsingInstance] = None) -> LayeredDag:
    """
    Read a snapshot back into a sealed index. Stored posterior log
    probabilities come back as ``policy_log_prob``, one array per level.
    """
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise InputError(f"Cannot read snapshot {path}: {exc}", field='path')
    with data:
        version, n_nodes, n_paths = (int(x) for x in data['header'])
        if version != SNAPSHOT_VERSION:
            raise InputError(f"Snapshot {path} has version {version}, expected {SNAPSHOT_VERSION}", field='version')
        powers = powers_of_three(n_nodes)
        dag = LayeredDag(n_nodes)
        for t in range(n_nodes + 1):
            codes = (data[f'digits_{t}'].astype(powers.dtype) @ powers).tolist()
            visits = data[f'visits_{t}'].tolist()
            log_u = data[f'log_u_{t}'].tolist()
            level = dag.levels[t]
            for code, v, lu in zip(codes, visits, log_u):
                level[code] = StateRecord(visits=v, log_u=lu)
            if t < n_nodes:
                for row, node, spin, count in data[f'edges_{t}'].T.tolist():
                    level[codes[row]].edges[(node, spin)] = count
        if 'policy_0' in data.files:
            policy = tuple(data[f'policy_{t}'] for t in range(n_nodes))
            for t, log_prob in enumerate(policy):
                n_edges = data[f'edges_{t}'].shape[1]
                if log_prob.shape != (n_edges,):
                    raise InputError(
                        f"Snapshot {path} stores {log_prob.size} policy entries for {n_edges} edges at level {t}",
                        field='policy',
                    )
            dag.policy_log_prob = policy
        dag.n_paths = n_paths
    return dag.seal(inst)
