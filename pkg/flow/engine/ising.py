"""
Ising instances: couplings, biases, energies and instance files.

Node ids are dense integers ``0..n_nodes-1``; grid nodes are numbered
row-major. Edges are stored once as ``(min, max, J)`` in sorted order and a
per-node adjacency index is built on construction.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InputError, InstanceParseError, InstanceValidationError
from . import rng as rng_streams

logger = logging.getLogger(__name__)

FILE_VERSION = 1

Edge = Tuple[int, int, float]
SpinConfig = Tuple[int, ...]


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class IsingInstance:
    """
    Undirected graph with couplings J and biases h.

    Immutable after construction; safe to share between threads.
    """
    n_nodes: int
    edges: Tuple[Edge, ...]
    h: np.ndarray
    grid: Optional[Tuple[int, int]] = None
    seed: int = 0
    adjacency: Tuple[Tuple[Tuple[int, float], ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if isinstance(self.n_nodes, bool) or not isinstance(self.n_nodes, (int, np.integer)) or self.n_nodes < 1:
            raise InstanceValidationError(
                f"n_nodes must be a positive integer, got {self.n_nodes!r}", field='n_nodes'
            )
        n_nodes = int(self.n_nodes)
        h = np.array(self.h, dtype=np.float64).reshape(-1)
        if h.shape[0] != n_nodes:
            raise InstanceValidationError(
                f"Bias vector has length {h.shape[0]} but n_nodes is {n_nodes}", field='h'
            )

        canonical = []
        seen = set()
        for position, edge in enumerate(self.edges):
            a, b, coupling = int(edge[0]), int(edge[1]), float(edge[2])
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise InstanceValidationError(
                    f"Edge {position} ({a}, {b}) references a node outside [0, {n_nodes})",
                    field='edges',
                )
            if a == b:
                raise InstanceValidationError(f"Edge {position} is a self loop on node {a}", field='edges')
            key = (min(a, b), max(a, b))
            if key in seen:
                raise InstanceValidationError(f"Duplicate edge {key}", field='edges')
            seen.add(key)
            canonical.append((key[0], key[1], coupling))
        canonical.sort(key=lambda e: (e[0], e[1]))

        neighbours = [[] for _ in range(n_nodes)]
        for a, b, coupling in canonical:
            neighbours[a].append((b, coupling))
            neighbours[b].append((a, coupling))

        object.__setattr__(self, 'n_nodes', n_nodes)
        object.__setattr__(self, 'edges', tuple(canonical))
        object.__setattr__(self, 'h', _frozen(h))
        object.__setattr__(self, 'adjacency', tuple(tuple(n) for n in neighbours))
        if self.grid is not None:
            object.__setattr__(self, 'grid', (int(self.grid[0]), int(self.grid[1])))

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_arrays(self):
        """Return ``(a, b, J)`` arrays in canonical edge order."""
        if not self.edges:
            return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.float64)
        a, b, coupling = zip(*self.edges)
        return np.array(a, np.int64), np.array(b, np.int64), np.array(coupling, np.float64)

    def coupling_matrix(self):
        """Dense symmetric coupling matrix with zero diagonal."""
        matrix = np.zeros((self.n_nodes, self.n_nodes))
        a, b, coupling = self.edge_arrays()
        matrix[a, b] = coupling
        matrix[b, a] = coupling
        return matrix


def as_spins(cfg, n_nodes) -> np.ndarray:
    """Validate a spin vector against an instance size and return it as int8."""
    spins = np.asarray(cfg)
    if spins.ndim != 1 or spins.shape[0] != n_nodes:
        raise InputError(
            f"Spin configuration has length {spins.shape[0] if spins.ndim == 1 else spins.shape} "
            f"but the instance has {n_nodes} nodes",
            field='spins',
        )
    if not np.all((spins == 1) | (spins == -1)):
        raise InputError("Spin configuration entries must be +1 or -1", field='spins')
    return spins.astype(np.int8)


def energy(inst: IsingInstance, cfg: Sequence[int]) -> float:
    """E(σ) = −Σ_(a,b) J_ab σ_a σ_b − Σ_a h_a σ_a."""
    spins = as_spins(cfg, inst.n_nodes).astype(np.float64)
    a, b, coupling = inst.edge_arrays()
    return float(-np.sum(coupling * spins[a] * spins[b]) - np.dot(inst.h, spins))


def energies(inst: IsingInstance, spins: np.ndarray) -> np.ndarray:
    """Energies of every row of an ``(m, n_nodes)`` spin matrix."""
    spins = np.asarray(spins, dtype=np.float64)
    if spins.ndim != 2 or spins.shape[1] != inst.n_nodes:
        raise InputError(
            f"Expected a spin matrix with {inst.n_nodes} columns, got shape {spins.shape}",
            field='spins',
        )
    a, b, coupling = inst.edge_arrays()
    return -(spins[:, a] * spins[:, b]) @ coupling - spins @ inst.h


def grid_edges(rows, cols):
    """Nearest-neighbour edges of a rows×cols grid with free boundaries, row-major."""
    pairs = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                pairs.append((node, node + 1))
            if r + 1 < rows:
                pairs.append((node, node + cols))
    return pairs


def random_instance(rows: int, cols: int, seed: int) -> IsingInstance:
    """
    Planar grid with J_ab and h_a drawn i.i.d. from Uniform[−1, 1].

    Draw order: one coupling per edge in canonical (sorted) edge order, then
    one bias per node, all from ``rng.instance_stream(seed)``.
    """
    if rows < 1 or cols < 1:
        raise InputError(f"Grid dimensions must be at least 1x1, got {rows}x{cols}", field='grid')
    pairs = sorted(grid_edges(rows, cols))
    stream = rng_streams.instance_stream(seed)
    couplings = stream.uniform(-1.0, 1.0, size=len(pairs))
    biases = stream.uniform(-1.0, 1.0, size=rows * cols)
    edges = tuple((a, b, float(j)) for (a, b), j in zip(pairs, couplings))
    logger.debug(f"Generated {rows}x{cols} instance with seed {seed}")
    return IsingInstance(n_nodes=rows * cols, edges=edges, h=biases, grid=(rows, cols), seed=int(seed))


def random_tree_instance(n_nodes: int, seed: int) -> IsingInstance:
    """
    Random recursive tree: node ``i > 0`` hangs off a uniformly chosen node
    ``< i``. Parents are drawn first, then couplings and biases as in
    ``random_instance``.
    """
    if n_nodes < 1:
        raise InputError(f"A tree needs at least one node, got {n_nodes}", field='n_nodes')
    stream = rng_streams.instance_stream(seed)
    pairs = sorted((int(stream.integers(0, i)), i) for i in range(1, n_nodes))
    couplings = stream.uniform(-1.0, 1.0, size=len(pairs))
    biases = stream.uniform(-1.0, 1.0, size=n_nodes)
    edges = tuple((a, b, float(j)) for (a, b), j in zip(pairs, couplings))
    logger.debug(f"Generated {n_nodes}-node tree instance with seed {seed}")
    return IsingInstance(n_nodes=n_nodes, edges=edges, h=biases, grid=None, seed=int(seed))


def instance_to_document(inst: IsingInstance) -> dict:
    return {
        'version': FILE_VERSION,
        'n_nodes': inst.n_nodes,
        'grid': {'rows': inst.grid[0], 'cols': inst.grid[1]} if inst.grid else None,
        'edges': [[a, b, j] for a, b, j in inst.edges],
        'h': [float(x) for x in inst.h],
        'seed': int(inst.seed),
    }


def instance_from_document(document) -> IsingInstance:
    """Validate a decoded instance document and build the instance."""
    from ..serializers import IsingInstanceSerializer

    serializer = IsingInstanceSerializer(data=document)
    return serializer.build_instance()


def save_instance(inst: IsingInstance, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-based float formatting keeps full round-trip precision
    path.write_text(json.dumps(instance_to_document(inst), indent=2) + '\n')
    return path


def load_instance(path) -> IsingInstance:
    path = Path(path)
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: not a valid instance document ({exc.msg} at line {exc.lineno})")
    except OSError as exc:
        raise InputError(f"Cannot read instance file {path}: {exc.strerror}", field='path')
    return instance_from_document(document)
