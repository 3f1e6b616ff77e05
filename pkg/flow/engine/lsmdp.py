"""
Linearly solvable MDPs on layered DAGs.

A ``LayeredGraph`` stores, for every level ``t < T``, the outgoing edges of
its states in CSR form (``indptr``/``succ``) together with the log prior
transition probabilities. ``LsMdpProblem`` attaches per-state energies. The
desirability ``u_t = exp(−Ψ_t)`` obeys the backward linear recurrence

    u_T(s) = exp(−E_T(s))
    u_t(s) = exp(−E_t(s)) · Σ_s' p_t(s'|s) u_{t+1}(s')

and the optimal policy is ``p*_t(s'|s) ∝ p_t(s'|s) u_{t+1}(s')``. Everything
is evaluated in log space. Forbidden states carry an explicit mask instead of
an infinite energy, so no ``inf − inf`` is ever formed.

The solver does not care where the graph came from: the exact prior DAG and
the empirical path index feed the same code.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, rel_entr

from ..exceptions import (
    DegeneracyError, InputError, ProblemParseError, StateLookupError, StructuralError,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class GraphLevel:
    """States of one level and, below the horizon, their outgoing edges."""
    ids: np.ndarray
    indptr: Optional[np.ndarray] = None
    succ: Optional[np.ndarray] = None
    log_prior: Optional[np.ndarray] = None

    @property
    def size(self):
        return len(self.ids)

    @property
    def n_edges(self):
        return 0 if self.succ is None else len(self.succ)

    @property
    def counts(self):
        return np.diff(self.indptr)

    @property
    def rows(self):
        """Source state index of every edge."""
        return np.repeat(np.arange(self.size), self.counts)

    def padded(self, values, fill):
        """Lay edge values out as a ``(size, max_out_degree)`` matrix."""
        counts = self.counts
        width = int(counts.max()) if self.size else 0
        matrix = np.full((self.size, width), fill, dtype=np.float64)
        cols = np.arange(self.n_edges) - np.repeat(self.indptr[:-1], counts)
        matrix[self.rows, cols] = values
        return matrix


def segment_logsumexp(level: GraphLevel, values) -> np.ndarray:
    """log Σ exp(values) over the outgoing edges of each state."""
    with np.errstate(divide='ignore'):
        return logsumexp(level.padded(values, -np.inf), axis=1)


@dataclass(frozen=True, eq=False)
class LayeredGraph:
    """Level-indexed state graph with prior transitions between consecutive levels."""
    levels: Tuple[GraphLevel, ...]
    _lookup: Dict[int, Dict] = field(default_factory=dict, init=False, repr=False)

    @property
    def horizon(self):
        return len(self.levels) - 1

    @property
    def n_states(self):
        return sum(level.size for level in self.levels)

    def index(self, level, state_id):
        """Position of ``state_id`` within ``level``."""
        if level not in self._lookup:
            self._lookup[level] = {
                (sid.item() if hasattr(sid, 'item') else sid): i
                for i, sid in enumerate(self.levels[level].ids)
            }
        try:
            return self._lookup[level][state_id]
        except KeyError:
            raise StateLookupError(f"State {state_id!r} is not present at level {level}", state=state_id)

    def successors(self, level, position):
        """(successor position, log prior) pairs of one state."""
        lvl = self.levels[level]
        start, stop = lvl.indptr[position], lvl.indptr[position + 1]
        return list(zip(lvl.succ[start:stop].tolist(), lvl.log_prior[start:stop].tolist()))

    def validate(self, tolerance=ROW_SUM_TOLERANCE):
        """Raise StructuralError unless this is a well-formed layered prior."""
        if not self.levels:
            raise StructuralError("Graph has no levels")
        for t, level in enumerate(self.levels[:-1]):
            if level.indptr is None or len(level.indptr) != level.size + 1:
                raise StructuralError(f"Level {t} has no edge table")
            dead_ends = np.flatnonzero(level.counts == 0)
            if dead_ends.size:
                state = level.ids[dead_ends[0]]
                raise StructuralError(
                    f"State {state!r} at level {t} has no outgoing edges before the horizon", state=state
                )
            if level.n_edges and (level.succ.min() < 0 or level.succ.max() >= self.levels[t + 1].size):
                raise StructuralError(f"Level {t} has edges pointing outside level {t + 1}")
            if not np.all(np.isfinite(level.log_prior)):
                raise StructuralError(f"Level {t} has an edge with zero prior probability")
            row_sums = segment_logsumexp(level, level.log_prior)
            bad = np.flatnonzero(np.abs(row_sums) > tolerance)
            if bad.size:
                state = level.ids[bad[0]]
                raise StructuralError(
                    f"Prior transitions of state {state!r} at level {t} sum to {np.exp(row_sums[bad[0]])}",
                    state=state,
                )
        if self.levels[-1].indptr is not None and self.levels[-1].n_edges:
            raise StructuralError("Terminal level must not have outgoing edges")

    def same_structure(self, other: LayeredGraph) -> bool:
        if other is self:
            return True
        if len(other.levels) != len(self.levels):
            return False
        for mine, theirs in zip(self.levels, other.levels):
            if mine.size != theirs.size or not np.array_equal(mine.ids, theirs.ids):
                return False
            if mine.indptr is None:
                continue
            if not (np.array_equal(mine.indptr, theirs.indptr) and np.array_equal(mine.succ, theirs.succ)):
                return False
        return True


@dataclass(frozen=True, eq=False)
class LsMdpProblem:
    """Prior graph plus per-state energies E_t (zero unless given) and forbidden markers."""
    graph: LayeredGraph
    energies: Tuple[np.ndarray, ...]
    forbidden: Tuple[np.ndarray, ...]

    def __post_init__(self):
        self.graph.validate()
        if len(self.energies) != len(self.graph.levels) or len(self.forbidden) != len(self.graph.levels):
            raise InputError("Energies must be given for every level", field='energies')
        for t, (level, e, f) in enumerate(zip(self.graph.levels, self.energies, self.forbidden)):
            if len(e) != level.size or len(f) != level.size:
                raise InputError(f"Energy vector of level {t} does not match its state count", field='energies')
            if not np.all(np.isfinite(np.asarray(e)[~np.asarray(f, dtype=bool)])):
                raise InputError(
                    f"Level {t} has a non-finite energy; mark such states as forbidden", field='energies'
                )

    @classmethod
    def with_terminal_energies(cls, graph: LayeredGraph, terminal_energy, forbidden=None):
        """Zero energies below the horizon, the given ones at level T."""
        energies = [np.zeros(level.size) for level in graph.levels]
        masks = [np.zeros(level.size, dtype=bool) for level in graph.levels]
        energies[-1] = np.asarray(terminal_energy, dtype=np.float64)
        if forbidden is not None:
            masks[-1] = np.asarray(forbidden, dtype=bool)
            energies[-1] = np.where(masks[-1], 0.0, energies[-1])
        return cls(graph, tuple(energies), tuple(masks))

    @property
    def horizon(self):
        return self.graph.horizon

    def log_weight(self, t):
        """−E_t, with −inf on forbidden states."""
        return np.where(self.forbidden[t], -np.inf, -np.asarray(self.energies[t], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class ValueTable:
    """Per-state log desirabilities log u_t(s)."""
    log_u: Tuple[np.ndarray, ...]

    def psi(self, level, position):
        """Optimal cost-to-go Ψ_t(s) = −log u_t(s)."""
        return -float(self.log_u[level][position])

    def root_costs(self):
        return -self.log_u[0]


@dataclass(frozen=True, eq=False)
class PosteriorPolicy:
    """Per-state categorical transitions aligned with the edges of ``graph``."""
    graph: LayeredGraph
    log_prob: Tuple[np.ndarray, ...]
    dead: Tuple[np.ndarray, ...] = ()
    values: Optional[ValueTable] = None

    @classmethod
    def from_prior(cls, graph: LayeredGraph):
        return cls(graph, tuple(level.log_prior for level in graph.levels[:-1]))

    @property
    def horizon(self):
        return self.graph.horizon

    def probabilities(self, level):
        return np.exp(self.log_prob[level])

    def distribution(self, level, state_id) -> List[Tuple[object, float]]:
        """(successor id, probability) pairs out of one state."""
        if level >= self.horizon:
            raise InputError(f"Level {level} is terminal and has no transitions", field='level')
        position = self.graph.index(level, state_id)
        lvl = self.graph.levels[level]
        start, stop = lvl.indptr[position], lvl.indptr[position + 1]
        next_ids = self.graph.levels[level + 1].ids
        probs = np.exp(self.log_prob[level][start:stop])
        return [
            (next_ids[s].item() if hasattr(next_ids[s], 'item') else next_ids[s], float(p))
            for s, p in zip(lvl.succ[start:stop], probs)
        ]


def backward_values(prob: LsMdpProblem) -> ValueTable:
    """Backward sweep of the linear recurrence, level by level, in log space."""
    graph = prob.graph
    log_u: List[Optional[np.ndarray]] = [None] * len(graph.levels)
    log_u[-1] = prob.log_weight(graph.horizon)
    for t in range(graph.horizon - 1, -1, -1):
        level = graph.levels[t]
        incoming = level.log_prior + log_u[t + 1][level.succ]
        log_u[t] = segment_logsumexp(level, incoming) + prob.log_weight(t)
    logger.debug(f"Backward sweep over {graph.n_states} states, horizon {graph.horizon}")
    return ValueTable(tuple(log_u))


def optimal_policy(prob: LsMdpProblem, values: ValueTable) -> PosteriorPolicy:
    """
    p*_t(s'|s) = p_t(s'|s) u_{t+1}(s') / Σ_s'' p_t(s''|s) u_{t+1}(s'').

    States whose successors all have zero desirability cannot be reached by
    the optimal policy from a live root; their rows are left at zero and
    flagged in ``dead``. Dead roots are flagged the same way; only a
    problem whose every root is dead has no optimal policy.
    """
    graph = prob.graph
    log_prob, dead = [], []
    for t in range(graph.horizon):
        level = graph.levels[t]
        incoming = level.log_prior + values.log_u[t + 1][level.succ]
        normaliser = segment_logsumexp(level, incoming)
        is_dead = ~np.isfinite(normaliser)
        if t == 0 and np.all(is_dead):
            state = level.ids[0]
            raise DegeneracyError(
                f"Every successor of root {state!r} has zero desirability; no policy reaches a finite-energy terminal",
                state=state,
            )
        rows = level.rows
        with np.errstate(invalid='ignore'):
            edge_log_prob = incoming - normaliser[rows]
        edge_log_prob[is_dead[rows]] = -np.inf
        log_prob.append(edge_log_prob)
        dead.append(is_dead)
        if np.any(is_dead):
            logger.debug(f"Level {t}: {int(is_dead.sum())} states with zero desirability")
    return PosteriorPolicy(graph, tuple(log_prob), tuple(dead), values)


def marginals(graph: LayeredGraph, log_prob: Sequence[np.ndarray], root=0) -> List[np.ndarray]:
    """Forward propagation π_{t+1}(s') = Σ_s p_t(s'|s) π_t(s), starting from δ(root)."""
    pi = np.zeros(graph.levels[0].size)
    pi[root] = 1.0
    result = [pi]
    for t in range(graph.horizon):
        level = graph.levels[t]
        flow = pi[level.rows] * np.exp(log_prob[t])
        pi = np.bincount(level.succ, weights=flow, minlength=graph.levels[t + 1].size)
        result.append(pi)
    return result


def cost(prob: LsMdpProblem, policy: PosteriorPolicy, root=0) -> float:
    """
    Σ_t Σ_s π_t(s) E_t(s) + Σ_t Σ_s π_t(s) Σ_s' p_t(s'|s) log(p_t(s'|s) / p_prior_t(s'|s)),
    with π propagated from δ(root) under ``policy``.
    """
    if not prob.graph.same_structure(policy.graph):
        raise InputError("Policy has transitions outside the prior support", field='policy')
    graph = prob.graph
    pi_levels = marginals(graph, policy.log_prob, root)
    total = 0.0
    for t, pi in enumerate(pi_levels):
        occupied = pi > 0
        if np.any(occupied & prob.forbidden[t]):
            return float('inf')
        total += float(np.dot(pi[occupied], np.asarray(prob.energies[t])[occupied]))
        if t < graph.horizon:
            level = graph.levels[t]
            p = np.exp(policy.log_prob[t])
            prior = np.exp(level.log_prior)
            total += float(np.sum(pi[level.rows] * rel_entr(p, prior)))
    return total


# -- plain-text problem format ---------------------------------------------
#
#   # comment
#   state <level> <id> <energy | inf>
#   edge <from-id> <to-id> <prior probability>

def parse_problem(text: str) -> LsMdpProblem:
    states: Dict[str, Tuple[int, float, bool, int]] = {}
    order: Dict[int, List[str]] = {}
    edges: Dict[str, List[Tuple[str, float, int]]] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0].lower()
        if kind == 'state':
            if len(tokens) != 4:
                raise ProblemParseError("expected 'state <level> <id> <energy>'", line=lineno)
            level = _parse_int(tokens[1], 'level', lineno)
            if level < 0:
                raise ProblemParseError(f"level must be non-negative, got {level}", line=lineno)
            state_id = tokens[2]
            if state_id in states:
                raise ProblemParseError(f"state '{state_id}' declared twice", line=lineno)
            forbidden = tokens[3].lower() in ('inf', '+inf', 'forbidden')
            energy = 0.0 if forbidden else _parse_float(tokens[3], 'energy', lineno)
            states[state_id] = (level, energy, forbidden, lineno)
            order.setdefault(level, []).append(state_id)
        elif kind == 'edge':
            if len(tokens) != 4:
                raise ProblemParseError("expected 'edge <from> <to> <probability>'", line=lineno)
            probability = _parse_float(tokens[3], 'probability', lineno)
            if not probability > 0:
                raise ProblemParseError(f"prior probability must be positive, got {tokens[3]}", line=lineno)
            edges.setdefault(tokens[1], []).append((tokens[2], probability, lineno))
        else:
            raise ProblemParseError(f"unknown record '{tokens[0]}'", line=lineno)

    if not states:
        raise ProblemParseError("no states declared")
    horizon = max(order)
    for level in range(horizon + 1):
        if level not in order:
            raise StructuralError(f"level {level} has no states")

    position = {sid: order[states[sid][0]].index(sid) for sid in states}
    levels = []
    for level in range(horizon + 1):
        ids = np.array(order[level], dtype=object)
        if level == horizon:
            levels.append(GraphLevel(ids))
            continue
        indptr, succ, log_prior = [0], [], []
        for sid in order[level]:
            out = edges.get(sid, [])
            if not out:
                raise StructuralError(
                    f"state '{sid}' at level {level} has no outgoing edges", state=sid, line=states[sid][3]
                )
            seen = set()
            for target, probability, lineno in out:
                if target not in states:
                    raise StructuralError(f"edge to undeclared state '{target}'", line=lineno)
                if states[target][0] != level + 1:
                    raise StructuralError(
                        f"edge {sid} -> {target} does not go from level {level} to level {level + 1}",
                        line=lineno,
                    )
                if target in seen:
                    raise StructuralError(f"duplicate edge {sid} -> {target}", line=lineno)
                seen.add(target)
                succ.append(position[target])
                log_prior.append(np.log(probability))
            total = sum(p for _, p, _ in out)
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise StructuralError(
                    f"prior probabilities out of '{sid}' sum to {total}", state=sid, line=states[sid][3]
                )
            indptr.append(len(succ))
        levels.append(GraphLevel(ids, np.array(indptr), np.array(succ, dtype=np.int64), np.array(log_prior)))
    for sid, out in edges.items():
        if sid not in states:
            raise StructuralError(f"edge from undeclared state '{sid}'", line=out[0][2])
        if states[sid][0] == horizon:
            raise StructuralError(f"terminal state '{sid}' has outgoing edges", line=out[0][2])

    graph = LayeredGraph(tuple(levels))
    energies = tuple(np.array([states[s][1] for s in order[t]]) for t in range(horizon + 1))
    forbidden = tuple(np.array([states[s][2] for s in order[t]], dtype=bool) for t in range(horizon + 1))
    return LsMdpProblem(graph, energies, forbidden)


def _parse_int(token, name, lineno):
    try:
        return int(token)
    except ValueError:
        raise ProblemParseError(f"{name} must be an integer, got '{token}'", line=lineno)


def _parse_float(token, name, lineno):
    try:
        value = float(token)
    except ValueError:
        raise ProblemParseError(f"{name} must be a real number, got '{token}'", line=lineno)
    if not np.isfinite(value):
        raise ProblemParseError(f"{name} must be finite, got '{token}'", line=lineno)
    return value


def format_problem(prob: LsMdpProblem) -> str:
    lines = []
    graph = prob.graph
    for t, level in enumerate(graph.levels):
        for i, sid in enumerate(level.ids):
            energy = 'inf' if prob.forbidden[t][i] else repr(float(prob.energies[t][i]))
            lines.append(f"state {t} {sid} {energy}")
    for t, level in enumerate(graph.levels[:-1]):
        next_ids = graph.levels[t + 1].ids
        for i, sid in enumerate(level.ids):
            for s, lp in graph.successors(t, i):
                lines.append(f"edge {sid} {next_ids[s]} {float(np.exp(lp))!r}")
    return '\n'.join(lines) + '\n'


def format_policy(policy: PosteriorPolicy) -> str:
    lines = []
    graph = policy.graph
    if policy.values is not None:
        for t, level in enumerate(graph.levels):
            for i, sid in enumerate(level.ids):
                lines.append(f"value {t} {sid} {float(policy.values.log_u[t][i])!r}")
    for t, level in enumerate(graph.levels[:-1]):
        next_ids = graph.levels[t + 1].ids
        probs = policy.probabilities(t)
        for i, sid in enumerate(level.ids):
            for e in range(level.indptr[i], level.indptr[i + 1]):
                lines.append(f"policy {sid} {next_ids[level.succ[e]]} {float(probs[e])!r}")
    return '\n'.join(lines) + '\n'
