"""
Partial spin assignments packed into ternary codes.

Digit ``a`` of a code (base 3, node 0 least significant) is 0 when node ``a``
is unassigned, 1 for spin +1 and 2 for spin −1. Two histories that assign the
same (node, spin) pairs in a different order map to the same code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np

from ..exceptions import InputError, LogicError

UNASSIGNED, PLUS, MINUS = 0, 1, 2

# int64 codes hold up to 39 nodes (3**39 < 2**63)
MAX_INT64_NODES = 39


def spin_digit(spin):
    return PLUS if spin > 0 else MINUS


def powers_of_three(n_nodes):
    dtype = np.int64 if n_nodes <= MAX_INT64_NODES else object
    return np.array([3 ** a for a in range(n_nodes)], dtype=dtype)


@dataclass(frozen=True)
class PartialState:
    """
    Unordered partial assignment of spins; the MDP state at level ``t``.

    Hashable and ordered by its canonical code.
    """
    n_nodes: int
    code: int = 0

    @classmethod
    def empty(cls, n_nodes):
        return cls(n_nodes, 0)

    @classmethod
    def from_assignment(cls, n_nodes, assignment: Dict[int, int] | Iterable[Tuple[int, int]]):
        items = assignment.items() if isinstance(assignment, dict) else assignment
        code = 0
        seen = set()
        for node, spin in items:
            node = int(node)
            if not 0 <= node < n_nodes:
                raise InputError(f"Node {node} is outside [0, {n_nodes})", field='assignment')
            if spin not in (1, -1):
                raise InputError(f"Spin for node {node} must be +1 or -1, got {spin}", field='assignment')
            if node in seen:
                raise InputError(f"Node {node} is assigned twice", field='assignment')
            seen.add(node)
            code += spin_digit(spin) * 3 ** node
        return cls(n_nodes, code)

    @property
    def digits(self) -> Tuple[int, ...]:
        code, digits = self.code, []
        for _ in range(self.n_nodes):
            code, digit = divmod(code, 3)
            digits.append(digit)
        return tuple(digits)

    @property
    def assignment(self) -> Dict[int, int]:
        """Assigned spins keyed by node id, sorted by node."""
        return {node: (1 if d == PLUS else -1) for node, d in enumerate(self.digits) if d != UNASSIGNED}

    @property
    def level(self) -> int:
        return sum(1 for d in self.digits if d != UNASSIGNED)

    @property
    def is_terminal(self) -> bool:
        return self.level == self.n_nodes

    def is_assigned(self, node) -> bool:
        return (self.code // 3 ** node) % 3 != UNASSIGNED

    def extend(self, node, spin) -> PartialState:
        if self.is_assigned(node):
            raise LogicError(f"Node {node} is already assigned in state {self.assignment}")
        return PartialState(self.n_nodes, self.code + spin_digit(spin) * 3 ** node)

    def spins(self) -> Tuple[int, ...]:
        """Spin vector of a terminal state."""
        if not self.is_terminal:
            raise LogicError(f"State at level {self.level} is not a complete assignment")
        return tuple(1 if d == PLUS else -1 for d in self.digits)

    def __lt__(self, other):
        return self.code < other.code

    def __repr__(self):
        return f"PartialState(level={self.level}, assignment={self.assignment})"


def delta_between(n_nodes, code_from, code_to) -> Tuple[int, int]:
    """The single (node, spin) that extends ``code_from`` to ``code_to``."""
    diff = int(code_to) - int(code_from)
    if diff > 0:
        node = 0
        while diff % 3 == 0:
            diff //= 3
            node += 1
        if diff in (PLUS, MINUS) and node < n_nodes and (int(code_from) // 3 ** node) % 3 == UNASSIGNED:
            return node, (1 if diff == PLUS else -1)
    raise LogicError(f"Codes {code_from} and {code_to} do not differ by one assignment")


def digits_matrix(codes, n_nodes) -> np.ndarray:
    """Ternary digits of many codes as an ``(m, n_nodes)`` int8 matrix."""
    codes = np.asarray(codes)
    digits = np.empty((codes.shape[0], n_nodes), dtype=np.int8)
    remaining = codes.copy()
    for node in range(n_nodes):
        digits[:, node] = remaining % 3
        remaining = remaining // 3
    return digits


def spins_from_digits(digits) -> np.ndarray:
    """Map digits to spins: +1, −1, and 0 for unassigned nodes."""
    digits = np.asarray(digits)
    return np.where(digits == PLUS, 1, np.where(digits == MINUS, -1, 0)).astype(np.int8)


def codes_from_spins(spins) -> np.ndarray:
    """Codes of complete assignments given as an ``(m, n_nodes)`` ±1 matrix."""
    spins = np.asarray(spins)
    digits = np.where(spins > 0, PLUS, MINUS)
    return digits.astype(powers_of_three(spins.shape[1]).dtype) @ powers_of_three(spins.shape[1])
