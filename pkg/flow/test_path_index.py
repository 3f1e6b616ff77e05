"""
Unit tests for the empirical path index.
"""
import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .engine.ising import IsingInstance, energy, random_instance
from .engine.path_index import (
    LayeredDag, build_index, empirical_terminal_marginal, empirical_transition, load_snapshot,
    save_snapshot,
)
from .engine.prior import PathBatch, PathRecord, prior_transition, sample_paths
from .engine.states import PartialState
from .exceptions import InputError, LogicError, StateLookupError


def counts_of(dag):
    return [
        {code: (record.visits, dict(record.edges)) for code, record in level.items()}
        for level in dag.levels
    ]


class IngestTest(SimpleTestCase):
    """Test count aggregation."""

    def setUp(self):
        self.inst = random_instance(2, 2, seed=3)
        self.paths = sample_paths(self.inst, 400, seed=5, threads=1)

    def test_single_path(self):
        """Test that one path gives unit counts and one-hot transitions."""
        record = next(self.paths.records())
        dag = LayeredDag(4).ingest([record]).seal(self.inst)
        for t, state in enumerate(record.states):
            self.assertEqual(dag.record(state).visits, 1)
            if t < 4:
                self.assertEqual(empirical_transition(dag, state).as_dict(), {record.deltas[t]: 1.0})

    def test_conservation_across_levels(self):
        dag = build_index(self.paths, self.inst)
        for level in dag.levels:
            self.assertEqual(sum(r.visits for r in level.values()), 400)

    def test_edge_counts_sum_to_visits(self):
        dag = build_index(self.paths, self.inst)
        for level in dag.levels[:-1]:
            for record in level.values():
                self.assertEqual(sum(record.edges.values()), record.visits)

    def test_level_keys_have_level_assignments(self):
        dag = build_index(self.paths, self.inst)
        for t, level in enumerate(dag.levels):
            for code in level:
                self.assertEqual(PartialState(4, code).level, t)

    def test_merge_equals_single_pass(self):
        """Test that merging disjoint shards equals ingesting their concatenation."""
        first = PathBatch(self.paths.nodes[:150], self.paths.spins[:150])
        second = PathBatch(self.paths.nodes[150:], self.paths.spins[150:])
        merged = LayeredDag(4).ingest(first).merge(LayeredDag(4).ingest(second))
        whole = LayeredDag(4).ingest(self.paths)
        self.assertEqual(merged.n_paths, whole.n_paths)
        self.assertEqual(counts_of(merged), counts_of(whole))

    def test_shard_count_does_not_matter(self):
        one = build_index(self.paths, self.inst, shards=1)
        five = build_index(self.paths, self.inst, shards=5)
        self.assertEqual(counts_of(one), counts_of(five))

    def test_records_of_wrong_length(self):
        with self.assertRaises(InputError):
            LayeredDag(4).ingest([PathRecord(3, (0, 1, 2), (1, 1, 1))])

    def test_sealed_index_is_read_only(self):
        dag = build_index(self.paths, self.inst)
        with self.assertRaises(LogicError):
            dag.ingest(self.paths)

    def test_seal_without_paths(self):
        with self.assertRaises(InputError):
            LayeredDag(2).seal()

    def test_terminal_records_carry_energy(self):
        dag = build_index(self.paths, self.inst)
        for record in dag.levels[-1].values():
            self.assertAlmostEqual(record.energy, energy(self.inst, record.spins), places=12)


class EmpiricalTransitionTest(SimpleTestCase):
    """Test empirical transition probabilities."""

    def test_count_ratio(self):
        """Test that counts (3, 1) over two deltas give (0.75, 0.25)."""
        records = [PathRecord(1, (0,), (1,))] * 3 + [PathRecord(1, (0,), (-1,))]
        dag = LayeredDag(1).ingest(records).seal()
        dist = empirical_transition(dag, PartialState.empty(1))
        self.assertEqual(dist.as_dict(), {(0, 1): 0.75, (0, -1): 0.25})

    def test_unvisited_state(self):
        dag = LayeredDag(2).ingest([PathRecord(2, (0, 1), (1, 1))]).seal()
        with self.assertRaises(StateLookupError):
            empirical_transition(dag, PartialState.from_assignment(2, {1: -1}))

    def test_terminal_state(self):
        dag = LayeredDag(1).ingest([PathRecord(1, (0,), (1,))]).seal()
        with self.assertRaises(LogicError):
            empirical_transition(dag, PartialState.from_assignment(1, {0: 1}))

    def test_support_within_prior_support(self):
        inst = random_instance(2, 2, seed=8)
        dag = build_index(sample_paths(inst, 300, seed=1, threads=1), inst)
        for t, level in enumerate(dag.levels[:-1]):
            for code in level:
                state = PartialState(4, code)
                prior_support = set(prior_transition(inst, state).deltas)
                self.assertTrue(set(empirical_transition(dag, state).deltas) <= prior_support)

    def test_converges_to_prior(self):
        """Test the root transition of a 2-node instance at K = 10^5."""
        inst = IsingInstance(n_nodes=2, edges=((0, 1, 0.5),), h=(0.3, -0.6))
        n_paths = 100_000
        dag = build_index(sample_paths(inst, n_paths, seed=4), inst)
        empirical = empirical_transition(dag, PartialState.empty(2)).as_dict()
        for delta, p in prior_transition(inst, PartialState.empty(2)).options:
            standard_error = math.sqrt(p * (1 - p) / n_paths)
            self.assertLess(abs(empirical[delta] - p), 4 * standard_error)


class EmpiricalMarginalTest(SimpleTestCase):
    """Test empirical terminal marginals."""

    def test_identical_paths_give_one_atom(self):
        dag = LayeredDag(2).ingest([PathRecord(2, (1, 0), (-1, 1))] * 7).seal()
        self.assertEqual(empirical_terminal_marginal(dag), {(1, -1): 1.0})

    def test_sums_to_one(self):
        inst = random_instance(2, 3, seed=2)
        dag = build_index(sample_paths(inst, 500, seed=3, threads=1), inst)
        self.assertAlmostEqual(sum(empirical_terminal_marginal(dag).values()), 1.0, delta=1e-12)

    def test_single_node_binomial(self):
        """Test a 1-node, h=0 instance against the binomial oracle."""
        inst = IsingInstance(n_nodes=1, edges=(), h=(0.0,))
        n_paths = 10_000
        marginal = empirical_terminal_marginal(build_index(sample_paths(inst, n_paths, seed=6), inst))
        standard_error = math.sqrt(0.25 / n_paths)
        for cfg in [(1,), (-1,)]:
            self.assertLess(abs(marginal[cfg] - 0.5), 4 * standard_error)


class GraphExportTest(SimpleTestCase):
    """Test conversion of the index into a layered graph."""

    def test_graph_is_valid_and_matches_counts(self):
        inst = random_instance(2, 2, seed=4)
        dag = build_index(sample_paths(inst, 250, seed=9, threads=1), inst)
        graph = dag.to_graph()
        graph.validate()
        self.assertEqual([level.size for level in graph.levels], [len(level) for level in dag.levels])
        root = PartialState.empty(4)
        expected = empirical_transition(dag, root).probabilities
        np.testing.assert_allclose(np.exp(graph.levels[0].log_prior), expected, rtol=1e-14)

    def test_ids_are_sorted_codes(self):
        inst = random_instance(2, 2, seed=4)
        graph = build_index(sample_paths(inst, 250, seed=9, threads=1), inst).to_graph()
        for level in graph.levels:
            self.assertEqual(level.ids.tolist(), sorted(level.ids.tolist()))


class SnapshotTest(SimpleTestCase):
    """Test binary snapshots of a sealed index."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)
        self.inst = random_instance(2, 2, seed=4)
        self.dag = build_index(sample_paths(self.inst, 300, seed=2, threads=1), self.inst)

    def tearDown(self):
        self.tmp.cleanup()

    def test_snapshot_preserves_counts(self):
        path = save_snapshot(self.dag, self.dir / 'index.npz')
        loaded = load_snapshot(path, self.inst)
        self.assertEqual(loaded.n_paths, 300)
        self.assertEqual(counts_of(loaded), counts_of(self.dag))
        self.assertTrue(loaded.sealed)
        self.assertIsNone(loaded.policy_log_prob)

    def test_policy_with_wrong_edge_count(self):
        policy = [np.zeros(len(level.log_prior) + 1) for level in self.dag.to_graph().levels[:-1]]
        path = save_snapshot(self.dag, self.dir / 'index.npz', policy_log_prob=policy)
        with self.assertRaises(InputError) as ctx:
            load_snapshot(path, self.inst)
        self.assertEqual(ctx.exception.field, 'policy')

    def test_unsealed_index_cannot_be_saved(self):
        dag = LayeredDag(1).ingest([PathRecord(1, (0,), (1,))])
        with self.assertRaises(LogicError):
            save_snapshot(dag, self.dir / 'index.npz')

    def test_version_mismatch(self):
        path = self.dir / 'old.npz'
        np.savez(path, header=np.array([99, 1, 1]))
        with self.assertRaises(InputError) as ctx:
            load_snapshot(path)
        self.assertEqual(ctx.exception.field, 'version')

    def test_unreadable_file(self):
        path = self.dir / 'garbage.npz'
        path.write_bytes(b'not an archive')
        with self.assertRaises(InputError):
            load_snapshot(path)
