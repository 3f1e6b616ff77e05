"""
Unit tests for Ising instances, energies and instance files.
"""
import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from .engine.ising import (
    IsingInstance, energies, energy, grid_edges, instance_to_document, load_instance,
    random_instance, random_tree_instance, save_instance,
)
from .exceptions import InputError, InstanceParseError, InstanceValidationError


def chain(coupling=0.5, h=(0.0, 0.0)):
    return IsingInstance(n_nodes=2, edges=((0, 1, coupling),), h=h)


class EnergyTest(SimpleTestCase):
    """Test energy evaluation."""

    def test_aligned_ferromagnetic_pair(self):
        """Test that an aligned pair with J=1 has energy -1."""
        inst = IsingInstance(n_nodes=2, edges=((0, 1, 1.0),), h=(0.0, 0.0))
        self.assertEqual(energy(inst, (1, 1)), -1.0)

    def test_zero_field_is_zero_everywhere(self):
        """Test that J=0, h=0 gives zero energy for every configuration."""
        inst = IsingInstance(n_nodes=3, edges=((0, 1, 0.0), (1, 2, 0.0)), h=np.zeros(3))
        for cfg in [(1, 1, 1), (1, -1, 1), (-1, -1, 1), (-1, -1, -1)]:
            self.assertEqual(energy(inst, cfg), 0.0)

    def test_hand_evaluated_chain(self):
        """Test the 2-node chain J=0.5, h=(0.3, -0.2) at (+1, -1)."""
        inst = chain(0.5, (0.3, -0.2))
        self.assertAlmostEqual(energy(inst, (1, -1)), 0.0, places=15)

    def test_endpoint_order_does_not_matter(self):
        """Test that (a, b) and (b, a) describe the same coupling."""
        forward = IsingInstance(n_nodes=3, edges=((0, 1, 0.4), (1, 2, -0.7)), h=(0.1, 0.2, 0.3))
        backward = IsingInstance(n_nodes=3, edges=((1, 0, 0.4), (2, 1, -0.7)), h=(0.1, 0.2, 0.3))
        self.assertEqual(forward.edges, backward.edges)
        for cfg in [(1, 1, -1), (-1, 1, 1), (1, -1, -1)]:
            self.assertEqual(energy(forward, cfg), energy(backward, cfg))

    def test_global_flip_without_bias(self):
        """Test that flipping every spin leaves the energy unchanged when h=0."""
        inst = random_instance(2, 3, seed=4)
        inst = IsingInstance(n_nodes=inst.n_nodes, edges=inst.edges, h=np.zeros(inst.n_nodes))
        cfg = np.array([1, -1, -1, 1, 1, -1])
        self.assertAlmostEqual(energy(inst, cfg), energy(inst, -cfg), places=12)

    def test_flip_pair_sums_to_twice_the_coupling_term(self):
        """Test that E(s) + E(-s) equals twice the coupling part of the energy."""
        inst = random_instance(3, 3, seed=11)
        rng = np.random.default_rng(0)
        a, b, coupling = inst.edge_arrays()
        for _ in range(5):
            cfg = rng.choice([-1, 1], size=inst.n_nodes)
            coupling_term = -np.sum(coupling * cfg[a] * cfg[b])
            self.assertAlmostEqual(energy(inst, cfg) + energy(inst, -cfg), 2 * coupling_term, places=12)

    def test_batch_energies_match_single_evaluation(self):
        """Test that the vectorised energies agree with energy()."""
        inst = random_instance(2, 2, seed=3)
        spins = np.array([[1, 1, 1, 1], [1, -1, -1, 1], [-1, -1, -1, 1]])
        expected = [energy(inst, row) for row in spins]
        np.testing.assert_allclose(energies(inst, spins), expected, rtol=0, atol=1e-14)

    def test_length_mismatch_is_an_input_error(self):
        """Test that a configuration of the wrong length is rejected."""
        with self.assertRaises(InputError) as ctx:
            energy(chain(), (1, 1, 1))
        self.assertEqual(ctx.exception.field, 'spins')

    def test_non_spin_entries_are_rejected(self):
        """Test that entries other than +1/-1 are rejected."""
        with self.assertRaises(InputError):
            energy(chain(), (1, 0))


class InstanceInvariantTest(SimpleTestCase):
    """Test the structural invariants enforced on construction."""

    def test_duplicate_edge(self):
        """Test that an undirected edge may only appear once."""
        with self.assertRaises(InstanceValidationError):
            IsingInstance(n_nodes=2, edges=((0, 1, 0.5), (1, 0, 0.2)), h=(0, 0))

    def test_self_loop(self):
        """Test that self loops are rejected."""
        with self.assertRaises(InstanceValidationError):
            IsingInstance(n_nodes=2, edges=((1, 1, 0.5),), h=(0, 0))

    def test_node_out_of_range(self):
        """Test that edge endpoints must be existing nodes."""
        with self.assertRaises(InstanceValidationError):
            IsingInstance(n_nodes=2, edges=((0, 2, 0.5),), h=(0, 0))

    def test_bias_length(self):
        """Test that the bias vector must have one entry per node."""
        with self.assertRaises(InstanceValidationError) as ctx:
            IsingInstance(n_nodes=3, edges=(), h=(0, 0))
        self.assertEqual(ctx.exception.field, 'h')

    def test_adjacency_index(self):
        """Test that the adjacency index lists each neighbour with its coupling."""
        inst = IsingInstance(n_nodes=3, edges=((0, 1, 0.4), (2, 1, -0.7)), h=(0, 0, 0))
        self.assertEqual(inst.adjacency[1], ((0, 0.4), (2, -0.7)))
        self.assertEqual(inst.adjacency[0], ((1, 0.4),))

    def test_instance_is_read_only(self):
        """Test that the bias array cannot be modified in place."""
        inst = chain()
        with self.assertRaises(ValueError):
            inst.h[0] = 1.0


class RandomInstanceTest(SimpleTestCase):
    """Test seeded grid generation."""

    def test_single_site_grid(self):
        inst = random_instance(1, 1, seed=5)
        self.assertEqual(inst.n_nodes, 1)
        self.assertEqual(inst.n_edges, 0)
        self.assertTrue(-1.0 <= inst.h[0] <= 1.0)

    def test_three_by_three(self):
        inst = random_instance(3, 3, seed=7)
        self.assertEqual(inst.n_nodes, 9)
        self.assertEqual(inst.n_edges, 12)
        self.assertEqual(inst.grid, (3, 3))

    def test_two_by_three(self):
        inst = random_instance(2, 3, seed=1)
        self.assertEqual(inst.n_nodes, 6)
        self.assertEqual(inst.n_edges, 7)

    def test_free_boundaries(self):
        """Test that grid edges only join row-major nearest neighbours."""
        self.assertEqual(sorted(grid_edges(2, 2)), [(0, 1), (0, 2), (1, 3), (2, 3)])

    def test_parameters_in_range(self):
        inst = random_instance(4, 4, seed=2)
        _, _, coupling = inst.edge_arrays()
        self.assertTrue(np.all(np.abs(coupling) <= 1.0))
        self.assertTrue(np.all(np.abs(inst.h) <= 1.0))

    def test_same_seed_same_instance(self):
        """Test that generation is bit-for-bit reproducible."""
        first, second = random_instance(3, 3, seed=7), random_instance(3, 3, seed=7)
        self.assertEqual(first.edges, second.edges)
        self.assertTrue(np.array_equal(first.h, second.h))

    def test_different_seed_different_instance(self):
        self.assertFalse(np.array_equal(random_instance(3, 3, seed=7).h, random_instance(3, 3, seed=8).h))

    def test_invalid_dimensions(self):
        with self.assertRaises(InputError):
            random_instance(0, 3, seed=0)


class RandomTreeTest(SimpleTestCase):
    """Test seeded random trees."""

    def test_tree_has_n_minus_one_edges(self):
        for n_nodes in (1, 2, 7, 10):
            inst = random_tree_instance(n_nodes, seed=3)
            self.assertEqual(inst.n_edges, n_nodes - 1)
            self.assertIsNone(inst.grid)

    def test_every_node_is_connected_to_an_earlier_one(self):
        inst = random_tree_instance(8, seed=11)
        self.assertEqual(sorted(b for _, b, _ in inst.edges), list(range(1, 8)))
        self.assertTrue(all(a < b for a, b, _ in inst.edges))

    def test_same_seed_same_tree(self):
        self.assertEqual(random_tree_instance(6, seed=2).edges, random_tree_instance(6, seed=2).edges)

    def test_empty_tree(self):
        with self.assertRaises(InputError):
            random_tree_instance(0, seed=0)


class InstanceFileTest(SimpleTestCase):
    """Test instance file reading and writing."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, document, name='instance.json'):
        path = self.dir / name
        path.write_text(json.dumps(document))
        return path

    def test_round_trip_preserves_every_field(self):
        """Test that save then load reproduces the instance exactly."""
        inst = random_instance(3, 3, seed=7)
        loaded = load_instance(save_instance(inst, self.dir / 'grid.json'))
        self.assertEqual(loaded.edges, inst.edges)
        self.assertTrue(np.array_equal(loaded.h, inst.h))
        self.assertEqual(loaded.grid, (3, 3))
        self.assertEqual(loaded.seed, 7)
        self.assertEqual(instance_to_document(loaded), instance_to_document(inst))

    def test_instance_without_grid(self):
        path = self.write({'version': 1, 'n_nodes': 2, 'edges': [[0, 1, 0.5]], 'h': [0.1, -0.1]})
        inst = load_instance(path)
        self.assertIsNone(inst.grid)
        self.assertEqual(inst.seed, 0)

    def test_null_seed_is_rejected(self):
        path = self.write({'version': 1, 'n_nodes': 1, 'edges': [], 'h': [0.2], 'seed': None})
        with self.assertRaises(InstanceParseError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'seed')

    def test_hand_built_instance_is_written_with_seed_zero(self):
        inst = IsingInstance(n_nodes=2, edges=((0, 1, 0.5),), h=(0.1, -0.1))
        document = json.loads(save_instance(inst, self.dir / 'hand.json').read_text())
        self.assertEqual(document['seed'], 0)

    def test_duplicate_edge_in_file(self):
        path = self.write({
            'version': 1, 'n_nodes': 2, 'grid': None,
            'edges': [[0, 1, 0.5], [1, 0, 0.5]], 'h': [0, 0], 'seed': 0,
        })
        with self.assertRaises(InstanceValidationError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'edges')

    def test_wrong_bias_length_in_file(self):
        path = self.write({'version': 1, 'n_nodes': 3, 'edges': [], 'h': [0, 0], 'seed': 0})
        with self.assertRaises(InstanceValidationError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'h')

    def test_grid_size_mismatch_in_file(self):
        path = self.write({
            'version': 1, 'n_nodes': 3, 'grid': {'rows': 2, 'cols': 2}, 'edges': [], 'h': [0, 0, 0],
        })
        with self.assertRaises(InstanceValidationError):
            load_instance(path)

    def test_malformed_field_names_the_field(self):
        """Test that a field of the wrong type is a parse error naming that field."""
        path = self.write({'version': 1, 'n_nodes': 'two', 'edges': [], 'h': [0, 0]})
        with self.assertRaises(InstanceParseError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'n_nodes')

    def test_malformed_edge_entry(self):
        path = self.write({'version': 1, 'n_nodes': 2, 'edges': [[0, 1]], 'h': [0, 0]})
        with self.assertRaises(InstanceParseError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'edges')

    def test_unsupported_version(self):
        path = self.write({'version': 2, 'n_nodes': 1, 'edges': [], 'h': [0]})
        with self.assertRaises(InstanceParseError) as ctx:
            load_instance(path)
        self.assertEqual(ctx.exception.field, 'version')

    def test_invalid_json(self):
        path = self.dir / 'broken.json'
        path.write_text('{"version": 1,')
        with self.assertRaises(InstanceParseError):
            load_instance(path)

    def test_missing_file(self):
        with self.assertRaises(InputError) as ctx:
            load_instance(self.dir / 'missing.json')
        self.assertIn('missing.json', ctx.exception.message)
