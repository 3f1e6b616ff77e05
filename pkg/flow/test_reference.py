"""
Unit tests for the exact Gibbs reference and the Metropolis-Hastings sampler.
"""
import math

import numpy as np
from django.test import SimpleTestCase

from .engine import rng as rng_streams
from .engine.ising import IsingInstance, energy, random_instance
from .engine.reference import (
    McmcConfig, all_configurations, configuration_index, delta_energy, exact_gibbs, mcmc_reference,
    mcmc_sample, mh_transition_matrix, run_chain,
)
from .exceptions import CapacityError, InputError


class ExactGibbsTest(SimpleTestCase):
    """Test exact enumeration of the Gibbs distribution."""

    def test_single_node(self):
        """Test that one node with h=0.3 has magnetization tanh(0.3)."""
        gibbs = exact_gibbs(IsingInstance(n_nodes=1, edges=(), h=(0.3,)))
        self.assertAlmostEqual(gibbs.probability((1,)), math.exp(0.3) / (2 * math.cosh(0.3)), places=14)
        self.assertAlmostEqual(float(gibbs.magnetizations[0]), math.tanh(0.3), places=14)
        self.assertAlmostEqual(gibbs.log_z, math.log(2 * math.cosh(0.3)), places=14)

    def test_two_node_chain_correlation(self):
        """Test that a J=0.5 pair without fields has correlation tanh(0.5)."""
        gibbs = exact_gibbs(IsingInstance(n_nodes=2, edges=((0, 1, 0.5),), h=(0.0, 0.0)))
        self.assertAlmostEqual(float(gibbs.correlations[0, 1]), math.tanh(0.5), places=14)
        np.testing.assert_allclose(gibbs.magnetizations, 0.0, atol=1e-15)
        np.testing.assert_allclose(np.diag(gibbs.correlations), 1.0, atol=1e-14)

    def test_zero_couplings_and_fields_are_uniform(self):
        inst = IsingInstance(n_nodes=3, edges=((0, 1, 0.0), (1, 2, 0.0)), h=(0.0, 0.0, 0.0))
        np.testing.assert_allclose(exact_gibbs(inst).probabilities, 1 / 8, atol=1e-15)

    def test_normalised(self):
        gibbs = exact_gibbs(random_instance(3, 3, seed=2))
        self.assertAlmostEqual(gibbs.probabilities.sum(), 1.0, delta=1e-12)
        self.assertEqual(len(gibbs.distribution()), 512)

    def test_probabilities_follow_energy(self):
        inst = random_instance(2, 2, seed=5)
        gibbs = exact_gibbs(inst)
        for cfg in [(1, 1, -1, 1), (-1, 1, -1, -1)]:
            expected = math.exp(-energy(inst, cfg) - gibbs.log_z)
            self.assertAlmostEqual(gibbs.probability(cfg), expected, places=14)

    def test_energy_summaries(self):
        gibbs = exact_gibbs(random_instance(2, 3, seed=9))
        mean = float(np.dot(gibbs.probabilities, gibbs.energies))
        self.assertAlmostEqual(gibbs.mean_energy, mean, places=14)
        self.assertGreater(gibbs.energy_variance, 0.0)

    def test_capacity(self):
        with self.assertRaises(CapacityError) as ctx:
            exact_gibbs(random_instance(2, 3, seed=1), cap=32)
        self.assertEqual(ctx.exception.required, 64)
        self.assertIn('mcmc', ctx.exception.hint)


class ConfigurationIndexTest(SimpleTestCase):
    """Test the ordering of enumerated configurations."""

    def test_index_inverts_enumeration(self):
        spins = all_configurations(5)
        np.testing.assert_array_equal(configuration_index(spins), np.arange(32))

    def test_first_configuration_is_all_up(self):
        self.assertEqual(all_configurations(3)[0].tolist(), [1, 1, 1])
        self.assertEqual(all_configurations(3)[1].tolist(), [-1, 1, 1])


class McmcConfigTest(SimpleTestCase):
    """Test MCMC schedule validation."""

    def test_default_schedule_records_300_states(self):
        self.assertEqual(McmcConfig().recorded_per_chain, 300)

    def test_burn_in_must_precede_total(self):
        with self.assertRaises(InputError) as ctx:
            McmcConfig(total=100, burn_in=100)
        self.assertEqual(ctx.exception.field, 'burn_in')

    def test_stride_and_chains(self):
        with self.assertRaises(InputError):
            McmcConfig(stride=0)
        with self.assertRaises(InputError):
            McmcConfig(chains=0)

    def test_from_settings_keeps_explicit_values(self):
        cfg = McmcConfig.from_settings(total=4000, burn_in=None, seed=3)
        self.assertEqual((cfg.total, cfg.seed), (4000, 3))


class MetropolisTest(SimpleTestCase):
    """Test the single-flip Metropolis-Hastings chain."""

    def test_delta_energy_matches_direct_difference(self):
        inst = random_instance(3, 3, seed=4)
        spins = [1, -1, -1, 1, 1, -1, 1, 1, -1]
        for a in range(inst.n_nodes):
            flipped = list(spins)
            flipped[a] = -flipped[a]
            self.assertAlmostEqual(
                delta_energy(inst, spins, a), energy(inst, flipped) - energy(inst, spins), places=12
            )

    def test_consecutive_states_differ_by_at_most_one_flip(self):
        inst = IsingInstance(n_nodes=4, edges=((0, 1, 0.5), (2, 3, -0.5)), h=(0.0, 0.0, 0.0, 0.0))
        cfg = McmcConfig(total=500, burn_in=0, stride=1, seed=2)
        recorded = run_chain(inst, cfg, rng_streams.split_stream(2, rng_streams.MCMC_CHAIN, 0))
        flips = np.sum(recorded[1:] != recorded[:-1], axis=1)
        self.assertTrue(np.all(flips <= 1))
        self.assertGreater(int(np.sum(flips == 1)), 0)

    def test_kernel_preserves_gibbs(self):
        """Test stationarity and detailed balance of the exact MH kernel."""
        inst = random_instance(2, 3, seed=7)
        kernel = mh_transition_matrix(inst)
        p = exact_gibbs(inst).probabilities
        np.testing.assert_allclose(kernel.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(p @ kernel, p, atol=1e-12)
        flow = p[:, None] * kernel
        np.testing.assert_allclose(flow, flow.T, atol=1e-12)

    def test_kernel_node_limit(self):
        with self.assertRaises(CapacityError):
            mh_transition_matrix(random_instance(2, 3, seed=7), node_limit=5)

    def test_recorded_count_and_chain_layout(self):
        """Test that chains are concatenated and chain 0 equals a single-chain run."""
        inst = random_instance(2, 2, seed=1)
        multi = mcmc_sample(inst, McmcConfig(total=600, burn_in=100, stride=5, seed=9, chains=3))
        single = mcmc_sample(inst, McmcConfig(total=600, burn_in=100, stride=5, seed=9))
        self.assertEqual(len(multi), 300)
        np.testing.assert_array_equal(multi.spins[:100], single.spins)

    def test_reference_chain_uses_its_own_stream(self):
        inst = random_instance(2, 2, seed=1)
        reference = mcmc_reference(inst, seed=9, n_recorded=100, burn_in=100, stride=5)
        chain = mcmc_sample(inst, McmcConfig(total=600, burn_in=100, stride=5, seed=9))
        self.assertEqual(len(reference), 100)
        self.assertFalse(np.array_equal(reference.spins, chain.spins))

    def test_same_seed_same_chain(self):
        inst = random_instance(2, 2, seed=1)
        cfg = McmcConfig(total=400, burn_in=50, stride=7, seed=5)
        np.testing.assert_array_equal(mcmc_sample(inst, cfg).spins, mcmc_sample(inst, cfg).spins)
