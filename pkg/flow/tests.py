"""
Long-running acceptance tests for the sampling engine.

Tagged ``slow``; skip them with ``python manage.py test --exclude-tag slow``.
"""
import math
import tempfile

import numpy as np
from django.test import SimpleTestCase, tag
from scipy.optimize import minimize
from scipy.special import log_softmax

from .engine.decision_flow import (
    EMPIRICAL, EXACT, DfConfig, build_posterior, green_functions, policy_from_green_functions,
    sample_posterior,
)
from .engine.experiments import EXACT_REFERENCE, compute_reference, run_sweep
from .engine.ising import random_instance, random_tree_instance
from .engine.lsmdp import GraphLevel, LayeredGraph, LsMdpProblem, PosteriorPolicy, cost, segment_logsumexp
from .engine.metrics import (
    energy_histogram, moments, sample_total_variation, terminal_total_variation, upper_triangle,
)
from .engine.reference import McmcConfig, exact_gibbs, mcmc_sample
from .test_lsmdp import solve

# one grid shape per node count, 1 to 10 nodes
SMALL_GRIDS = [(1, 1), (1, 2), (1, 3), (2, 2), (1, 5), (2, 3), (1, 7), (2, 4), (3, 3), (2, 5)]
INSTANCES_PER_SIZE = 20


def small_instances(max_nodes=10):
    for rows, cols in SMALL_GRIDS:
        if rows * cols > max_nodes:
            continue
        for seed in range(INSTANCES_PER_SIZE):
            yield f'grid {rows}x{cols}', random_instance(rows, cols, seed=seed)
            yield f'tree {rows * cols}', random_tree_instance(rows * cols, seed=seed)


def random_layered_problem(rng):
    """Up to four levels, one root, at most three successors per state, random energies on every level."""
    sizes = [1] + [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 4)))]
    levels = []
    for t, size in enumerate(sizes):
        ids = np.array([f's{t}.{i}' for i in range(size)], dtype=object)
        if t == len(sizes) - 1:
            levels.append(GraphLevel(ids))
            continue
        indptr, succ, log_prior = [0], [], []
        for _ in range(size):
            k = int(rng.integers(1, min(3, sizes[t + 1]) + 1))
            succ.extend(rng.choice(sizes[t + 1], size=k, replace=False).tolist())
            log_prior.extend(np.log(rng.dirichlet(np.ones(k))).tolist())
            indptr.append(len(succ))
        levels.append(GraphLevel(ids, np.array(indptr), np.array(succ, dtype=np.int64), np.array(log_prior)))
    energies = tuple(rng.normal(size=size) for size in sizes)
    forbidden = tuple(np.zeros(size, dtype=bool) for size in sizes)
    return LsMdpProblem(LayeredGraph(tuple(levels)), energies, forbidden)


def perturbed(policy, rng, epsilon):
    """normalize(p* + ε·δ) on every level, kept strictly inside the simplex."""
    log_prob = []
    for t, level in enumerate(policy.graph.levels[:-1]):
        p = np.clip(policy.probabilities(t) + epsilon * rng.uniform(-1.0, 1.0, level.n_edges), 1e-15, None)
        p /= np.bincount(level.rows, weights=p, minlength=level.size)[level.rows]
        log_prob.append(np.log(p))
    return PosteriorPolicy(policy.graph, tuple(log_prob))


@tag('slow')
class ExactConsistencyTest(SimpleTestCase):
    """Test that exact mode reproduces exp(-E)/Z on every small instance."""

    def test_terminal_marginal_matches_gibbs(self):
        for name, inst in small_instances():
            with self.subTest(instance=name, seed=inst.seed):
                posterior = build_posterior(inst, DfConfig(mode=EXACT))
                tv = terminal_total_variation(
                    posterior.terminal_spins, posterior.terminal_marginal(), exact_gibbs(inst)
                )
                self.assertLess(tv, 1e-10)

    def test_green_function_policy_matches_backward_sweep(self):
        for name, inst in small_instances(max_nodes=6):
            with self.subTest(instance=name, seed=inst.seed):
                posterior = build_posterior(inst, DfConfig(mode=EXACT))
                direct = policy_from_green_functions(posterior.graph, inst, green_functions(posterior.graph))
                for t, probabilities in enumerate(direct):
                    np.testing.assert_allclose(probabilities, posterior.policy.probabilities(t), atol=1e-10)


@tag('slow')
class LayeredOptimalityTest(SimpleTestCase):
    """Test that no perturbation of the optimal policy lowers the KL-control cost."""

    def test_random_layered_problems(self):
        rng = np.random.default_rng(2024)
        for index in range(50):
            prob = random_layered_problem(rng)
            values, policy = solve(prob)
            psi = values.psi(0, 0)
            with self.subTest(problem=index):
                self.assertAlmostEqual(cost(prob, policy), psi, delta=1e-9)
                for _ in range(1000):
                    epsilon = 1e-2 * rng.uniform(0.1, 1.0)
                    self.assertGreaterEqual(cost(prob, perturbed(policy, rng, epsilon)), psi - 1e-12)

    def test_policy_ratio_identity(self):
        """Test p*(s'|s)·u_t(s) = p(s'|s)·exp(-E_t(s))·u_{t+1}(s') on every edge."""
        rng = np.random.default_rng(7)
        for index in range(50):
            prob = random_layered_problem(rng)
            values, policy = solve(prob)
            for t, level in enumerate(prob.graph.levels[:-1]):
                with self.subTest(problem=index, level=t):
                    np.testing.assert_allclose(
                        policy.log_prob[t] + values.log_u[t][level.rows],
                        level.log_prior + values.log_u[t + 1][level.succ] - prob.energies[t][level.rows],
                        atol=1e-10,
                    )

    def test_each_state_value_is_a_numerical_minimum(self):
        """Test -log u_t(s) against a direct minimisation of the one-step Bellman objective."""
        rng = np.random.default_rng(11)
        for index in range(20):
            prob = random_layered_problem(rng)
            values, _ = solve(prob)
            for t, level in enumerate(prob.graph.levels[:-1]):
                for s in range(level.size):
                    start, stop = level.indptr[s], level.indptr[s + 1]
                    log_prior = level.log_prior[start:stop]
                    psi_next = -values.log_u[t + 1][level.succ[start:stop]]

                    def objective(theta):
                        log_p = log_softmax(theta)
                        p = np.exp(log_p)
                        return prob.energies[t][s] + float(np.sum(p * (log_p - log_prior + psi_next)))

                    result = minimize(objective, x0=np.zeros(stop - start), method='BFGS')
                    with self.subTest(problem=index, level=t, state=s):
                        self.assertAlmostEqual(result.fun, values.psi(t, s), delta=1e-6)

    def test_joint_numerical_minimum_matches_psi(self):
        """Test Ψ_0 against a minimisation of the cost over every row of the policy at once."""
        rng = np.random.default_rng(13)
        for index in range(10):
            prob = random_layered_problem(rng)
            values, _ = solve(prob)
            levels = prob.graph.levels[:-1]
            splits = np.cumsum([level.n_edges for level in levels])[:-1]

            def objective(theta):
                log_prob = tuple(
                    logits - segment_logsumexp(level, logits)[level.rows]
                    for level, logits in zip(levels, np.split(theta, splits))
                )
                return cost(prob, PosteriorPolicy(prob.graph, log_prob))

            result = minimize(objective, x0=np.zeros(sum(level.n_edges for level in levels)), method='BFGS')
            with self.subTest(problem=index):
                self.assertAlmostEqual(result.fun, values.psi(0, 0), delta=1e-6)


@tag('slow')
class EmpiricalConvergenceTest(SimpleTestCase):
    """Test that empirical-mode error shrinks as K = S grows."""

    def test_sample_tv_decreases_on_two_by_two(self):
        inst = random_instance(2, 2, seed=0)
        gibbs = exact_gibbs(inst)
        medians = []
        for size in (100, 1000, 10_000):
            values = []
            for seed in range(10):
                posterior = build_posterior(inst, DfConfig(mode=EMPIRICAL, n_paths=size, seed=seed))
                samples = sample_posterior(posterior.policy, size, seed)
                values.append(sample_total_variation(samples, gibbs))
            medians.append(float(np.median(values)))
        self.assertLess(medians[1], medians[0], medians)
        self.assertLess(medians[2], medians[1], medians)

    def test_three_by_three_sweep_beats_mcmc(self):
        """Test median mismatches on a 3x3 grid against the default MCMC baseline."""
        inst = random_instance(3, 3, seed=0)
        reference = compute_reference(inst, EXACT_REFERENCE, seed=0)
        with tempfile.TemporaryDirectory() as tmp:
            outcome = run_sweep(
                inst, [1000, 10_000, 50_000], reference, tmp,
                mode=EMPIRICAL, seed=0, repetitions=10, mcmc=McmcConfig(),
            )
        self.assertEqual(outcome.failures, 0)
        df = {row['S']: row for row in outcome.summary if row['method'] == 'df'}
        mcmc = next(row for row in outcome.summary if row['method'] == 'mcmc')
        delta2 = [float(df[size]['delta2_median']) for size in (1000, 10_000, 50_000)]
        self.assertLess(delta2[1], delta2[0], delta2)
        self.assertLess(delta2[2], delta2[1], delta2)
        for metric in ('delta1_median', 'delta2_median'):
            self.assertLess(float(df[50_000][metric]), float(mcmc[metric]), metric)




@tag('slow')
class ReferenceSamplerTest(SimpleTestCase):
    """Test the references at production sample sizes."""

    def test_long_chain_moments(self):
        """Test 10^5 recorded samples on 2x2 within three batch-means standard errors of exact Gibbs."""
        inst = random_instance(2, 2, seed=3)
        gibbs = exact_gibbs(inst)
        n_recorded, burn_in, stride, n_batches = 100_000, 2000, 10, 100
        cfg = McmcConfig(total=burn_in + n_recorded * stride, burn_in=burn_in, stride=stride, seed=1)
        samples = mcmc_sample(inst, cfg)
        self.assertEqual(len(samples), n_recorded)

        spins = samples.spins.astype(np.float64)
        rows, cols = np.triu_indices(inst.n_nodes, k=1)
        observables = np.hstack([spins, spins[:, rows] * spins[:, cols]])
        batch_means = observables.reshape(n_batches, -1, observables.shape[1]).mean(axis=1)
        standard_error = batch_means.std(axis=0, ddof=1) / math.sqrt(n_batches)

        stats = moments(samples)
        estimate = np.concatenate([stats.magnetizations, upper_triangle(stats.correlations)])
        expected = np.concatenate([gibbs.magnetizations, upper_triangle(gibbs.correlations)])
        np.testing.assert_array_less(np.abs(estimate - expected), 3 * standard_error + 1e-12)

    def test_histogram_mean_energy(self):
        """Test that exact-mode rollouts on 3x3 reproduce the Gibbs mean energy."""
        inst = random_instance(3, 3, seed=1)
        gibbs = exact_gibbs(inst)
        n_samples = 50_000
        posterior = build_posterior(inst, DfConfig(mode=EXACT))
        histogram = energy_histogram(inst, sample_posterior(posterior.policy, n_samples, seed=5))
        standard_error = math.sqrt(gibbs.energy_variance / n_samples)
        self.assertLess(abs(histogram.mean_energy - gibbs.mean_energy), 4 * standard_error)
        self.assertAlmostEqual(float(np.sum(histogram.densities * histogram.widths)), 1.0, delta=1e-9)
