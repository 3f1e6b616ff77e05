"""
Tests for the management commands.
Each command is driven through call_command against a temporary output directory.
"""
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest import mock

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from .engine import experiments
from .engine.ising import load_instance, random_instance, save_instance
from .engine.metrics import read_csv
from .factories import ExperimentRunFactory, FailedRunFactory, McmcRunFactory
from .models import ExperimentRun

TOY_PROBLEM = """\
state 0 r 0
state 1 a 0.4
state 1 b 1.1
edge r a 0.3
edge r b 0.7
"""


class CommandTestCase(TestCase):
    """Shared temporary directory and output capture."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def call(self, name, *args, **options):
        out = StringIO()
        call_command(name, *args, stdout=out, **options)
        return out.getvalue()

    def assertCommandFails(self, error_class, returncode, name, *args, **options):
        with self.assertRaises(CommandError) as ctx:
            self.call(name, *args, **options)
        self.assertTrue(str(ctx.exception).startswith(f'[{error_class}]'), str(ctx.exception))
        self.assertEqual(ctx.exception.returncode, returncode)
        return ctx.exception


class GenCommandTest(CommandTestCase):
    """Test the gen command."""

    def test_writes_instance(self):
        path = self.dir / 'grid.json'
        output = self.call('gen', rows=3, cols=3, seed=5, output=str(path))
        self.assertIn('3x3 instance (9 nodes, 12 edges, seed 5)', output)
        inst = load_instance(path)
        self.assertEqual((inst.n_nodes, inst.seed), (9, 5))

    def test_invalid_grid(self):
        self.assertCommandFails('input', 2, 'gen', rows=0, cols=3, output=str(self.dir / 'bad.json'))
        self.assertFalse((self.dir / 'bad.json').exists())


class RunCommandTest(CommandTestCase):
    """Test the run command."""

    def test_exact_run(self):
        """Test an exact-mode run on a 2x2 grid and the files it leaves behind."""
        output = self.call('run', rows=2, cols=2, mode='exact', samples=200, output_dir=str(self.dir), threads=1)
        run_dir = self.dir / 'run-exact-S200-seed0'
        for name in ('instance.json', 'config.json', 'samples.txt', 'report.json', 'metrics.csv', 'histogram.csv'):
            self.assertTrue((run_dir / name).exists(), name)
        report = json.loads((run_dir / 'report.json').read_text())
        self.assertLess(report['tv'], 1e-10)
        self.assertEqual(report['n_samples'], 200)
        self.assertIn('posterior TV', output)

        run = ExperimentRun.objects.get()
        self.assertEqual((run.command, run.mode, run.label), ('run', 'exact', 'run-exact-S200-seed0'))

    def test_empirical_run_with_paths_and_snapshot(self):
        self.call(
            'run', rows=2, cols=2, paths=50, samples=50, seed=3, output_dir=str(self.dir),
            threads=1, log_paths=True, snapshot=True,
        )
        run_dir = self.dir / 'run-empirical-K50-S50-seed3'
        self.assertEqual(len((run_dir / 'paths.txt').read_text().splitlines()), 50)
        self.assertTrue((run_dir / 'posterior.npz').exists())
        row = read_csv(run_dir / 'metrics.csv')[0]
        self.assertEqual((row['K'], row['S'], row['status']), ('50', '50', 'completed'))

    def test_rerun_is_byte_identical(self):
        """Test that identical seeds reproduce the sample file and every metric."""
        reports = []
        for name in ('first', 'second'):
            self.call('run', rows=2, cols=2, paths=80, samples=80, seed=9, output_dir=str(self.dir / name), threads=2)
            run_dir = self.dir / name / 'run-empirical-K80-S80-seed9'
            reports.append((
                (run_dir / 'samples.txt').read_bytes(),
                {k: v for k, v in json.loads((run_dir / 'report.json').read_text()).items() if k != 'timings_ms'},
            ))
        self.assertEqual(reports[0], reports[1])

    def test_instance_file(self):
        path = save_instance(random_instance(1, 3, seed=2), self.dir / 'line.json')
        self.call('run', instance=str(path), mode='exact', samples=20, output_dir=str(self.dir), threads=1)
        config = json.loads((self.dir / 'run-exact-S20-seed0' / 'config.json').read_text())
        self.assertEqual(config['instance_path'], str(path))

    def test_missing_sample_count(self):
        self.assertCommandFails('input', 2, 'run', rows=2, cols=2, paths=10, output_dir=str(self.dir))

    def test_exact_mode_capacity(self):
        """Test that a 4x4 grid is refused in exact mode with the capacity exit code."""
        error = self.assertCommandFails(
            'capacity', 5, 'run', rows=4, cols=4, mode='exact', samples=10, output_dir=str(self.dir),
        )
        self.assertIn('suggestion', str(error))


class SweepCommandTest(CommandTestCase):
    """Test the sweep command."""

    def sweep_options(self, **options):
        return dict(
            rows=2, cols=2, sizes=[20, 40], repetitions=2, label='small', output_dir=str(self.dir),
            threads=1, mcmc_total=300, mcmc_burn_in=100, mcmc_stride=5, **options
        )

    def sweep(self, **options):
        return self.call('sweep', **self.sweep_options(**options))

    def test_rows_and_files(self):
        """Test one row per (size, repetition) plus one MCMC row per repetition."""
        output = self.sweep()
        sweep_dir = self.dir / 'small'
        rows = read_csv(sweep_dir / 'sweep.csv')
        self.assertEqual(len(rows), 2 * 2 + 2)
        self.assertEqual([r['method'] for r in rows], ['df'] * 4 + ['mcmc'] * 2)
        self.assertEqual([r['seed'] for r in rows[:4]], ['0', '1', '0', '1'])
        self.assertTrue((sweep_dir / 'summary.csv').exists())
        self.assertTrue((sweep_dir / 'sweep.svg').read_text().lstrip().startswith('<?xml'))
        self.assertEqual(len(read_csv(sweep_dir / 'summary.csv')), 3)
        self.assertIn('median delta2', output)
        self.assertEqual(ExperimentRun.objects.for_sweep('small').count(), 6)

    def test_without_baseline(self):
        self.sweep(no_baseline=True)
        rows = read_csv(self.dir / 'small' / 'sweep.csv')
        self.assertEqual({r['method'] for r in rows}, {'df'})

    def test_sizes_must_increase(self):
        self.assertCommandFails(
            'input', 2, 'sweep', rows=2, cols=2, sizes=[40, 20], output_dir=str(self.dir),
        )

    def test_unexpected_row_failure_keeps_the_sweep_going(self):
        real = experiments.run_decision_flow

        def flaky(inst, cfg, *args, **kwargs):
            if cfg.n_samples == 20:
                raise RuntimeError('worker crashed')
            return real(inst, cfg, *args, **kwargs)

        with mock.patch.object(experiments, 'run_decision_flow', side_effect=flaky):
            error = self.assertCommandFails('internal', 1, 'sweep', **self.sweep_options())
        self.assertIn('2 of 6 sweep rows failed', str(error))
        sweep_dir = self.dir / 'small'
        rows = read_csv(sweep_dir / 'sweep.csv')
        self.assertEqual([r['status'] for r in rows], ['failed'] * 2 + ['completed'] * 4)
        self.assertTrue(rows[0]['error'].startswith('[internal]'), rows[0]['error'])
        self.assertIn('worker crashed', rows[0]['error'])
        summary = read_csv(sweep_dir / 'summary.csv')
        self.assertEqual([(s['method'], s['S']) for s in summary], [('df', '40'), ('mcmc', '40')])
        self.assertEqual(ExperimentRun.objects.for_sweep('small').filter(status='failed').count(), 2)


class ExactCommandTest(CommandTestCase):
    """Test the exact command."""

    def test_verify_and_write(self):
        path = self.dir / 'gibbs.json'
        output = self.call('exact', rows=2, cols=2, instance_seed=4, verify=True, output=str(path))
        document = json.loads(path.read_text())
        self.assertLess(document['posterior_tv'], 1e-10)
        self.assertEqual(len(document['magnetizations']), 4)
        self.assertEqual(len(document['correlations']), 6)
        self.assertIn('(verified)', output)

    def test_failed_verification(self):
        self.assertCommandFails('verification', 10, 'exact', rows=1, cols=2, verify=True, tolerance=0.0)


class McmcCommandTest(CommandTestCase):
    """Test the mcmc command."""

    def test_baseline_run(self):
        output = self.call(
            'mcmc', rows=2, cols=2, total=600, burn_in=100, stride=5, seed=2, output_dir=str(self.dir),
        )
        run_dir = self.dir / 'run-mcmc-S100-seed2'
        self.assertEqual(len((run_dir / 'samples.txt').read_text().splitlines()), 100)
        self.assertIn('recorded samples: 100', output)
        self.assertEqual(ExperimentRun.objects.get().command, 'mcmc')

    def test_each_chain_runs_the_full_budget(self):
        output = self.call(
            'mcmc', rows=2, cols=2, total=600, burn_in=100, stride=5, seed=2, chains=3, output_dir=str(self.dir),
        )
        run_dir = self.dir / 'run-mcmc-S300-seed2'
        self.assertEqual(len((run_dir / 'samples.txt').read_text().splitlines()), 300)
        self.assertIn('recorded samples: 300', output)
        self.assertEqual(json.loads((run_dir / 'config.json').read_text())['mcmc_chains'], 3)

    def test_burn_in_beyond_total(self):
        self.assertCommandFails('input', 2, 'mcmc', rows=2, cols=2, total=100, burn_in=100, output_dir=str(self.dir))

    def test_zero_total_and_stride_are_rejected(self):
        for option in ('total', 'stride'):
            with self.subTest(option=option):
                error = self.assertCommandFails(
                    'input', 2, 'mcmc', rows=2, cols=2, burn_in=0, output_dir=str(self.dir), **{option: 0}
                )
                self.assertIn(option, str(error))


class LsmdpCommandTest(CommandTestCase):
    """Test the lsmdp command."""

    def write(self, text, name='problem.txt'):
        path = self.dir / name
        path.write_text(text)
        return str(path)

    def test_policy_on_stdout(self):
        output = self.call('lsmdp', self.write(TOY_PROBLEM))
        self.assertIn('root r ', output)
        self.assertIn('policy r a ', output)

    def test_policy_to_file(self):
        target = self.dir / 'out' / 'policy.txt'
        self.call('lsmdp', self.write(TOY_PROBLEM), output=str(target))
        self.assertEqual(len(target.read_text().splitlines()), 5)

    def test_malformed_file(self):
        error = self.assertCommandFails('parse', 3, 'lsmdp', self.write('state 0 r\n'))
        self.assertIn('line 1', str(error))

    def test_unnormalised_prior(self):
        self.assertCommandFails('structure', 7, 'lsmdp', self.write(TOY_PROBLEM.replace('0.7', '0.6')))

    def test_no_finite_terminal(self):
        text = TOY_PROBLEM.replace('a 0.4', 'a inf').replace('b 1.1', 'b inf')
        self.assertCommandFails('degeneracy', 8, 'lsmdp', self.write(text))

    def test_dead_root_is_reported_not_fatal(self):
        text = TOY_PROBLEM + 'state 0 q 0\nstate 1 c inf\nedge q c 1\n'
        output = self.call('lsmdp', self.write(text))
        self.assertIn('root q inf', output)
        self.assertIn('policy r a ', output)

    def test_missing_file(self):
        self.assertCommandFails('input', 2, 'lsmdp', str(self.dir / 'missing.txt'))


class HistCommandTest(CommandTestCase):
    """Test the hist command."""

    def setUp(self):
        super().setUp()
        self.call('run', rows=2, cols=2, mode='exact', samples=2000, output_dir=str(self.dir), threads=1)
        self.run_dir = self.dir / 'run-exact-S2000-seed0'

    def test_histogram_with_exact_overlay(self):
        output = self.call('hist', run_dir=str(self.run_dir), bins=10, output_dir=str(self.dir / 'hist'))
        self.assertEqual(len(read_csv(self.dir / 'hist' / 'histogram.csv')), 10)
        self.assertTrue((self.dir / 'hist' / 'histogram.svg').exists())
        self.assertIn('exact mean energy', output)

    def test_histogram_without_overlay(self):
        output = self.call('hist', run_dir=str(self.run_dir), no_exact=True)
        self.assertNotIn('exact mean energy', output)
        self.assertTrue((self.run_dir / 'histogram.svg').exists())

    def test_sources_required(self):
        self.assertCommandFails('input', 2, 'hist', instance=str(self.run_dir / 'instance.json'))


class InspectRunsCommandTest(CommandTestCase):
    """Test the inspect_runs command."""

    def setUp(self):
        super().setUp()
        self.run = ExperimentRunFactory(command='sweep', label='grid')
        McmcRunFactory(command='sweep', label='grid')
        self.failed = FailedRunFactory()

    def test_overview(self):
        output = self.call('inspect_runs', 'overview')
        self.assertIn('Runs: 3 total (2 completed, 1 failed)', output)
        self.assertIn('degeneracy: 1', output)
        self.assertIn('grid: 2 rows', output)

    def test_overview_json(self):
        data = json.loads(self.call('inspect_runs', 'overview', format='json'))
        self.assertEqual(data['by_method'], {'df': 2, 'mcmc': 1})

    def test_list_filters(self):
        data = json.loads(self.call('inspect_runs', 'list', method='df', failed=True, format='json'))
        self.assertEqual([row['id'] for row in data], [self.failed.id])

    def test_detail(self):
        output = self.call('inspect_runs', 'detail', id=self.failed.id)
        self.assertIn('Error [degeneracy]', output)
        data = json.loads(self.call('inspect_runs', 'detail', id=self.run.id, format='json'))
        self.assertEqual(data['timings'], {'prior': 12.5, 'solve': 3.0})

    def test_detail_needs_existing_id(self):
        with self.assertRaises(CommandError):
            self.call('inspect_runs', 'detail')
        with self.assertRaises(CommandError):
            self.call('inspect_runs', 'detail', id=10 ** 6)

    def test_sweep(self):
        output = self.call('inspect_runs', 'sweep', label='grid')
        self.assertEqual(output.count('seed='), 2)
        with self.assertRaises(CommandError):
            self.call('inspect_runs', 'sweep')
