"""
Inspection of the run ledger.
Provides summary and detail views of recorded runs and sweeps.
"""
import json

from django.core.management.base import BaseCommand, CommandError
from django.db.models import Count, Min

from flow.models import ExperimentRun
from flow.serializers import ExperimentRunSerializer


class Command(BaseCommand):
    help = 'Inspect recorded Decision Flow and MCMC runs'

    def add_arguments(self, parser):
        parser.add_argument(
            'action',
            choices=['overview', 'list', 'detail', 'sweep'],
            help='Type of inspection to perform'
        )
        parser.add_argument(
            '--id',
            type=int,
            help='Run ID to inspect (for detail)'
        )
        parser.add_argument(
            '--label',
            help='Sweep label to inspect (for sweep)'
        )
        parser.add_argument(
            '--method',
            choices=['df', 'mcmc'],
            help='Method to filter by'
        )
        parser.add_argument(
            '--failed',
            action='store_true',
            help='Only failed rows'
        )
        parser.add_argument(
            '--limit',
            type=int,
            default=20,
            help='Limit number of results (default: 20)'
        )
        parser.add_argument(
            '--format',
            choices=['table', 'json'],
            default='table',
            help='Output format'
        )

    def handle(self, *args, **options):
        action = options['action']

        if action == 'overview':
            self._show_overview(options)
        elif action == 'list':
            self._show_list(options)
        elif action == 'detail':
            self._show_detail(options)
        elif action == 'sweep':
            self._show_sweep(options)

    def _show_overview(self, options):
        """Show ledger overview."""
        total = ExperimentRun.objects.count()
        completed = ExperimentRun.objects.completed().count()
        failed = ExperimentRun.objects.failed().count()
        by_method = {
            row['method']: row['count']
            for row in ExperimentRun.objects.values('method').annotate(count=Count('id'))
        }
        errors = {
            row['error_class']: row['count']
            for row in ExperimentRun.objects.failed().values('error_class').annotate(count=Count('id'))
        }
        sweeps = (
            ExperimentRun.objects.filter(command='sweep')
            .values('label')
            .annotate(rows=Count('id'), started=Min('created_at'))
            .order_by('-started')
        )

        if options['format'] == 'json':
            self.stdout.write(json.dumps({
                'total': total,
                'completed': completed,
                'failed': failed,
                'by_method': by_method,
                'errors': errors,
                'sweeps': [{'label': s['label'], 'rows': s['rows']} for s in sweeps],
            }, indent=2))
            return

        self.stdout.write(self.style.SUCCESS('Run Ledger Overview'))
        self.stdout.write('=' * 60)
        self.stdout.write(f'\nRuns: {total} total ({completed} completed, {failed} failed)')
        for method, count in sorted(by_method.items()):
            self.stdout.write(f'   {method}: {count}')
        if errors:
            self.stdout.write('\nFailures by error class:')
            for error_class, count in sorted(errors.items()):
                self.stdout.write(f'   {error_class}: {count}')
        self.stdout.write(f'\nSweeps: {len(sweeps)}')
        for sweep in sweeps[:options['limit']]:
            self.stdout.write(f"   {sweep['label']}: {sweep['rows']} rows")

    def _filtered(self, options, runs=None):
        runs = ExperimentRun.objects.all() if runs is None else runs
        if options.get('method'):
            runs = runs.filter(method=options['method'])
        if options.get('failed'):
            runs = runs.filter(status=ExperimentRun.STATUS_FAILED)
        return runs

    def _show_list(self, options):
        """List recent runs."""
        runs = self._filtered(options)[:options['limit']]

        if options['format'] == 'json':
            self.stdout.write(json.dumps(ExperimentRunSerializer(runs, many=True).data, indent=2))
            return

        self.stdout.write(self.style.SUCCESS(f'Recent Runs (limit {options["limit"]})'))
        self.stdout.write('=' * 60)
        if not runs:
            self.stdout.write('No runs recorded.')
            return
        for run in runs:
            self._write_row(run)

    def _show_detail(self, options):
        """Show one run."""
        if not options.get('id'):
            raise CommandError('detail needs --id')
        try:
            run = ExperimentRun.objects.get(id=options['id'])
        except ExperimentRun.DoesNotExist:
            raise CommandError(f"Run {options['id']} not found")

        if options['format'] == 'json':
            data = dict(ExperimentRunSerializer(run).data)
            data['error_message'] = run.error_message
            self.stdout.write(json.dumps(data, indent=2))
            return

        self.stdout.write(self.style.SUCCESS(f'Run {run.id}: {run}'))
        self.stdout.write('=' * 60)
        self.stdout.write(f'   Command: {run.command}')
        self.stdout.write(f'   Label: {run.label}')
        self.stdout.write(f'   Mode: {run.mode or "-"}')
        self.stdout.write(f'   Reference: {run.reference}')
        self.stdout.write(f'   Created: {run.created_at}')
        if run.status == ExperimentRun.STATUS_FAILED:
            self.stdout.write(self.style.ERROR(f'   Error [{run.error_class}]: {run.error_message}'))
        else:
            self.stdout.write(f'   delta1: {run.delta1}')
            self.stdout.write(f'   delta2: {run.delta2}')
            self.stdout.write(f'   TV: {run.tv if run.tv is not None else "-"}')
            self.stdout.write(f'   Sample TV: {run.sample_tv if run.sample_tv is not None else "-"}')
        if run.timings:
            self.stdout.write('   Timings (ms):')
            for stage, value in run.timings.items():
                self.stdout.write(f'      {stage}: {value:.1f}')
        if run.run_dir:
            self.stdout.write(f'   Directory: {run.run_dir}')

    def _show_sweep(self, options):
        """Show every row of one sweep."""
        if not options.get('label'):
            raise CommandError('sweep needs --label')
        runs = self._filtered(options, ExperimentRun.objects.for_sweep(options["label"]))

        if options['format'] == 'json':
            self.stdout.write(json.dumps(ExperimentRunSerializer(runs, many=True).data, indent=2))
            return

        self.stdout.write(self.style.SUCCESS(f"Sweep {options['label']}"))
        self.stdout.write('=' * 60)
        if not runs:
            self.stdout.write('No rows recorded for this sweep.')
            return
        for run in runs:
            self._write_row(run)

    def _write_row(self, run):
        if run.status == ExperimentRun.STATUS_FAILED:
            metrics = self.style.ERROR(f'failed [{run.error_class}]')
        else:
            metrics = f'delta1={run.delta1:.4g} delta2={run.delta2:.4g}'
        size = f'K={run.n_paths} S={run.n_samples}' if run.n_paths else f'S={run.n_samples}'
        self.stdout.write(f'   [{run.id}] {run.method:4s} {size} seed={run.seed}: {metrics}')
