"""
Single Decision Flow run: prior paths, posterior, rollouts and metrics.
"""
from django.core.management.base import BaseCommand, CommandError

from flow.cli import (
    add_flow_arguments, add_instance_arguments, add_mcmc_arguments, add_output_arguments,
    output_directory, resolve_instance, run_config,
)
from flow.engine.decision_flow import DfConfig
from flow.engine.experiments import compute_reference, run_decision_flow
from flow.exceptions import command_error_from
from flow.ledger import record_report


class Command(BaseCommand):
    help = 'Build a Decision Flow posterior, draw S samples and score them against a reference'

    def add_arguments(self, parser):
        add_instance_arguments(parser)
        add_flow_arguments(parser)
        parser.add_argument('--paths', type=int, help='Prior paths K (empirical mode)')
        parser.add_argument('--samples', type=int, help='Posterior samples S')
        add_output_arguments(parser)
        add_mcmc_arguments(parser)
        parser.add_argument('--log-paths', action='store_true', help='Also write the sampled prior paths')
        parser.add_argument(
            '--snapshot',
            action='store_true',
            help='Also write the path index with values and posterior probabilities'
        )

    def handle(self, *args, **options):
        try:
            config = run_config(options, 'run')
            inst = resolve_instance(config)
            reference = compute_reference(inst, config['reference'], config['seed'])
            cfg = DfConfig(
                mode=config['mode'],
                n_paths=config['paths'],
                n_samples=config['samples'],
                seed=config['seed'],
                degeneracy=config['degeneracy'],
                min_visits=config['min_visits'],
                threads=config['threads'],
            )
            outcome = run_decision_flow(
                inst, cfg, reference, output_directory(config),
                bins=config['bins'],
                config_echo=config,
                log_paths=config['log_paths'],
                snapshot=config['snapshot'],
            )
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        record_report('run', outcome.run_dir.name, outcome.report, outcome.run_dir)

        report = outcome.report
        self.stdout.write(self.style.SUCCESS(f'Run complete: {outcome.run_dir}'))
        self.stdout.write(f'   delta1: {report.delta1:.6g}')
        self.stdout.write(f'   delta2: {report.delta2:.6g}')
        if report.tv is not None:
            self.stdout.write(f'   posterior TV: {report.tv:.3e}')
        if report.sample_tv is not None:
            self.stdout.write(f'   sample TV: {report.sample_tv:.6g}')
        if report.clamped_magnetizations or report.clamped_correlations:
            self.stdout.write(self.style.WARNING(
                f'   clamped denominators: {report.clamped_magnetizations} magnetization, '
                f'{report.clamped_correlations} correlation'
            ))
