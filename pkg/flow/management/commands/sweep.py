"""
Mismatch-vs-K sweep with K = S, repeated over seeds, plus an MCMC baseline.
"""
from django.core.management.base import BaseCommand, CommandError

from flow.cli import (
    add_flow_arguments, add_instance_arguments, add_mcmc_arguments, add_output_arguments,
    output_directory, resolve_instance, run_config,
)
from flow.engine.experiments import compute_reference, run_sweep
from flow.engine.reference import McmcConfig
from flow.exceptions import command_error_from, describe_error
from flow.ledger import record_failure, record_report


class Command(BaseCommand):
    help = 'Run Decision Flow for every K=S in --sizes and every repetition seed, with an MCMC baseline'

    def add_arguments(self, parser):
        add_instance_arguments(parser)
        add_flow_arguments(parser)
        parser.add_argument(
            '--sizes',
            type=int,
            nargs='+',
            help='Strictly increasing K=S values, e.g. --sizes 1000 10000 50000'
        )
        parser.add_argument('--repetitions', type=int, help='Seeds per size: seed, seed+1, ...')
        parser.add_argument('--label', help='Sweep directory name (default derived from mode and seed)')
        parser.add_argument('--no-baseline', action='store_true', help='Skip the MCMC baseline rows')
        add_output_arguments(parser)
        add_mcmc_arguments(parser)

    def handle(self, *args, **options):
        failures = []
        try:
            config = run_config(options, 'sweep')
            inst = resolve_instance(config)
            label = options.get('label') or f"sweep-{config['mode']}-seed{config['seed']}"
            reference = compute_reference(inst, config['reference'], config['seed'])
            mcmc = None
            if not options['no_baseline']:
                mcmc = McmcConfig(
                    total=config['mcmc_total'],
                    burn_in=config['mcmc_burn_in'],
                    stride=config['mcmc_stride'],
                    seed=config['seed'],
                    chains=config['mcmc_chains'],
                )

            def on_row(row, outcome, error):
                if outcome is not None:
                    record_report('sweep', label, outcome.report, outcome.run_dir)
                else:
                    failures.append(error)
                    record_failure('sweep', label, row, error, reference=config['reference'])
                self.stdout.write(
                    f"   {row['method']:4s} S={row['S']:>7} seed={row['seed']}: "
                    f"{row['status']} delta1={row['delta1'] or '-'} delta2={row['delta2'] or '-'}"
                )

            outcome = run_sweep(
                inst, config['sizes'], reference, output_directory(config) / label,
                mode=config['mode'],
                seed=config['seed'],
                repetitions=config['repetitions'],
                mcmc=mcmc,
                degeneracy=config['degeneracy'],
                min_visits=config['min_visits'],
                threads=config['threads'],
                bins=config['bins'],
                config_echo=config,
                on_row=on_row,
            )
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        self.stdout.write(self.style.SUCCESS(f'\nSweep written to {outcome.sweep_dir}'))
        for entry in outcome.summary:
            self.stdout.write(
                f"   {entry['method']:4s} S={entry['S']:>7} runs={entry['runs']} "
                f"median delta1={entry['delta1_median']} median delta2={entry['delta2_median']}"
            )

        if failures:
            first = describe_error(failures[0])
            raise CommandError(
                f"[{first['error']}] {len(failures)} of {len(outcome.rows)} sweep rows failed; "
                f"first failure: {first['message']}",
                returncode=first['exit_code'],
            )
