"""
Metropolis-Hastings baseline run scored like a Decision Flow run.
"""
from django.core.management.base import BaseCommand, CommandError

from flow.cli import add_instance_arguments, add_output_arguments, output_directory, resolve_instance, run_config
from flow.conf import flow_setting
from flow.engine.experiments import compute_reference, run_mcmc
from flow.exceptions import command_error_from
from flow.ledger import record_report
from flow.serializers import McmcConfigSerializer


class Command(BaseCommand):
    help = 'Single-flip Metropolis-Hastings with burn-in and stride, scored against a reference'

    def add_arguments(self, parser):
        add_instance_arguments(parser)
        parser.add_argument('--seed', type=int, default=0, help='Chain seed (default: 0)')
        parser.add_argument('--total', type=int, help='Steps per chain (default: DF_MCMC_TOTAL)')
        parser.add_argument('--burn-in', type=int, help='Steps discarded before recording')
        parser.add_argument('--stride', type=int, help='Record every n-th step after burn-in')
        parser.add_argument(
            '--chains', type=int, default=1, help='Independent chains, each running --total steps (default: 1)'
        )
        parser.add_argument(
            '--reference',
            choices=['exact', 'mcmc'],
            default='exact',
            help='Reference the metrics are computed against (default: exact)'
        )
        add_output_arguments(parser)

    def handle(self, *args, **options):
        try:
            config = run_config(options, 'mcmc')
            chain = McmcConfigSerializer(data={
                'total': flow_setting('MCMC_TOTAL') if options['total'] is None else options['total'],
                'burn_in': flow_setting('MCMC_BURN_IN') if options['burn_in'] is None else options['burn_in'],
                'stride': flow_setting('MCMC_STRIDE') if options['stride'] is None else options['stride'],
                'seed': options['seed'],
                'chains': options['chains'],
            }).build_config()
            inst = resolve_instance(config)
            reference = compute_reference(inst, config['reference'], config['seed'])
            outcome = run_mcmc(
                inst, chain, reference, output_directory(config),
                bins=config['bins'],
                config_echo=dict(config, mcmc_total=chain.total, mcmc_burn_in=chain.burn_in,
                                 mcmc_stride=chain.stride, mcmc_chains=chain.chains),
            )
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        record_report('mcmc', outcome.run_dir.name, outcome.report, outcome.run_dir)

        report = outcome.report
        self.stdout.write(self.style.SUCCESS(f'MCMC run complete: {outcome.run_dir}'))
        self.stdout.write(f'   recorded samples: {report.n_samples}')
        self.stdout.write(f'   delta1: {report.delta1:.6g}')
        self.stdout.write(f'   delta2: {report.delta2:.6g}')
        if report.sample_tv is not None:
            self.stdout.write(f'   sample TV: {report.sample_tv:.6g}')
