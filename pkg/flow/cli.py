"""
Argument groups and option handling shared by the management commands.
"""
from pathlib import Path

from .conf import flow_setting
from .engine.ising import load_instance, random_instance
from .serializers import RunConfigSerializer, input_error_from

# argparse dest -> RunConfigSerializer field
OPTION_FIELDS = {
    'instance': 'instance_path',
    'rows': 'rows',
    'cols': 'cols',
    'instance_seed': 'instance_seed',
    'mode': 'mode',
    'paths': 'paths',
    'samples': 'samples',
    'sizes': 'sizes',
    'seed': 'seed',
    'repetitions': 'repetitions',
    'reference': 'reference',
    'degeneracy': 'degeneracy',
    'min_visits': 'min_visits',
    'mcmc_total': 'mcmc_total',
    'mcmc_burn_in': 'mcmc_burn_in',
    'mcmc_stride': 'mcmc_stride',
    'mcmc_chains': 'mcmc_chains',
    'bins': 'bins',
    'output_dir': 'output_dir',
    'threads': 'threads',
    'log_paths': 'log_paths',
    'snapshot': 'snapshot',
}


def add_instance_arguments(parser):
    parser.add_argument('--instance', help='Instance file to load')
    parser.add_argument('--rows', type=int, help='Generate a grid instance with this many rows')
    parser.add_argument('--cols', type=int, help='Generate a grid instance with this many columns')
    parser.add_argument(
        '--instance-seed',
        type=int,
        default=0,
        help='Seed for a generated instance (default: 0)'
    )


def add_output_arguments(parser):
    parser.add_argument(
        '--output-dir',
        help='Directory for run artifacts (default: DF_OUTPUT_ROOT)'
    )
    parser.add_argument('--bins', type=int, help='Energy histogram bins')
    parser.add_argument('--threads', type=int, help='Worker threads; 1 forces the sequential path')


def add_flow_arguments(parser):
    parser.add_argument(
        '--mode',
        choices=['exact', 'empirical'],
        default='empirical',
        help='Build the posterior from the full prior DAG or from K sampled paths'
    )
    parser.add_argument('--seed', type=int, default=0, help='Master seed (default: 0)')
    parser.add_argument(
        '--reference',
        choices=['exact', 'mcmc'],
        default='exact',
        help='Reference the metrics are computed against (default: exact)'
    )
    parser.add_argument(
        '--degeneracy',
        choices=['literal', 'prior'],
        default='literal',
        help='Use the raw empirical estimator, or the prior at sparsely visited states'
    )
    parser.add_argument('--min-visits', type=int, help='Visit threshold for --degeneracy prior')


def add_mcmc_arguments(parser):
    parser.add_argument('--mcmc-total', type=int, help='Metropolis-Hastings steps per chain')
    parser.add_argument('--mcmc-burn-in', type=int, help='Steps discarded before recording')
    parser.add_argument('--mcmc-stride', type=int, help='Record every n-th step after burn-in')
    parser.add_argument('--mcmc-chains', type=int, default=1, help='Independent chains (default: 1)')


def run_config(options, command):
    """Validate command options into a run configuration dict."""
    data = {
        field: options[dest]
        for dest, field in OPTION_FIELDS.items()
        if options.get(dest) is not None
    }
    serializer = RunConfigSerializer(data=data, context={'command': command})
    if not serializer.is_valid():
        raise input_error_from(serializer.errors)
    return dict(serializer.validated_data)


def resolve_instance(config):
    if config['instance_path'] is not None:
        return load_instance(config['instance_path'])
    return random_instance(config['rows'], config['cols'], config['instance_seed'])


def output_directory(config):
    value = config.get('output_dir')
    return Path(value) if value else Path(flow_setting('OUTPUT_ROOT'))
