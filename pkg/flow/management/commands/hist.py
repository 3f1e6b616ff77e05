"""
Energy histogram of a sample file, against the exact Gibbs density when the
instance is small enough to enumerate.
"""
import math
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from flow.conf import flow_setting
from flow.engine.decision_flow import read_samples
from flow.engine.experiments import histogram_against_gibbs, write_histogram_plot
from flow.engine.ising import load_instance
from flow.engine.metrics import energy_histogram, write_histogram_csv
from flow.engine.reference import exact_gibbs
from flow.exceptions import CapacityError, InputError, command_error_from


class Command(BaseCommand):
    help = 'Write histogram.csv and histogram.svg for the energies of a sample set'

    def add_arguments(self, parser):
        parser.add_argument(
            '--run-dir',
            help='Run directory holding instance.json and samples.txt'
        )
        parser.add_argument('--instance', help='Instance file (with --samples-file)')
        parser.add_argument('--samples-file', help='Sample file, one +1/-1 configuration per line')
        parser.add_argument('--bins', type=int, help='Histogram bins (default: DF_HISTOGRAM_BINS)')
        parser.add_argument('--output-dir', help='Where to write the histogram (default: the run directory)')
        parser.add_argument('--no-exact', action='store_true', help='Skip the exact Gibbs overlay')

    def handle(self, *args, **options):
        try:
            instance_path, samples_path, output_dir = self._sources(options)
            inst = load_instance(instance_path)
            samples = read_samples(samples_path, inst.n_nodes)
            histogram = energy_histogram(inst, samples, options.get('bins'))

            gibbs = None
            if not options['no_exact']:
                try:
                    gibbs = exact_gibbs(inst)
                except CapacityError:
                    self.stdout.write(self.style.WARNING(
                        f'   {inst.n_nodes} nodes is too many to enumerate; plotting samples only'
                    ))

            exact_density = histogram_against_gibbs(histogram, gibbs) if gibbs is not None else None
            csv_path = write_histogram_csv(histogram, output_dir / 'histogram.csv')
            svg_path = write_histogram_plot(histogram, output_dir / 'histogram.svg', exact_density)
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        self.stdout.write(self.style.SUCCESS(f'Energy histogram of {len(samples)} samples'))
        self.stdout.write('=' * 60)
        self.stdout.write(f'   sample mean energy: {histogram.mean_energy:.6f}')
        if gibbs is not None:
            standard_error = math.sqrt(gibbs.energy_variance / len(samples))
            gap = abs(histogram.mean_energy - gibbs.mean_energy)
            style = self.style.SUCCESS if gap <= 3 * standard_error else self.style.WARNING
            self.stdout.write(style(
                f'   exact mean energy:  {gibbs.mean_energy:.6f} +/- {standard_error:.6f} '
                f'({gap / standard_error if standard_error else 0.0:.2f} s.e. away)'
            ))
        self.stdout.write(f'   {csv_path}')
        self.stdout.write(f'   {svg_path}')

    def _sources(self, options):
        run_dir = options.get('run_dir')
        if run_dir:
            run_dir = Path(run_dir)
            instance_path = Path(options['instance']) if options.get('instance') else run_dir / 'instance.json'
            samples_path = Path(options['samples_file']) if options.get('samples_file') else run_dir / 'samples.txt'
            default_output = run_dir
        else:
            if not options.get('instance') or not options.get('samples_file'):
                raise InputError(
                    "Give --run-dir, or both --instance and --samples-file",
                    field='samples_file',
                )
            instance_path = Path(options['instance'])
            samples_path = Path(options['samples_file'])
            default_output = Path(flow_setting('OUTPUT_ROOT'))
        output_dir = Path(options['output_dir']) if options.get('output_dir') else default_output
        return instance_path, samples_path, output_dir
