"""
Generate a reproducible random planar Ising instance file.
"""
from django.core.management.base import BaseCommand, CommandError

from flow.engine.ising import random_instance, save_instance
from flow.exceptions import command_error_from
from flow.serializers import GridSerializer, input_error_from


class Command(BaseCommand):
    help = 'Generate a rows x cols grid instance with J and h drawn from Uniform[-1, 1]'

    def add_arguments(self, parser):
        parser.add_argument('--rows', type=int, required=True, help='Grid rows')
        parser.add_argument('--cols', type=int, required=True, help='Grid columns')
        parser.add_argument('--seed', type=int, default=0, help='Generation seed (default: 0)')
        parser.add_argument('--output', required=True, help='Instance file to write')

    def handle(self, *args, **options):
        try:
            grid = GridSerializer(data={'rows': options['rows'], 'cols': options['cols']})
            if not grid.is_valid():
                raise input_error_from(grid.errors)

            inst = random_instance(options['rows'], options['cols'], options['seed'])
            path = save_instance(inst, options['output'])
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        self.stdout.write(self.style.SUCCESS(
            f"Wrote {options['rows']}x{options['cols']} instance "
            f"({inst.n_nodes} nodes, {inst.n_edges} edges, seed {options['seed']}) to {path}"
        ))
