"""
Solve a plain-text LS-MDP problem: values, optimal policy and the cost identity.
"""
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError

from flow.engine.lsmdp import backward_values, cost, format_policy, optimal_policy, parse_problem
from flow.exceptions import InputError, VerificationError, command_error_from

COST_TOLERANCE = 1e-9


class Command(BaseCommand):
    help = 'Run the backward sweep on an LS-MDP text file, print -log u_0 per root and write the policy'

    def add_arguments(self, parser):
        parser.add_argument('problem', help='LS-MDP problem file (state/edge lines)')
        parser.add_argument('--output', help='Write values and policy to this file instead of stdout')
        parser.add_argument(
            '--tolerance',
            type=float,
            default=COST_TOLERANCE,
            help=f'Allowed |cost - Psi_0| per root (default: {COST_TOLERANCE})'
        )

    def handle(self, *args, **options):
        try:
            path = Path(options['problem'])
            try:
                text = path.read_text()
            except OSError as exc:
                raise InputError(f"Cannot read problem file {path}: {exc.strerror}", field='problem')

            problem = parse_problem(text)
            values = backward_values(problem)
            policy = optimal_policy(problem, values)
            roots = problem.graph.levels[0].ids
            psi = values.root_costs()
            for position, root in enumerate(roots):
                if not np.isfinite(psi[position]):
                    continue
                achieved = cost(problem, policy, root=position)
                if abs(achieved - psi[position]) > options['tolerance'] * max(1.0, abs(psi[position])):
                    raise VerificationError(
                        f"Cost under the optimal policy from root {root} is {achieved!r}, "
                        f"but -log u_0 is {psi[position]!r}"
                    )
            rendered = format_policy(policy)
            if options.get('output'):
                output = Path(options['output'])
                output.parent.mkdir(parents=True, exist_ok=True)
                output.write_text(rendered)
        except CommandError:
            raise
        except Exception as exc:
            raise command_error_from(exc)

        self.stdout.write(self.style.SUCCESS(
            f'Solved {path.name}: {problem.graph.n_states} states, horizon {problem.horizon}'
        ))
        for root, value in zip(roots, psi):
            self.stdout.write(f'root {root} {float(value)!r}')
        if options.get('output'):
            self.stdout.write(f"policy written to {options['output']}")
        else:
            self.stdout.write(rendered, ending='')
