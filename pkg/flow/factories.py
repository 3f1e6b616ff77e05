"""
Test data factories for run ledger rows.
"""
import factory

from .models import ExperimentRun


class ExperimentRunFactory(factory.django.DjangoModelFactory):
    class Meta:
        model = ExperimentRun

    command = 'run'
    label = factory.Sequence(lambda n: f'run-empirical-K1000-S1000-seed{n}')
    method = 'df'
    mode = 'empirical'
    n_paths = 1000
    n_samples = 1000
    seed = factory.Sequence(lambda n: n)
    reference = 'exact'
    delta1 = 0.05
    delta2 = 0.08
    tv = 0.01
    sample_tv = 0.12
    status = ExperimentRun.STATUS_COMPLETED
    run_dir = factory.LazyAttribute(lambda run: f'runs/{run.label}')
    timings = factory.LazyFunction(lambda: {'prior': 12.5, 'solve': 3.0})


class FailedRunFactory(ExperimentRunFactory):
    delta1 = None
    delta2 = None
    tv = None
    sample_tv = None
    status = ExperimentRun.STATUS_FAILED
    error_class = 'degeneracy'
    error_message = 'Every successor of root 0 has zero desirability'
    run_dir = ''
    timings = factory.LazyFunction(dict)


class McmcRunFactory(ExperimentRunFactory):
    label = factory.Sequence(lambda n: f'run-mcmc-S300-seed{n}')
    method = 'mcmc'
    mode = ''
    n_paths = None
    n_samples = 300
    tv = None
