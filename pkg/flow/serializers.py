"""
Serializers for the sampling engine's documents.
Handles validation of instance files and run configurations, and the JSON
form of metrics reports and ledger rows.
"""
from rest_framework import serializers

from .conf import flow_setting
from .exceptions import InputError, InstanceParseError, InstanceValidationError
from .models import ExperimentRun
from .validators import GridDimensionValidator, StrictlyIncreasingValidator

INVARIANT = 'invariant'


class EdgeField(serializers.Field):
    """
    A single ``[a, b, J]`` edge entry.
    """
    default_error_messages = {
        'shape': 'Edge must be a list of [a, b, J].',
        'node': 'Edge endpoints must be integers.',
        'coupling': 'Edge coupling must be a real number.',
    }

    def to_internal_value(self, data):
        if not isinstance(data, (list, tuple)) or len(data) != 3:
            self.fail('shape')
        a, b, coupling = data
        if isinstance(a, bool) or isinstance(b, bool) or not isinstance(a, int) or not isinstance(b, int):
            self.fail('node')
        if isinstance(coupling, bool) or not isinstance(coupling, (int, float)):
            self.fail('coupling')
        return (a, b, float(coupling))

    def to_representation(self, value):
        a, b, coupling = value
        return [a, b, coupling]


class GridSerializer(serializers.Serializer):
    rows = serializers.IntegerField(validators=[GridDimensionValidator()])
    cols = serializers.IntegerField(validators=[GridDimensionValidator()])


class IsingInstanceSerializer(serializers.Serializer):
    """
    Serializer for instance files.
    Field-level failures are parse errors; cross-field invariants are
    validation errors.
    """
    version = serializers.IntegerField(min_value=1, max_value=1)
    n_nodes = serializers.IntegerField(min_value=1)
    grid = GridSerializer(allow_null=True, required=False, default=None)
    edges = serializers.ListField(child=EdgeField(), allow_empty=True)
    h = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    seed = serializers.IntegerField(default=0)

    def validate(self, attrs):
        """Check the structural invariants of the instance."""
        n_nodes = attrs['n_nodes']
        if len(attrs['h']) != n_nodes:
            raise serializers.ValidationError({
                'h': f"Bias vector has length {len(attrs['h'])} but n_nodes is {n_nodes}."
            }, code=INVARIANT)

        seen = set()
        for position, (a, b, _) in enumerate(attrs['edges']):
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise serializers.ValidationError({
                    'edges': f"Edge {position} ({a}, {b}) references a node outside [0, {n_nodes})."
                }, code=INVARIANT)
            if a == b:
                raise serializers.ValidationError({
                    'edges': f"Edge {position} is a self loop on node {a}."
                }, code=INVARIANT)
            key = (min(a, b), max(a, b))
            if key in seen:
                raise serializers.ValidationError({
                    'edges': f"Duplicate edge {key}."
                }, code=INVARIANT)
            seen.add(key)

        grid = attrs.get('grid')
        if grid is not None and grid['rows'] * grid['cols'] != n_nodes:
            raise serializers.ValidationError({
                'grid': f"Grid {grid['rows']}x{grid['cols']} does not match n_nodes {n_nodes}."
            }, code=INVARIANT)
        return attrs

    def build_instance(self):
        """Validate and return an IsingInstance, raising the engine's errors."""
        from .engine.ising import IsingInstance

        if not self.is_valid():
            detail = _first_detail(self.errors)
            if getattr(detail, 'code', None) == INVARIANT:
                raise input_error_from(self.errors, InstanceValidationError)
            raise input_error_from(self.errors, InstanceParseError)

        data = self.validated_data
        grid = data.get('grid')
        return IsingInstance(
            n_nodes=data['n_nodes'],
            edges=tuple(data['edges']),
            h=data['h'],
            grid=(grid['rows'], grid['cols']) if grid else None,
            seed=data['seed'],
        )


def _first_detail(details):
    while isinstance(details, (list, dict)):
        details = next(iter(details.values())) if isinstance(details, dict) else details[0]
    return details


def input_error_from(errors, error_type=InputError):
    """Turn the first serializer error into a domain error naming its field."""
    field, details = next(iter(errors.items()))
    detail = _first_detail(details)
    if field == 'non_field_errors':
        return error_type(str(detail))
    return error_type(f"{field}: {detail}", field=field)


class McmcConfigSerializer(serializers.Serializer):
    """
    Serializer for Metropolis-Hastings settings.
    """
    total = serializers.IntegerField(min_value=1)
    burn_in = serializers.IntegerField(min_value=0)
    stride = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(default=0)
    chains = serializers.IntegerField(min_value=1, default=1)

    def validate(self, attrs):
        if attrs['burn_in'] >= attrs['total']:
            raise serializers.ValidationError({
                'burn_in': f"Burn-in ({attrs['burn_in']}) must be smaller than total ({attrs['total']})."
            })
        return attrs

    def build_config(self):
        from .engine.reference import McmcConfig

        if not self.is_valid():
            raise input_error_from(self.errors)
        return McmcConfig(**self.validated_data)


class RunConfigSerializer(serializers.Serializer):
    """
    Serializer for the options of the run and sweep commands.
    The validated data doubles as the config echo written next to each run.
    """
    instance_path = serializers.CharField(required=False, allow_null=True, default=None)
    rows = serializers.IntegerField(required=False, allow_null=True, default=None,
                                    validators=[GridDimensionValidator()])
    cols = serializers.IntegerField(required=False, allow_null=True, default=None,
                                    validators=[GridDimensionValidator()])
    instance_seed = serializers.IntegerField(default=0)
    mode = serializers.ChoiceField(choices=['exact', 'empirical'], default='empirical')
    paths = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    samples = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    sizes = serializers.ListField(
        child=serializers.IntegerField(min_value=1),
        required=False,
        allow_null=True,
        default=None,
        validators=[StrictlyIncreasingValidator()],
    )
    seed = serializers.IntegerField(default=0)
    repetitions = serializers.IntegerField(min_value=1, required=False)
    reference = serializers.ChoiceField(choices=['exact', 'mcmc'], default='exact')
    degeneracy = serializers.ChoiceField(choices=['literal', 'prior'], default='literal')
    min_visits = serializers.IntegerField(min_value=1, required=False)
    mcmc_total = serializers.IntegerField(min_value=1, required=False)
    mcmc_burn_in = serializers.IntegerField(min_value=0, required=False)
    mcmc_stride = serializers.IntegerField(min_value=1, required=False)
    mcmc_chains = serializers.IntegerField(min_value=1, default=1)
    bins = serializers.IntegerField(min_value=1, required=False)
    output_dir = serializers.CharField(required=False, allow_null=True, default=None)
    threads = serializers.IntegerField(min_value=1, required=False)
    log_paths = serializers.BooleanField(default=False)
    snapshot = serializers.BooleanField(default=False)

    def validate(self, attrs):
        """Fill configured defaults and check cross-field constraints."""
        attrs.setdefault('repetitions', flow_setting('REPETITIONS'))
        attrs.setdefault('min_visits', flow_setting('MIN_VISITS'))
        attrs.setdefault('mcmc_total', flow_setting('MCMC_TOTAL'))
        attrs.setdefault('mcmc_burn_in', flow_setting('MCMC_BURN_IN'))
        attrs.setdefault('mcmc_stride', flow_setting('MCMC_STRIDE'))
        attrs.setdefault('bins', flow_setting('HISTOGRAM_BINS'))
        attrs.setdefault('threads', flow_setting('THREADS'))

        has_grid = attrs['rows'] is not None or attrs['cols'] is not None
        if attrs['instance_path'] is None and not has_grid:
            raise serializers.ValidationError(
                "Provide either an instance file or --rows/--cols to generate one."
            )
        if attrs['instance_path'] is not None and has_grid:
            raise serializers.ValidationError(
                "Give either an instance file or grid dimensions, not both."
            )
        if has_grid and (attrs['rows'] is None or attrs['cols'] is None):
            raise serializers.ValidationError("Both --rows and --cols are required to generate an instance.")
        command = self.context.get('command')
        if command == 'run':
            if attrs['samples'] is None:
                raise serializers.ValidationError({'samples': "A run needs the posterior sample count S."})
            if attrs['mode'] == 'empirical' and attrs['paths'] is None:
                raise serializers.ValidationError({'paths': "Empirical mode needs the prior path count K."})
        if command == 'sweep' and attrs['sizes'] is None:
            raise serializers.ValidationError({'sizes': "A sweep needs a list of K=S sizes."})
        if attrs['mcmc_burn_in'] >= attrs['mcmc_total']:
            raise serializers.ValidationError({
                'mcmc_burn_in': "MCMC burn-in must be smaller than the total sample count."
            })
        return attrs


class HistogramSerializer(serializers.Serializer):
    edges = serializers.ListField(child=serializers.FloatField())
    densities = serializers.ListField(child=serializers.FloatField())
    mean_energy = serializers.FloatField()


class MetricsReportSerializer(serializers.Serializer):
    """
    JSON form of a MetricsReport.
    """
    method = serializers.CharField()
    mode = serializers.CharField(allow_null=True)
    n_paths = serializers.IntegerField(allow_null=True)
    n_samples = serializers.IntegerField()
    seed = serializers.IntegerField()
    reference = serializers.CharField()
    delta1 = serializers.FloatField()
    delta2 = serializers.FloatField()
    tv = serializers.FloatField(allow_null=True)
    sample_tv = serializers.FloatField(allow_null=True)
    clamped_magnetizations = serializers.IntegerField()
    clamped_correlations = serializers.IntegerField()
    energy_histogram = HistogramSerializer()
    timings_ms = serializers.DictField(child=serializers.FloatField())


class ExperimentRunSerializer(serializers.ModelSerializer):
    """
    Serializer for run ledger rows.
    """

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'command', 'label', 'method', 'mode', 'n_paths', 'n_samples',
            'seed', 'reference', 'delta1', 'delta2', 'tv', 'sample_tv',
            'status', 'error_class', 'run_dir', 'timings', 'created_at',
        ]
        read_only_fields = fields
