from rest_framework import serializers

from experiments.bundles import ALGORITHMS, ExperimentBundle
from smc.filters import RESAMPLERS
from stochkin.exceptions import StochKinError

LNA_ALGORITHMS = ('dapmmh-lna', 'approx-lna')
CLE_ALGORITHMS = ('dapmmh-cle', 'approx-cle')

# keys that only make sense for some algorithms
APPLICABLE = {
    'tau': LNA_ALGORITHMS,
    'rtol': LNA_ALGORITHMS,
    'dt_max': CLE_ALGORITHMS,
    'N1': ('dapmmh-cle',),
    'N': ('pmmh', 'dapmmh-lna', 'dapmmh-cle', 'approx-cle'),
}


def _positive(value, name):
    if not value > 0:
        raise serializers.ValidationError(f"{name} must be positive")
    return value


class RunConfigSerializer(serializers.Serializer):
    """
    Validates a run config document. Unknown keys and keys that do not apply to the
    chosen algorithm are errors.
    """
    experiment = serializers.CharField()
    algorithm = serializers.ChoiceField(choices=ALGORITHMS)
    N = serializers.JSONField(required=False, help_text="Particle count, or the path of a tuning.json")
    N1 = serializers.IntegerField(min_value=1, required=False)
    iters = serializers.IntegerField(min_value=1)
    burn_in = serializers.FloatField(min_value=0.0, default=0.1)
    tau = serializers.FloatField(min_value=1.0, required=False)
    dt_max = serializers.FloatField(required=False)
    rtol = serializers.FloatField(required=False)
    seed = serializers.IntegerField(min_value=0)
    workers = serializers.IntegerField(min_value=1, default=1)
    output_dir = serializers.CharField(required=False)
    d_eff = serializers.FloatField(required=False)
    covariance = serializers.JSONField(required=False, help_text="Path of a pilot.json, or a d x d matrix")
    initial = serializers.ListField(child=serializers.FloatField(), required=False, allow_empty=False)
    resampling = serializers.ChoiceField(choices=sorted(RESAMPLERS), default='multinomial')
    density = serializers.BooleanField(default=True)
    progress = serializers.BooleanField(default=False)

    def get_fields(self):
        fields = super().get_fields()
        # "lambda" cannot be a class attribute name
        fields['lambda'] = serializers.FloatField(required=False)
        return fields

    def validate_N(self, value):
        if isinstance(value, bool) or not isinstance(value, (int, str)):
            raise serializers.ValidationError("N must be an integer or the path of a tuning.json")
        if isinstance(value, int) and value < 1:
            raise serializers.ValidationError("N must be at least 1")
        return value

    def validate_burn_in(self, value):
        if value >= 1:
            raise serializers.ValidationError("burn_in is a fraction in [0, 1)")
        return value

    def validate_dt_max(self, value):
        return _positive(value, 'dt_max')

    def validate_rtol(self, value):
        return _positive(value, 'rtol')

    def validate_d_eff(self, value):
        return _positive(value, 'd_eff')

    def validate_lambda(self, value):
        return _positive(value, 'lambda')

    def validate_covariance(self, value):
        if isinstance(value, str):
            return value
        if (not isinstance(value, list) or not value
                or any(not isinstance(row, list) or len(row) != len(value) for row in value)):
            raise serializers.ValidationError("covariance must be a pilot.json path or a square matrix")
        return value

    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: "Unknown key" for key in unknown})
        algorithm = attrs['algorithm']
        errors = {
            key: f"Does not apply to {algorithm}"
            for key, algorithms in APPLICABLE.items()
            if key in self.initial_data and algorithm not in algorithms
        }
        if algorithm in CLE_ALGORITHMS and 'dt_max' not in attrs:
            errors['dt_max'] = f"Required for {algorithm}"
        if errors:
            raise serializers.ValidationError(errors)
        return attrs


class ReactionSpecSerializer(serializers.Serializer):
    name = serializers.CharField(required=False)
    reactants = serializers.DictField(child=serializers.IntegerField(min_value=0), required=False)
    products = serializers.DictField(child=serializers.IntegerField(min_value=0), required=False)
    hazard = serializers.DictField()


class NetworkSpecSerializer(serializers.Serializer):
    species = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    parameters = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    reactions = ReactionSpecSerializer(many=True, allow_empty=False)


class InitialStateSerializer(serializers.Serializer):
    t = serializers.FloatField()
    x = serializers.ListField(child=serializers.IntegerField(min_value=0), allow_empty=False)


class ModelSpecSerializer(serializers.Serializer):
    """
    A user-defined experiment: network, observation model, priors, initial state and
    either the data or the truth and seed to simulate it.
    """
    name = serializers.CharField(default='custom')
    network = NetworkSpecSerializer()
    observation = serializers.DictField()
    prior = serializers.ListField(child=serializers.DictField(), allow_empty=False)
    x1 = InitialStateSerializer()
    times = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    values = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), required=False)
    true_params = serializers.ListField(child=serializers.FloatField(), required=False, allow_null=True)
    data_seed = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    defaults = serializers.DictField(required=False)

    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: "Unknown key" for key in unknown})
        try:
            attrs['bundle'] = ExperimentBundle.from_spec(attrs)
        except (KeyError, IndexError, TypeError, ValueError, StochKinError) as e:
            raise serializers.ValidationError(f"Inconsistent model: {e}")
        return attrs

    def create(self, validated_data):
        return validated_data['bundle']


class RunReportSerializer(serializers.Serializer):
    """The report.json written next to a chain."""
    experiment = serializers.CharField()
    seed = serializers.IntegerField()
    algorithm = serializers.CharField()
    parameters = serializers.ListField(child=serializers.CharField())
    iterations = serializers.IntegerField()
    burn_in = serializers.IntegerField()
    alpha1 = serializers.FloatField()
    alpha2_given_1 = serializers.FloatField(allow_null=True)
    acceptance_rate = serializers.FloatField()
    accepted = serializers.IntegerField()
    stage2_invocations = serializers.IntegerField(allow_null=True)
    prior_rejections = serializers.IntegerField()
    filter_calls = serializers.IntegerField()
    surrogate_calls = serializers.IntegerField()
    filter_calls_per_accepted = serializers.FloatField(allow_null=True)
    ess_per_param = serializers.DictField(child=serializers.FloatField(allow_null=True))
    ess_min = serializers.FloatField(allow_null=True)
    ess_min_per_second = serializers.FloatField(allow_null=True)
    wall_time = serializers.FloatField()
    config = serializers.DictField()
