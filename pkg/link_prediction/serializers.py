"""
Serializers for HyperKG run configurations and reports.

RunConfigSerializer validates the ``key = value`` run configuration files;
the report serializers turn training and ranking results into JSON.
"""

from django.conf import settings
from rest_framework import serializers

from .hyper.evaluation import HEAD, SUMMARY_METRICS, TAIL, TIE_POLICIES
from .hyper.model import ACTIVATIONS

# Per-dataset defaults; learning rate and decay are dataset-specific and left at the field defaults.
PRESETS = {
    'none': {},
    'wn18rr': {'input_dropout': 0.2, 'feature_map_dropout': 0.2, 'hidden_dropout': 0.3, 'label_smoothing': 0.1},
    'fb15k-237': {'input_dropout': 0.3, 'feature_map_dropout': 0.2, 'hidden_dropout': 0.3, 'label_smoothing': 0.1},
    'wn18': {'input_dropout': 0.2, 'feature_map_dropout': 0.2, 'hidden_dropout': 0.3, 'label_smoothing': 0.1},
    'fb15k': {'input_dropout': 0.2, 'feature_map_dropout': 0.2, 'hidden_dropout': 0.3, 'label_smoothing': 0.0},
    'yago3-10': {'input_dropout': 0.2, 'feature_map_dropout': 0.2, 'hidden_dropout': 0.3, 'label_smoothing': 0.1},
}

PRECISIONS = ('float64', 'float32')


def _below_one(value):
    if value >= 1.0:
        raise serializers.ValidationError('must be less than 1')


def _positive(value):
    if value <= 0:
        raise serializers.ValidationError('must be positive')


def _default_precision():
    return settings.HYPERKG_FLOAT_DTYPE


def _default_eval_batch_size():
    return settings.HYPERKG_EVAL_BATCH_SIZE


class RunConfigSerializer(serializers.Serializer):
    """
    Validates a run configuration.

    Unknown keys are rejected. Keys missing from the input take their value
    from the selected preset first and the field default second. Without the
    hypernetwork an unset ``relation_dim`` becomes ``filter_length * num_filters``;
    with it, ``embedding_dim``.
    """
    # locations
    dataset_dir = serializers.CharField(default='data/toy')
    output_dir = serializers.CharField(default='runs/default')
    preset = serializers.ChoiceField(choices=sorted(PRESETS), default='none')

    # model
    embedding_dim = serializers.IntegerField(default=200, min_value=1)
    relation_dim = serializers.IntegerField(required=False, min_value=1)
    filter_length = serializers.IntegerField(default=9, min_value=1)
    num_filters = serializers.IntegerField(default=32, min_value=1)
    hypernetwork = serializers.BooleanField(default=True)
    input_dropout = serializers.FloatField(default=0.2, min_value=0.0, validators=[_below_one])
    feature_map_dropout = serializers.FloatField(default=0.2, min_value=0.0, validators=[_below_one])
    hidden_dropout = serializers.FloatField(default=0.3, min_value=0.0, validators=[_below_one])
    batchnorm = serializers.BooleanField(default=True)
    activation = serializers.ChoiceField(choices=ACTIVATIONS, default='relu')

    # optimization
    learning_rate = serializers.FloatField(default=0.001, validators=[_positive])
    lr_decay = serializers.FloatField(default=0.995, max_value=1.0, validators=[_positive])
    batch_size = serializers.IntegerField(default=128, min_value=1)
    epochs = serializers.IntegerField(default=100, min_value=0)
    label_smoothing = serializers.FloatField(default=0.1, min_value=0.0, validators=[_below_one])
    seed = serializers.IntegerField(default=0, min_value=0)
    eval_every = serializers.IntegerField(default=1, min_value=0)
    init_scale = serializers.FloatField(default=1.0, validators=[_positive])
    precision = serializers.ChoiceField(choices=PRECISIONS, default=_default_precision)

    # evaluation
    tie_policy = serializers.ChoiceField(choices=TIE_POLICIES, default='optimistic')
    eval_batch_size = serializers.IntegerField(default=_default_eval_batch_size, min_value=1)

    def validate(self, attrs):
        unknown = sorted(set(self.initial_data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: 'unknown configuration key' for key in unknown})

        for key, value in PRESETS[attrs['preset']].items():
            if key not in self.initial_data:
                attrs[key] = self.fields[key].to_internal_value(value)

        if 'relation_dim' not in attrs:
            if attrs['hypernetwork']:
                attrs['relation_dim'] = attrs['embedding_dim']
            else:
                attrs['relation_dim'] = attrs['filter_length'] * attrs['num_filters']

        if attrs['filter_length'] > attrs['embedding_dim']:
            raise serializers.ValidationError(
                {'filter_length': f'must not exceed embedding_dim ({attrs["embedding_dim"]})'})
        if not attrs['hypernetwork'] and attrs['relation_dim'] != attrs['filter_length'] * attrs['num_filters']:
            raise serializers.ValidationError(
                {'relation_dim': 'must equal filter_length * num_filters when the hypernetwork is disabled'})
        return attrs


# =============================================================================
# Reports
# =============================================================================

class RankingSummarySerializer(serializers.Serializer):
    mr = serializers.FloatField()
    mrr = serializers.FloatField()
    hits_at_1 = serializers.FloatField()
    hits_at_3 = serializers.FloatField()
    hits_at_10 = serializers.FloatField()
    count = serializers.IntegerField()


class RankingReportSerializer(RankingSummarySerializer):
    """
    Aggregate metrics plus the same metrics per query direction.
    """
    split = serializers.SerializerMethodField()
    tie_policy = serializers.SerializerMethodField()
    directions = serializers.SerializerMethodField()

    def get_split(self, report):
        return self.context.get('split')

    def get_tie_policy(self, report):
        return self.context.get('tie_policy')

    def get_directions(self, report):
        directions = {}
        for direction in (TAIL, HEAD):
            if any(record.direction == direction for record in report.records):
                directions[direction] = RankingSummarySerializer(report.by_direction(direction)).data
        return directions


class EpochRecordSerializer(serializers.Serializer):
    epoch = serializers.IntegerField()
    learning_rate = serializers.FloatField()
    loss = serializers.FloatField()
    seconds = serializers.FloatField()
    valid_mrr = serializers.FloatField(allow_null=True)


class TrainReportSerializer(serializers.Serializer):
    epochs = EpochRecordSerializer(many=True)
    best_epoch = serializers.IntegerField(allow_null=True)
    best_valid_mrr = serializers.FloatField(allow_null=True)
    parameters = serializers.SerializerMethodField()

    def get_parameters(self, report):
        return self.context.get('parameters')


class SeedSummarySerializer(serializers.Serializer):
    """
    Mean, sample standard deviation and per-run values of each metric over seeds.
    """
    split = serializers.SerializerMethodField()
    seeds = serializers.ListField(child=serializers.IntegerField())
    metrics = serializers.SerializerMethodField()

    def get_split(self, summary):
        return self.context.get('split')

    def get_metrics(self, summary):
        return {
            metric: {'mean': summary.mean(metric), 'std': summary.std(metric),
                     'runs': summary.values(metric).tolist()}
            for metric in SUMMARY_METRICS
        }
