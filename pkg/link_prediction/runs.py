"""
Run orchestration shared by the management commands: dataset preparation,
training runs with their on-disk outputs, and report files.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

from django.conf import settings
from rest_framework.renderers import JSONRenderer

from .hyper.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .hyper.data import Dataset, add_reciprocals, load_dataset
from .hyper.evaluation import RankingReport, SeedSummary, evaluate
from .hyper.exceptions import VocabularyMismatchError
from .hyper.model import ModelConfig, ModelParams, param_count
from .hyper.training import OptimizerState, TrainReport, Trainer
from .runconfig import RunConfig
from .serializers import RankingReportSerializer, SeedSummarySerializer, TrainReportSerializer

logger = logging.getLogger(__name__)

TRAIN_LOG_NAME = 'train.log'
BEST_CHECKPOINT_NAME = 'best.hkge'
FINAL_CHECKPOINT_NAME = 'final.hkge'
TRAIN_REPORT_NAME = 'train_report.json'
SEED_REPORT_NAME = 'seeds.json'


def prepare_dataset(directory: Union[str, Path]) -> Dataset:
    """Load (through the cache) and add reciprocal relations."""
    return add_reciprocals(load_dataset(directory, settings.HYPERKG_CACHE_DIR))


def make_checkpoint(params: ModelParams, config: ModelConfig, dataset: Dataset,
                    optimizer: Optional[OptimizerState] = None) -> Checkpoint:
    return Checkpoint(
        config=config,
        params=params,
        relations=dataset.vocab.relations,
        n_entities=dataset.n_entities,
        num_original_relations=dataset.num_original_relations,
        optimizer=optimizer,
    )


def check_vocabulary(checkpoint: Checkpoint, dataset: Dataset) -> None:
    if checkpoint.n_entities != dataset.n_entities:
        raise VocabularyMismatchError('entity count', checkpoint.n_entities, dataset.n_entities)
    if len(checkpoint.relations) != dataset.n_relations:
        raise VocabularyMismatchError('relation count', len(checkpoint.relations), dataset.n_relations)
    if checkpoint.relations != dataset.vocab.relations:
        logger.warning('Relation names of the checkpoint differ from the dataset; ids are used as-is')


def render_json(data) -> bytes:
    return JSONRenderer().render(data, renderer_context={'indent': 2})


def write_ranking_report(path: Union[str, Path], report: RankingReport, split: str, tie_policy: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    serializer = RankingReportSerializer(report, context={'split': split, 'tie_policy': tie_policy})
    path.write_bytes(render_json(serializer.data))
    return path


@dataclass
class TrainOutcome:
    run_config: RunConfig
    dataset: Dataset
    params: ModelParams
    report: TrainReport
    output_dir: Path

    @property
    def best_checkpoint_path(self) -> Path:
        return self.output_dir / BEST_CHECKPOINT_NAME

    @property
    def final_checkpoint_path(self) -> Path:
        return self.output_dir / FINAL_CHECKPOINT_NAME

    def selected_params(self) -> ModelParams:
        """Parameters of the best validation epoch when one was recorded, the final ones otherwise."""
        if self.report.best_epoch is not None and self.best_checkpoint_path.is_file():
            return load_checkpoint(self.best_checkpoint_path).params
        return self.params

    def evaluate(self, split: str) -> RankingReport:
        train = self.run_config.train
        return evaluate(self.selected_params(), self.dataset, split, self.run_config.model,
                        tie_policy=train.tie_policy, batch_size=train.eval_batch_size)


def run_training(run_config: RunConfig, dataset: Optional[Dataset] = None) -> TrainOutcome:
    """
    Train one configuration and write its outputs.

    The output directory receives the resolved configuration, the per-epoch
    log, the best-validation and final checkpoints and a JSON report.
    """
    output_dir = run_config.output_dir
    run_config.write(output_dir)
    if dataset is None:
        dataset = prepare_dataset(run_config.dataset_dir)

    model_config = run_config.model
    counts = param_count(model_config, dataset.n_entities, dataset.n_relations)
    logger.info('Training %s: %d parameters, W %dx%d', output_dir, counts.total, *model_config.projection_shape)

    def save_best(epoch, params, optimizer):
        save_checkpoint(output_dir / BEST_CHECKPOINT_NAME, make_checkpoint(params, model_config, dataset, optimizer))
        logger.info('New best validation MRR at epoch %d', epoch)

    with open(output_dir / TRAIN_LOG_NAME, 'w', encoding='utf-8') as log_stream:
        trainer = Trainer(dataset, model_config, run_config.train, log_stream)
        report = trainer.fit(on_improvement=save_best)

    save_checkpoint(output_dir / FINAL_CHECKPOINT_NAME,
                    make_checkpoint(trainer.params, model_config, dataset, trainer.optimizer))
    context = {'parameters': {'entity': counts.entity, 'relation': counts.relation,
                              'hypernetwork': counts.hypernetwork, 'projection': counts.projection,
                              'total': counts.total}}
    (output_dir / TRAIN_REPORT_NAME).write_bytes(render_json(TrainReportSerializer(report, context=context).data))
    return TrainOutcome(run_config, dataset, trainer.params, report, output_dir)


def seed_variants(run_config: RunConfig, seeds: Sequence[int]) -> List[RunConfig]:
    """
    One configuration per seed, each writing to ``<output_dir>/seed-<seed>``.
    Without seeds the configuration is used as it is.
    """
    if not seeds:
        return [run_config]
    return [run_config.with_overrides(seed=seed, output_dir=str(run_config.output_dir / f'seed-{seed}'))
            for seed in seeds]


def run_repeated(run_configs: Sequence[RunConfig], split: str, dataset: Optional[Dataset] = None) -> SeedSummary:
    """Train every configuration on a shared dataset and evaluate each on ``split``."""
    if dataset is None:
        dataset = prepare_dataset(run_configs[0].dataset_dir)
    reports = []
    for run_config in run_configs:
        reports.append(run_training(run_config, dataset).evaluate(split))
    summary = SeedSummary(tuple(run_config['seed'] for run_config in run_configs), tuple(reports))
    if len(reports) > 1:
        logger.info('%s over seeds %s: MRR %.4f +/- %.4f', split, ','.join(map(str, summary.seeds)),
                    summary.mean('mrr'), summary.std('mrr'))
    return summary


def write_seed_summary(path: Union[str, Path], summary: SeedSummary, split: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(render_json(SeedSummarySerializer(summary, context={'split': split}).data))
    return path
