from django.core.management.base import BaseCommand, CommandError

from link_prediction.hyper.data import SPLITS
from link_prediction.hyper.model import param_count
from link_prediction.runconfig import load_run_config
from link_prediction.runs import SEED_REPORT_NAME, run_repeated, run_training, seed_variants, write_seed_summary

from ._common import METRICS_HEADER, command_errors, parse_seeds, spread_row


class Command(BaseCommand):
    help = 'Train a HypER model from a run configuration file'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Run configuration (key = value lines)')
        parser.add_argument('--output-dir', help='Override output_dir from the configuration')
        parser.add_argument('--epochs', type=int, help='Override the number of epochs')
        parser.add_argument('--seed', type=int, help='Override the random seed')
        parser.add_argument('--seeds', help='Comma-separated seeds: train once per seed under '
                                            'seed-<n>/ and report the mean and standard deviation')
        parser.add_argument('--split', choices=SPLITS, default='test',
                            help='Split evaluated across seeds (with --seeds)')

    def handle(self, *args, **options):
        seeds = parse_seeds(options['seeds'])
        if seeds and options['seed'] is not None:
            raise CommandError('--seed and --seeds are mutually exclusive')
        with command_errors():
            run_config = load_run_config(options['config'])
            overrides = {key: options[option] for key, option in
                         (('output_dir', 'output_dir'), ('epochs', 'epochs'), ('seed', 'seed'))
                         if options[option] is not None}
            if overrides:
                run_config = run_config.with_overrides(**overrides)
            if seeds:
                return self.train_seeds(run_config, seeds, options['split'])
            outcome = run_training(run_config)

        model_config = run_config.model
        counts = param_count(model_config, outcome.dataset.n_entities, outcome.dataset.n_relations)
        rows, cols = model_config.projection_shape
        self.stdout.write(f'E {counts.entity}, R {counts.relation}, H {counts.hypernetwork}, '
                          f'W {rows}x{cols} ({counts.projection}), total {counts.total}')
        if outcome.report.epochs:
            self.stdout.write(f'final loss {outcome.report.epochs[-1].loss:.6f}')
        if outcome.report.best_epoch is not None:
            self.stdout.write(f'best valid MRR {outcome.report.best_valid_mrr:.3f} '
                              f'at epoch {outcome.report.best_epoch}')
        self.stdout.write(self.style.SUCCESS(f'outputs written to {outcome.output_dir}'))

    def train_seeds(self, run_config, seeds, split):
        run_configs = seed_variants(run_config, seeds)
        run_config.write(run_config.output_dir)
        summary = run_repeated(run_configs, split)
        path = write_seed_summary(run_config.output_dir / SEED_REPORT_NAME, summary, split)

        self.stdout.write(f'{split} over seeds {",".join(map(str, summary.seeds))}')
        self.stdout.write(METRICS_HEADER)
        self.stdout.write(spread_row(summary))
        self.stdout.write(self.style.SUCCESS(f'outputs written to {path.parent}'))
