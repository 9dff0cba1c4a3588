"""
Base command for one-parameter sweeps: one model per value, optionally
repeated over several seeds, all trained on the same dataset.
"""

from django.core.management.base import BaseCommand

from link_prediction.hyper.data import SPLITS
from link_prediction.runconfig import load_run_config
from link_prediction.runs import prepare_dataset, render_json, run_repeated, seed_variants

from ._common import command_errors, parse_int_list, parse_seeds, spread

TABLE_METRICS = ('mrr', 'hits_at_1')


class SweepCommand(BaseCommand):
    key = None
    directory = None  # output sub-directory, formatted with the value
    values_help = None
    header = None
    label = '{}'
    report_name = None

    def add_arguments(self, parser):
        parser.add_argument('config', help='Base run configuration')
        parser.add_argument('values', help=self.values_help)
        parser.add_argument('--no-hypernetwork', action='store_true',
                            help='Use relation embeddings directly as filters')
        parser.add_argument('--split', choices=SPLITS, default='test')
        parser.add_argument('--seeds', help='Comma-separated seeds; every value is trained once per seed')

    def handle(self, *args, **options):
        values = parse_int_list(options['values'], self.key.replace('_', ' '))
        seeds = parse_seeds(options['seeds'])
        split = options['split']
        with command_errors():
            base = load_run_config(options['config'])
            base.write(base.output_dir)

            # every value is validated before any training starts
            variants = []
            for value in values:
                overrides = {self.key: value, 'output_dir': str(base.output_dir / self.directory.format(value))}
                if options['no_hypernetwork']:
                    overrides.update(hypernetwork=False, relation_dim=None)
                variants.append((value, seed_variants(base.with_overrides(**overrides), seeds)))

            dataset = prepare_dataset(base.dataset_dir)
            rows = []
            for value, run_configs in variants:
                self.stdout.write(f'training {self.key.replace("_", " ")} {value}')
                summary = run_repeated(run_configs, split, dataset)
                row = {self.key: value, 'seeds': list(summary.seeds)}
                for metric in TABLE_METRICS:
                    row[metric] = summary.mean(metric)
                    row[f'{metric}_std'] = summary.std(metric)
                rows.append((value, summary, row))

            report = {'split': split, 'rows': [row for _, _, row in rows]}
            (base.output_dir / self.report_name).write_bytes(render_json(report))

        self.stdout.write(self.header)
        for value, summary, _ in rows:
            cells = [spread(summary, metric) for metric in TABLE_METRICS]
            self.stdout.write('\t'.join([self.label.format(value)] + cells))
