from django.core.management.base import BaseCommand

from link_prediction.hyper.data import SPLITS
from link_prediction.runconfig import load_run_config
from link_prediction.runs import prepare_dataset, render_json, run_repeated, seed_variants

from ._common import command_errors, parse_seeds, spread

TABLE_METRICS = ('mrr', 'hits_at_10')


class Command(BaseCommand):
    help = 'Compare a model with and without the hypernetwork under the same configuration'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Base run configuration')
        parser.add_argument('--split', choices=SPLITS, default='test')
        parser.add_argument('--seeds', help='Comma-separated seeds; both models are trained once per seed')

    def handle(self, *args, **options):
        split = options['split']
        seeds = parse_seeds(options['seeds'])
        with command_errors():
            base = load_run_config(options['config'])
            base.write(base.output_dir)
            variants = [
                ('HypER', base.with_overrides(hypernetwork=True, output_dir=str(base.output_dir / 'hypernetwork'))),
                ('HypER without H', base.with_overrides(hypernetwork=False, relation_dim=None,
                                                        output_dir=str(base.output_dir / 'no-hypernetwork'))),
            ]
            variants = [(label, seed_variants(run_config, seeds)) for label, run_config in variants]

            dataset = prepare_dataset(base.dataset_dir)
            rows = []
            for label, run_configs in variants:
                self.stdout.write(f'training {label}')
                summary = run_repeated(run_configs, split, dataset)
                row = {'model': label, 'seeds': list(summary.seeds)}
                for metric in TABLE_METRICS:
                    row[metric] = summary.mean(metric)
                    row[f'{metric}_std'] = summary.std(metric)
                rows.append((label, summary, row))

            report = {'split': split, 'rows': [row for _, _, row in rows]}
            (base.output_dir / 'ablate_hypernetwork.json').write_bytes(render_json(report))

        self.stdout.write('Model\tMRR\tH@10')
        for label, summary, _ in rows:
            self.stdout.write('\t'.join([label] + [spread(summary, metric) for metric in TABLE_METRICS]))
