from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from link_prediction.hyper.checkpoint import load_checkpoint
from link_prediction.hyper.data import SPLITS
from link_prediction.hyper.evaluation import HEAD, TAIL, TIE_POLICIES, evaluate, write_rank_dump
from link_prediction.runs import check_vocabulary, prepare_dataset, write_ranking_report

from ._common import METRICS_HEADER, command_errors, metrics_row


class Command(BaseCommand):
    help = 'Filtered ranking evaluation of a checkpoint on a dataset split'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='Checkpoint file written by train')
        parser.add_argument('dataset_dir', help='Dataset directory the model was trained on')
        parser.add_argument('split', choices=SPLITS)
        parser.add_argument('--tie-policy', choices=TIE_POLICIES, default='optimistic')
        parser.add_argument('--dump', help='Write one line per query: head, relation, tail, direction, rank')
        parser.add_argument('--report', help='Write the metrics as JSON')
        parser.add_argument('--by-direction', action='store_true', help='Also print head and tail metrics')
        parser.add_argument('--batch-size', type=int, default=settings.HYPERKG_EVAL_BATCH_SIZE)

    def handle(self, *args, **options):
        split = options['split']
        with command_errors():
            checkpoint = load_checkpoint(options['checkpoint'])
            dataset = prepare_dataset(options['dataset_dir'])
            check_vocabulary(checkpoint, dataset)
            report = evaluate(checkpoint.params, dataset, split, checkpoint.config,
                              tie_policy=options['tie_policy'], batch_size=options['batch_size'])

            if options['dump']:
                dump_path = Path(options['dump'])
                dump_path.parent.mkdir(parents=True, exist_ok=True)
                with open(dump_path, 'w', encoding='utf-8') as stream:
                    write_rank_dump(report, dataset.vocab, stream)
            if options['report']:
                write_ranking_report(options['report'], report, split, options['tie_policy'])

        self.stdout.write(METRICS_HEADER)
        self.stdout.write(metrics_row(report))
        if options['by_direction']:
            for direction in (TAIL, HEAD):
                self.stdout.write(f'{direction}\t{metrics_row(report.by_direction(direction))}')
