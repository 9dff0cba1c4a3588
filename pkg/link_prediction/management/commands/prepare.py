from django.conf import settings
from django.core.management.base import BaseCommand

from link_prediction.hyper.data import add_reciprocals, describe, load_dataset

from ._common import command_errors


class Command(BaseCommand):
    help = 'Read train/valid/test triples from a directory, cache the encoded dataset and print its statistics'

    def add_arguments(self, parser):
        parser.add_argument('dataset_dir', help='Directory holding train.txt, valid.txt and test.txt')
        parser.add_argument('--no-cache', action='store_true', help='Do not read or write the dataset cache')

    def handle(self, *args, **options):
        cache_dir = None if options['no_cache'] else settings.HYPERKG_CACHE_DIR
        with command_errors():
            dataset = add_reciprocals(load_dataset(options['dataset_dir'], cache_dir))

        stats = describe(dataset)
        self.stdout.write(f"entities {stats['entities']}, relations {stats['relations']} "
                          f"({stats['relations_with_reciprocals']} with reciprocals)")
        self.stdout.write(f"train {stats['train']}, valid {stats['valid']}, test {stats['test']}")
