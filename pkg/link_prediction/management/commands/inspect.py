import difflib
import re
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand

from link_prediction.hyper.checkpoint import load_checkpoint
from link_prediction.hyper.exceptions import UnknownRelationError
from link_prediction.hyper.model import filter_rank, generate_filters, relation_matrix

from ._common import command_errors


def _file_stem(name: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '_', name).strip('_') or 'relation'


class Command(BaseCommand):
    help = 'Write the filter bank and the equivalent d_e x d_e matrix of one relation'

    def add_arguments(self, parser):
        parser.add_argument('checkpoint', help='Checkpoint file written by train')
        parser.add_argument('relation', help='Relation name (reciprocals end in _reverse)')
        parser.add_argument('--output-dir', help='Defaults to an "inspect" directory beside the checkpoint')

    def handle(self, *args, **options):
        name = options['relation']
        with command_errors():
            checkpoint = load_checkpoint(options['checkpoint'])
            if name not in checkpoint.relations:
                raise UnknownRelationError(name, difflib.get_close_matches(name, checkpoint.relations, n=3))
            relation = checkpoint.relations.index(name)

            bank = generate_filters(relation, checkpoint.params, checkpoint.config)
            matrix = relation_matrix(relation, checkpoint.params, checkpoint.config)

            output_dir = Path(options['output_dir'] or Path(options['checkpoint']).parent / 'inspect')
            output_dir.mkdir(parents=True, exist_ok=True)
            stem = _file_stem(name)
            filters_path = output_dir / f'{stem}.filters.txt'
            matrix_path = output_dir / f'{stem}.matrix.txt'
            np.savetxt(filters_path, bank.filters, fmt='%.17g', delimiter='\t')
            np.savetxt(matrix_path, matrix, fmt='%.17g', delimiter='\t')

        l_f, n_f = bank.filters.shape
        self.stdout.write(f'{name}: filters {l_f}x{n_f} -> {filters_path}')
        self.stdout.write(f'{name}: relation matrix {matrix.shape[0]}x{matrix.shape[1]} -> {matrix_path}')
        self.stdout.write(f'rank of all stacked filter banks: '
                          f'{filter_rank(checkpoint.params, checkpoint.config)}')
