"""
Small knowledge graphs used across the test suite.
"""

from pathlib import Path
from typing import List, Tuple

import numpy as np

from link_prediction.hyper.data import RawTriple

RING_SIZE = 20

# held out of train; every one is implied by the ring structure
TOY_VALID = [('e05', 'skip', 'e07'), ('e14', 'opposite', 'e04')]
TOY_TEST = [('e03', 'skip', 'e05'), ('e11', 'skip', 'e13'), ('e07', 'opposite', 'e17')]


def entity(i: int) -> str:
    return f'e{i % RING_SIZE:02d}'


def ring_triples() -> List[RawTriple]:
    """20 entities on a ring; next (i -> i+1), skip (i -> i+2) and opposite (i -> i+10)."""
    triples = []
    for i in range(RING_SIZE):
        triples.append((entity(i), 'next', entity(i + 1)))
        triples.append((entity(i), 'skip', entity(i + 2)))
        triples.append((entity(i), 'opposite', entity(i + RING_SIZE // 2)))
    return triples


def toy_splits() -> Tuple[List[RawTriple], List[RawTriple], List[RawTriple]]:
    held_out = set(TOY_VALID) | set(TOY_TEST)
    train = [t for t in ring_triples() if t not in held_out]
    return train, list(TOY_VALID), list(TOY_TEST)


def random_splits(n_entities: int, n_triples: int, n_relations: int,
                  seed: int = 0) -> Tuple[List[RawTriple], List[RawTriple], List[RawTriple]]:
    """
    Distinct random triples split roughly 80/10/10; a ring backbone in train
    covers every entity and relation.
    """
    rng = np.random.default_rng(seed)
    backbone = [(f'n{i}', f'r{i % n_relations}', f'n{(i + 1) % n_entities}') for i in range(n_entities)]
    triples = set(backbone)
    while len(triples) < n_triples:
        h, t = rng.integers(n_entities, size=2)
        triples.add((f'n{h}', f'r{rng.integers(n_relations)}', f'n{t}'))
    rest = sorted(triples - set(backbone))
    rest = [rest[i] for i in rng.permutation(len(rest))]
    n_held = n_triples // 10
    test, valid, train_rest = rest[:n_held], rest[n_held:2 * n_held], rest[2 * n_held:]
    return backbone + train_rest, valid, test


def write_splits(directory: Path, train, valid, test) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, triples in (('train', train), ('valid', valid), ('test', test)):
        lines = ''.join(f'{h}\t{r}\t{t}\n' for h, r, t in triples)
        (directory / f'{name}.txt').write_text(lines, encoding='utf-8')
    return directory


def write_toy_dataset(directory: Path) -> Path:
    return write_splits(directory, *toy_splits())


TOY_CONFIG = """\
# small model for the ring graph
dataset_dir = {dataset_dir}
output_dir = {output_dir}
embedding_dim = 32
filter_length = 3
num_filters = 8
input_dropout = 0.0
feature_map_dropout = 0.1
hidden_dropout = 0.1
learning_rate = 0.005
lr_decay = 1.0
batch_size = 32
label_smoothing = 0.0
epochs = {epochs}
eval_every = {eval_every}
seed = 7
"""


def write_toy_config(path: Path, dataset_dir: Path, output_dir: Path, epochs: int = 5,
                     eval_every: int = 1, extra: str = '') -> Path:
    path = Path(path)
    path.write_text(TOY_CONFIG.format(dataset_dir=dataset_dir, output_dir=output_dir,
                                      epochs=epochs, eval_every=eval_every) + extra, encoding='utf-8')
    return path
