"""
Knowledge-graph ingestion.

Reads tab-separated triple files, assigns dense integer ids, adds reciprocal
relations and builds the index used for filtered ranking.
"""

import hashlib
import logging
from collections import defaultdict
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .exceptions import DatasetStateError, TripleParseError

logger = logging.getLogger(__name__)

SPLITS = ('train', 'valid', 'test')
REVERSE_SUFFIX = '_reverse'

RawTriple = Tuple[str, str, str]


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def parse_triples(text: Union[str, bytes, Iterable[str]], path: Optional[str] = None) -> List[RawTriple]:
    """
    Parse tab-separated triples, one per nonempty line.

    Args:
        text: Raw bytes (decoded as strict UTF-8), a string, or an iterable of lines
        path: Optional file name used in error messages

    Returns:
        List of (head, relation, tail) name tuples in file order
    """
    if isinstance(text, bytes):
        text = text.decode('utf-8')
    lines = text.splitlines() if isinstance(text, str) else text

    triples = []
    for line_number, line in enumerate(lines, start=1):
        line = line.rstrip('\r\n')
        if not line.strip():
            continue
        # leading and trailing tabs delimit empty fields
        fields = [f.strip() for f in line.split('\t')]
        if len(fields) != 3:
            raise TripleParseError(line_number, len(fields), path)
        if not all(fields):
            raise TripleParseError(line_number, len(fields), path, empty_field=fields.index('') + 1)
        head, relation, tail = fields
        triples.append((head, relation, tail))
    return triples


def load_triple_file(path: Union[str, Path]) -> List[RawTriple]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'triple file not found: {path}')
    return parse_triples(path.read_bytes(), str(path))


@dataclass(frozen=True)
class Vocabulary:
    """
    Bijection between names and dense ids, in first-seen order.
    """
    entities: Tuple[str, ...]
    relations: Tuple[str, ...]
    _entity_ids: Dict[str, int] = field(init=False, repr=False, compare=False)
    _relation_ids: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, '_entity_ids', {name: i for i, name in enumerate(self.entities)})
        object.__setattr__(self, '_relation_ids', {name: i for i, name in enumerate(self.relations)})
        if len(self._entity_ids) != len(self.entities) or len(self._relation_ids) != len(self.relations):
            raise DatasetStateError('vocabulary names must be unique')

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def encode(self, raw: RawTriple) -> Triple:
        head, relation, tail = raw
        return Triple(self._entity_ids[head], self._relation_ids[relation], self._entity_ids[tail])

    def decode(self, triple: Iterable[int]) -> RawTriple:
        head, relation, tail = (int(x) for x in triple)
        return self.entities[head], self.relations[relation], self.entities[tail]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.int64).reshape(-1, 3)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Integer-encoded train/valid/test splits.

    Each split is a read-only ``(n, 3)`` int64 array of (head, relation, tail).
    """
    vocab: Vocabulary
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    reciprocal_added: bool = False
    num_original_relations: int = 0

    def __post_init__(self):
        for name in SPLITS:
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not self.num_original_relations:
            object.__setattr__(self, 'num_original_relations', self.vocab.n_relations)

    @property
    def n_entities(self) -> int:
        return self.vocab.n_entities

    @property
    def n_relations(self) -> int:
        return self.vocab.n_relations

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f'unknown split {name!r}; expected one of {", ".join(SPLITS)}')
        return getattr(self, name)

    def triples(self, name: str) -> Iterator[Triple]:
        for row in self.split(name):
            yield Triple(int(row[0]), int(row[1]), int(row[2]))

    def is_reciprocal(self, relation: int) -> bool:
        return self.reciprocal_added and relation >= self.num_original_relations


def build_dataset(train: List[RawTriple], valid: List[RawTriple], test: List[RawTriple]) -> Dataset:
    """
    Assign ids in first-seen order over train, then valid, then test, and encode.
    """
    entity_ids: Dict[str, int] = {}
    relation_ids: Dict[str, int] = {}
    for split in (train, valid, test):
        for head, relation, tail in split:
            entity_ids.setdefault(head, len(entity_ids))
            relation_ids.setdefault(relation, len(relation_ids))
            entity_ids.setdefault(tail, len(entity_ids))

    vocab = Vocabulary(tuple(entity_ids), tuple(relation_ids))
    encoded = [
        np.array([vocab.encode(raw) for raw in split], dtype=np.int64).reshape(-1, 3)
        for split in (train, valid, test)
    ]
    return Dataset(vocab, *encoded)


def reciprocal_triple(triple: Iterable[int], num_original_relations: int) -> Triple:
    """
    Map (h, r, t) to (t, r⁻¹, h); applying it twice gives the original triple back.
    """
    head, relation, tail = (int(x) for x in triple)
    return Triple(tail, (relation + num_original_relations) % (2 * num_original_relations), head)


def add_reciprocals(dataset: Dataset) -> Dataset:
    """
    Double the relation vocabulary and append (t, r + n_r, h) for every triple of every split.
    """
    if dataset.reciprocal_added:
        raise DatasetStateError('reciprocal relations were already added to this dataset')

    n_r = dataset.n_relations
    relations = dataset.vocab.relations + tuple(name + REVERSE_SUFFIX for name in dataset.vocab.relations)
    vocab = Vocabulary(dataset.vocab.entities, relations)

    splits = []
    for name in SPLITS:
        original = dataset.split(name)
        reverse = original[:, [2, 1, 0]] + np.array([0, n_r, 0], dtype=np.int64)
        splits.append(np.concatenate([original, reverse], axis=0))

    return Dataset(vocab, *splits, reciprocal_added=True, num_original_relations=n_r)


class FilterIndex(Mapping):
    """
    (head, relation) -> frozenset of tails true in any split.
    """

    def __init__(self, index: Dict[Tuple[int, int], FrozenSet[int]]):
        self._index = index

    def __getitem__(self, key: Tuple[int, int]) -> FrozenSet[int]:
        return self._index[key]

    def __iter__(self):
        return iter(self._index)

    def __len__(self) -> int:
        return len(self._index)

    def known_tails(self, head: int, relation: int) -> FrozenSet[int]:
        return self._index.get((head, relation), frozenset())


def build_filter_index(dataset: Dataset) -> FilterIndex:
    tails = defaultdict(set)
    for name in SPLITS:
        for head, relation, tail in dataset.split(name).tolist():
            tails[(head, relation)].add(tail)
    return FilterIndex({key: frozenset(value) for key, value in tails.items()})


def group_tails(triples: np.ndarray) -> Dict[Tuple[int, int], List[int]]:
    """
    Group a split by (head, relation), tails sorted; insertion order is first occurrence.
    """
    groups: Dict[Tuple[int, int], set] = {}
    for head, relation, tail in triples.tolist():
        groups.setdefault((head, relation), set()).add(tail)
    return {key: sorted(value) for key, value in groups.items()}


def dataset_digest(directory: Union[str, Path]) -> str:
    """
    Content hash over the three split files.
    """
    directory = Path(directory)
    digest = hashlib.sha256()
    for name in SPLITS:
        path = directory / f'{name}.txt'
        if not path.is_file():
            raise FileNotFoundError(f'triple file not found: {path}')
        content = path.read_bytes()
        digest.update(name.encode('ascii'))
        digest.update(len(content).to_bytes(8, 'little'))
        digest.update(content)
    return digest.hexdigest()


def load_dataset(directory: Union[str, Path], cache_dir: Optional[Union[str, Path]] = None) -> Dataset:
    """
    Read train.txt / valid.txt / test.txt from a directory.

    Args:
        directory: Dataset directory
        cache_dir: When given, the encoded dataset is cached there under a
            content-hash name and reused on later calls

    Returns:
        The encoded Dataset, without reciprocal relations
    """
    directory = Path(directory)
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f'dataset-{dataset_digest(directory)[:24]}.npz'
        if cache_path.is_file():
            logger.debug('Loading cached dataset %s', cache_path)
            return _read_cache(cache_path)

    raw = [load_triple_file(directory / f'{name}.txt') for name in SPLITS]
    dataset = build_dataset(*raw)
    logger.info('Loaded %s: %d entities, %d relations, %d/%d/%d triples',
                directory, dataset.n_entities, dataset.n_relations,
                len(dataset.train), len(dataset.valid), len(dataset.test))

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        _write_cache(cache_path, dataset)
    return dataset


def _write_cache(path: Path, dataset: Dataset) -> None:
    with open(path, 'wb') as handle:
        np.savez(
            handle,
            entities=np.array(dataset.vocab.entities, dtype=str),
            relations=np.array(dataset.vocab.relations, dtype=str),
            train=dataset.train, valid=dataset.valid, test=dataset.test,
        )


def _read_cache(path: Path) -> Dataset:
    with np.load(path, allow_pickle=False) as archive:
        vocab = Vocabulary(tuple(archive['entities'].tolist()), tuple(archive['relations'].tolist()))
        return Dataset(vocab, archive['train'], archive['valid'], archive['test'])


def describe(dataset: Dataset) -> Dict[str, int]:
    """
    Summary statistics in the usual dataset-table layout.
    """
    original = dataset.num_original_relations
    factor = 2 if dataset.reciprocal_added else 1
    return {
        'entities': dataset.n_entities,
        'relations': original,
        'relations_with_reciprocals': 2 * original,
        'train': len(dataset.train) // factor,
        'valid': len(dataset.valid) // factor,
        'test': len(dataset.test) // factor,
    }
