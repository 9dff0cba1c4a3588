"""
Filtered ranking evaluation.

Each test triple (h, r, t) is answered twice: the tail query (h, r, ?) and,
through its reciprocal (t, r⁻¹, ?), the head query. Every other entity known
to be true for the query in any split is removed before ranking.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Collection, Iterable, List, Optional, TextIO, Tuple

import numpy as np

from .data import Dataset, FilterIndex, Triple, Vocabulary, build_filter_index, reciprocal_triple
from .exceptions import DatasetStateError, RankingError
from .model import HyperScorer, ModelConfig, ModelParams

logger = logging.getLogger(__name__)

OPTIMISTIC = 'optimistic'
MEAN = 'mean'
TIE_POLICIES = (OPTIMISTIC, MEAN)

HEAD = 'head'
TAIL = 'tail'

HITS_AT = (1, 3, 10)
SUMMARY_METRICS = ('mr', 'mrr', 'hits_at_1', 'hits_at_3', 'hits_at_10')

Scorer = Callable[[np.ndarray, np.ndarray], np.ndarray]


def filtered_rank(scores: np.ndarray, target: int, known_true: Collection[int],
                  tie_policy: str = OPTIMISTIC) -> float:
    """
    Rank of ``target`` among all candidates once the other known answers are removed.

    Args:
        scores: Scores of every entity for one query
        target: The entity being ranked
        known_true: Every entity true for the query; must contain ``target``
        tie_policy: ``optimistic`` ranks the target ahead of equal scores,
            ``mean`` puts it in the middle of them

    Returns:
        A rank >= 1 (integral under the optimistic policy)
    """
    if tie_policy not in TIE_POLICIES:
        raise RankingError(f'unknown tie policy {tie_policy!r}')
    if target not in known_true:
        raise RankingError(f'target {target} is not among the known answers of its query')

    competitors = np.ones(scores.shape[0], dtype=bool)
    competitors[list(known_true)] = False
    others = scores[competitors]
    target_score = scores[target]

    rank = 1.0 + np.count_nonzero(others > target_score)
    if tie_policy == MEAN:
        rank += np.count_nonzero(others == target_score) / 2.0
    return float(rank)


@dataclass(frozen=True)
class RankRecord:
    triple: Triple  # in the original orientation
    direction: str
    rank: float


@dataclass(frozen=True)
class RankingReport:
    mr: float
    mrr: float
    hits_at_1: float
    hits_at_3: float
    hits_at_10: float
    count: int
    records: Tuple[RankRecord, ...] = ()

    @classmethod
    def from_records(cls, records: Iterable[RankRecord]) -> 'RankingReport':
        records = tuple(records)
        if not records:
            raise RankingError('cannot aggregate an empty set of ranks')
        ranks = [record.rank for record in records]
        n = len(ranks)
        hits = {k: sum(1 for rank in ranks if rank <= k) / n for k in HITS_AT}
        return cls(
            mr=math.fsum(ranks) / n,
            mrr=math.fsum(1.0 / rank for rank in ranks) / n,
            hits_at_1=hits[1],
            hits_at_3=hits[3],
            hits_at_10=hits[10],
            count=n,
            records=records,
        )

    def by_direction(self, direction: str) -> 'RankingReport':
        return RankingReport.from_records(r for r in self.records if r.direction == direction)

    def summary(self) -> dict:
        return {
            'mr': self.mr, 'mrr': self.mrr,
            'hits_at_1': self.hits_at_1, 'hits_at_3': self.hits_at_3, 'hits_at_10': self.hits_at_10,
            'count': self.count,
        }


@dataclass(frozen=True)
class SeedSummary:
    """
    One evaluation repeated over independently seeded training runs.
    """
    seeds: Tuple[int, ...]
    reports: Tuple[RankingReport, ...]

    def __post_init__(self):
        if not self.reports or len(self.seeds) != len(self.reports):
            raise RankingError('a seed summary needs exactly one report per seed')

    def values(self, metric: str) -> np.ndarray:
        if metric not in SUMMARY_METRICS:
            raise RankingError(f'unknown metric {metric!r}')
        return np.array([getattr(report, metric) for report in self.reports])

    def mean(self, metric: str) -> float:
        return math.fsum(self.values(metric)) / len(self.reports)

    def std(self, metric: str) -> float:
        """Sample standard deviation; 0 for a single run."""
        if len(self.reports) < 2:
            return 0.0
        return float(np.std(self.values(metric), ddof=1))


def evaluate_scorer(scorer: Scorer, dataset: Dataset, split: str,
                    filter_index: Optional[FilterIndex] = None,
                    tie_policy: str = OPTIMISTIC, batch_size: int = 256) -> RankingReport:
    """
    Rank every query of a split with any 1-N scorer.

    Args:
        scorer: Maps (heads, relations) arrays of length B to a (B, n_e) score array
        dataset: Reciprocal-augmented dataset
        split: 'train', 'valid' or 'test'
        filter_index: Reused across calls when given; built from the dataset otherwise
        tie_policy: See ``filtered_rank``
        batch_size: Queries scored per call

    Returns:
        RankingReport over both directions, records in split order
    """
    if not dataset.reciprocal_added:
        raise DatasetStateError('evaluation expects a dataset with reciprocal relations')
    triples = dataset.split(split)
    if len(triples) == 0:
        raise RankingError(f'split {split!r} is empty')
    if filter_index is None:
        filter_index = build_filter_index(dataset)

    n_orig = dataset.num_original_relations
    records: List[RankRecord] = []
    for start in range(0, len(triples), batch_size):
        chunk = triples[start:start + batch_size]
        scores = scorer(chunk[:, 0], chunk[:, 1])
        for row, (head, relation, tail) in enumerate(chunk.tolist()):
            rank = filtered_rank(scores[row], tail, filter_index.known_tails(head, relation), tie_policy)
            if dataset.is_reciprocal(relation):
                records.append(RankRecord(reciprocal_triple((head, relation, tail), n_orig), HEAD, rank))
            else:
                records.append(RankRecord(Triple(head, relation, tail), TAIL, rank))

    report = RankingReport.from_records(records)
    logger.info('%s: MR %.1f MRR %.4f H@10 %.4f H@3 %.4f H@1 %.4f over %d queries',
                split, report.mr, report.mrr, report.hits_at_10, report.hits_at_3, report.hits_at_1, report.count)
    return report


def evaluate(params: ModelParams, dataset: Dataset, split: str, config: ModelConfig,
             filter_index: Optional[FilterIndex] = None, tie_policy: str = OPTIMISTIC,
             batch_size: int = 256) -> RankingReport:
    """Filtered ranking of a split with an eval-mode HypER model."""
    return evaluate_scorer(HyperScorer(params, config), dataset, split, filter_index, tie_policy, batch_size)


def write_rank_dump(report: RankingReport, vocab: Vocabulary, stream: TextIO) -> None:
    """
    One tab-separated line per query: head, relation, tail (names, original
    orientation), direction, rank.
    """
    for record in report.records:
        head, relation, tail = vocab.decode(record.triple)
        stream.write(f'{head}\t{relation}\t{tail}\t{record.direction}\t{record.rank:.12g}\n')
