import io
import math

import numpy as np
from django.test import SimpleTestCase

from link_prediction.hyper.data import add_reciprocals, build_dataset, build_filter_index, reciprocal_triple
from link_prediction.hyper.evaluation import (
    HEAD,
    TAIL,
    RankingReport,
    SeedSummary,
    evaluate,
    evaluate_scorer,
    filtered_rank,
    write_rank_dump,
)
from link_prediction.hyper.exceptions import DatasetStateError, RankingError
from link_prediction.hyper.model import HyperScorer, ModelConfig, distmult_scores, init_params
from link_prediction.serializers import SeedSummarySerializer

from .toy import random_splits, toy_splits


def brute_force_rank(scores, target, known_true, tie_policy='optimistic'):
    """Sort-based rank over the candidates that survive filtering."""
    candidates = [i for i in range(len(scores)) if i == target or i not in known_true]
    ordered = sorted(candidates, key=lambda i: -scores[i])
    better = sum(1 for i in ordered if scores[i] > scores[target])
    if tie_policy == 'mean':
        ties = sum(1 for i in ordered if i != target and scores[i] == scores[target])
        return 1 + better + ties / 2
    return 1 + better


def brute_force_metrics(ranks):
    n = len(ranks)
    return {
        'mr': sum(ranks) / n,
        'mrr': sum(1 / r for r in ranks) / n,
        'hits_at_1': sum(r <= 1 for r in ranks) / n,
        'hits_at_3': sum(r <= 3 for r in ranks) / n,
        'hits_at_10': sum(r <= 10 for r in ranks) / n,
    }


class FilteredRankTests(SimpleTestCase):
    def test_known_answers_are_removed(self):
        self.assertEqual(filtered_rank(np.array([0.9, 0.5, 0.7]), 2, {0, 2}), 1)

    def test_equal_scores_do_not_penalize(self):
        self.assertEqual(filtered_rank(np.zeros(6), 4, {4}), 1)

    def test_mean_tie_policy(self):
        self.assertEqual(filtered_rank(np.zeros(6), 4, {4}, tie_policy='mean'), 3.5)

    def test_matches_sort_based_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            scores = np.round(rng.normal(size=30), 1)
            target = int(rng.integers(30))
            known = {target} | set(rng.integers(30, size=4).tolist())
            for policy in ('optimistic', 'mean'):
                self.assertEqual(filtered_rank(scores, target, known, policy),
                                 brute_force_rank(scores, target, known, policy))

    def test_target_must_be_known(self):
        with self.assertRaises(RankingError):
            filtered_rank(np.zeros(3), 1, {0})

    def test_low_distractor_does_not_change_rank(self):
        scores = np.array([0.3, 0.8, 0.5, 0.1])
        extended = np.append(scores, 0.2)
        self.assertEqual(filtered_rank(scores, 2, {2}), filtered_rank(extended, 2, {2}))

    def test_more_filtering_never_increases_rank(self):
        rng = np.random.default_rng(1)
        scores = rng.normal(size=20)
        known = {3}
        previous = filtered_rank(scores, 3, known)
        for extra in rng.permutation(20).tolist():
            known = known | {extra}
            rank = filtered_rank(scores, 3, known)
            self.assertLessEqual(rank, previous)
            previous = rank


class RankingReportTests(SimpleTestCase):
    def test_empty_records(self):
        with self.assertRaises(RankingError):
            RankingReport.from_records([])


def fixed_report(mrr, hits_at_1=0.5):
    return RankingReport(mr=1.0 / mrr, mrr=mrr, hits_at_1=hits_at_1, hits_at_3=0.75, hits_at_10=1.0, count=4)


class SeedSummaryTests(SimpleTestCase):
    def test_mean_and_sample_std(self):
        summary = SeedSummary((0, 1, 2), tuple(fixed_report(mrr) for mrr in (0.4, 0.5, 0.6)))
        self.assertAlmostEqual(summary.mean('mrr'), 0.5)
        self.assertAlmostEqual(summary.std('mrr'), 0.1)
        self.assertEqual(summary.std('hits_at_10'), 0.0)

    def test_single_run_has_no_spread(self):
        summary = SeedSummary((3,), (fixed_report(0.25),))
        self.assertEqual(summary.mean('mrr'), 0.25)
        self.assertEqual(summary.std('mrr'), 0.0)

    def test_one_report_per_seed(self):
        with self.assertRaises(RankingError):
            SeedSummary((0, 1), (fixed_report(0.5),))
        with self.assertRaises(RankingError):
            SeedSummary((), ())

    def test_unknown_metric(self):
        with self.assertRaises(RankingError):
            SeedSummary((0,), (fixed_report(0.5),)).mean('count')

    def test_serialized_metrics(self):
        summary = SeedSummary((0, 1), (fixed_report(0.5, 0.25), fixed_report(1.0, 0.75)))
        data = SeedSummarySerializer(summary, context={'split': 'test'}).data
        self.assertEqual(data['split'], 'test')
        self.assertEqual(data['seeds'], [0, 1])
        self.assertEqual(sorted(data['metrics']), ['hits_at_1', 'hits_at_10', 'hits_at_3', 'mr', 'mrr'])
        self.assertEqual(data['metrics']['hits_at_1']['runs'], [0.25, 0.75])
        self.assertAlmostEqual(data['metrics']['mrr']['mean'], 0.75)
        self.assertAlmostEqual(data['metrics']['mrr']['std'], math.sqrt(0.125))


class EvaluateTests(SimpleTestCase):
    def setUp(self):
        self.dataset = add_reciprocals(build_dataset(*toy_splits()))
        self.index = build_filter_index(self.dataset)

    def test_oracle_scorer_is_perfect(self):
        split = self.dataset.test
        answers = {(h, r): t for h, r, t in split.tolist()}

        def oracle(heads, relations):
            scores = np.zeros((len(heads), self.dataset.n_entities))
            for row, key in enumerate(zip(heads.tolist(), relations.tolist())):
                scores[row, answers[key]] = 1.0
            return scores

        report = evaluate_scorer(oracle, self.dataset, 'test', self.index)
        self.assertEqual((report.mr, report.mrr, report.hits_at_1, report.hits_at_3, report.hits_at_10),
                         (1.0, 1.0, 1.0, 1.0, 1.0))
        self.assertEqual(report.count, 2 * 3)

    def test_constant_scorer_ranks_first_under_optimistic_ties(self):
        def constant(heads, relations):
            return np.zeros((len(heads), self.dataset.n_entities))

        report = evaluate_scorer(constant, self.dataset, 'test', self.index)
        self.assertEqual(report.mrr, 1.0)
        mean = evaluate_scorer(constant, self.dataset, 'test', self.index, tie_policy='mean')
        self.assertGreater(mean.mr, 1.0)

    def test_records_cover_both_directions(self):
        config = ModelConfig(embedding_dim=8, relation_dim=8, filter_length=3, num_filters=2)
        params = init_params(config, self.dataset.n_entities, self.dataset.n_relations, np.random.default_rng(0))
        report = evaluate(params, self.dataset, 'test', config, self.index)
        tails = report.by_direction(TAIL)
        heads = report.by_direction(HEAD)
        self.assertEqual(tails.count + heads.count, report.count)
        self.assertEqual(tails.count, 3)

        vocab = self.dataset.vocab
        original = {vocab.encode(t) for t in toy_splits()[2]}
        self.assertEqual({r.triple for r in tails.records}, original)
        self.assertEqual({r.triple for r in heads.records}, original)

    def test_head_direction_equals_reciprocal_tail_query(self):
        config = ModelConfig(embedding_dim=8, relation_dim=8, filter_length=3, num_filters=2)
        params = init_params(config, self.dataset.n_entities, self.dataset.n_relations, np.random.default_rng(1))
        scorer = HyperScorer(params, config)
        report = evaluate_scorer(scorer, self.dataset, 'test', self.index)
        n = self.dataset.num_original_relations
        for record in report.by_direction(HEAD).records:
            t, r_inv, h = reciprocal_triple(record.triple, n)
            scores = scorer(np.array([t]), np.array([r_inv]))[0]
            self.assertEqual(record.rank, filtered_rank(scores, h, self.index[(t, r_inv)]))

    def test_empty_split(self):
        dataset = add_reciprocals(build_dataset([('a', 'r', 'b')], [], []))
        with self.assertRaises(RankingError):
            evaluate_scorer(lambda h, r: np.zeros((len(h), 2)), dataset, 'test')

    def test_requires_reciprocals(self):
        with self.assertRaises(DatasetStateError):
            evaluate_scorer(lambda h, r: None, build_dataset(*toy_splits()), 'test')

    def test_dump_reproduces_mrr(self):
        config = ModelConfig(embedding_dim=8, relation_dim=8, filter_length=3, num_filters=2)
        params = init_params(config, self.dataset.n_entities, self.dataset.n_relations, np.random.default_rng(2))
        report = evaluate(params, self.dataset, 'test', config, self.index)
        stream = io.StringIO()
        write_rank_dump(report, self.dataset.vocab, stream)

        lines = [line.split('\t') for line in stream.getvalue().splitlines()]
        self.assertEqual(len(lines), report.count)
        self.assertTrue(all(len(fields) == 5 for fields in lines))
        self.assertEqual(lines[0][:3], list(toy_splits()[2][0]))
        self.assertEqual({fields[3] for fields in lines}, {HEAD, TAIL})
        ranks = [float(fields[4]) for fields in lines]
        self.assertEqual(math.fsum(1 / r for r in ranks) / len(ranks), report.mrr)


class RankingOracleTests(SimpleTestCase):
    """Frozen random model on a seeded 30-entity / 100-triple graph against a brute-force evaluator."""

    def setUp(self):
        self.dataset = add_reciprocals(build_dataset(*random_splits(30, 100, 3, seed=8)))
        self.config = ModelConfig(embedding_dim=10, relation_dim=10, filter_length=3, num_filters=4)
        self.params = init_params(self.config, self.dataset.n_entities, self.dataset.n_relations,
                                  np.random.default_rng(3))

    def brute_force(self, scorer, tie_policy):
        everything = np.concatenate([self.dataset.train, self.dataset.valid, self.dataset.test]).tolist()
        ranks = []
        for h, r, t in self.dataset.test.tolist():
            known = {t2 for h2, r2, t2 in everything if (h2, r2) == (h, r)}
            scores = scorer(np.array([h]), np.array([r]))[0]
            ranks.append(brute_force_rank(scores, t, known, tie_policy))
        return ranks

    def test_hypernetwork_model(self):
        scorer = HyperScorer(self.params, self.config)
        for policy in ('optimistic', 'mean'):
            report = evaluate(self.params, self.dataset, 'test', self.config, tie_policy=policy, batch_size=7)
            ranks = self.brute_force(scorer, policy)
            self.assertEqual([record.rank for record in report.records], ranks)
            expected = brute_force_metrics(ranks)
            for name, value in expected.items():
                self.assertAlmostEqual(getattr(report, name), value, places=12, msg=name)

    def test_distmult_scorer(self):
        def scorer(heads, relations):
            return distmult_scores(heads, relations, self.params)

        report = evaluate_scorer(scorer, self.dataset, 'test')
        self.assertEqual([record.rank for record in report.records], self.brute_force(scorer, 'optimistic'))

    def test_metric_ordering(self):
        report = evaluate(self.params, self.dataset, 'test', self.config)
        self.assertLessEqual(report.hits_at_1, report.hits_at_3)
        self.assertLessEqual(report.hits_at_3, report.hits_at_10)
        self.assertGreaterEqual(report.mrr, report.hits_at_1)
