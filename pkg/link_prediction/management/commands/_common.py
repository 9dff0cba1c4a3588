"""
Helpers shared by the HyperKG management commands.
"""

from contextlib import contextmanager

from django.core.management.base import CommandError

from link_prediction.hyper.evaluation import RankingReport, SeedSummary
from link_prediction.hyper.exceptions import HyperKGError

METRICS_HEADER = 'MR\tMRR\tH@10\tH@3\tH@1'
ROW_METRICS = ('mr', 'mrr', 'hits_at_10', 'hits_at_3', 'hits_at_1')


@contextmanager
def command_errors():
    """Report library and I/O failures as CommandError (exit status 1, no traceback)."""
    try:
        yield
    except (HyperKGError, OSError, UnicodeDecodeError) as e:
        raise CommandError(str(e)) from e


def _digits(metric: str) -> int:
    return 0 if metric == 'mr' else 3


def metrics_row(report: RankingReport) -> str:
    return '\t'.join(f'{getattr(report, metric):.{_digits(metric)}f}' for metric in ROW_METRICS)


def spread(summary: SeedSummary, metric: str) -> str:
    """``mean +/- std`` over several seeds, the plain value for one."""
    digits = _digits(metric)
    text = f'{summary.mean(metric):.{digits}f}'
    if len(summary.seeds) > 1:
        text += f' +/- {summary.std(metric):.{digits}f}'
    return text


def spread_row(summary: SeedSummary, metrics=ROW_METRICS) -> str:
    return '\t'.join(spread(summary, metric) for metric in metrics)


def parse_int_list(text: str, what: str):
    try:
        values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise CommandError(f'{what} must be a comma-separated list of integers, got {text!r}')
    if not values:
        raise CommandError(f'{what} must not be empty')
    return values


def parse_seeds(text):
    """Distinct seeds from a comma-separated list; an empty list when no option was given."""
    if text is None:
        return []
    seeds = parse_int_list(text, 'seeds')
    if len(set(seeds)) != len(seeds):
        raise CommandError(f'seeds must be distinct, got {text!r}')
    return seeds
