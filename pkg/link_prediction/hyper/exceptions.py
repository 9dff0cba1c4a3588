"""
Exceptions raised by the HyperKG numerical core.

Management commands turn any of these into a ``CommandError``.
"""

from typing import Iterable, Optional


class HyperKGError(Exception):
    pass


class TripleParseError(HyperKGError):
    """A triple file line that does not have exactly three tab-separated fields."""

    def __init__(self, line_number: int, field_count: int, path: Optional[str] = None,
                 empty_field: Optional[int] = None):
        self.line_number = line_number
        self.field_count = field_count
        self.path = path
        self.empty_field = empty_field
        where = f'{path}, line {line_number}' if path else f'line {line_number}'
        if empty_field is not None:
            super().__init__(f'{where}: field {empty_field} is empty')
        else:
            super().__init__(f'{where}: expected 3 tab-separated fields, found {field_count}')


class DatasetStateError(HyperKGError):
    pass


class ShapeError(HyperKGError):
    pass


class ConfigError(HyperKGError):
    pass


class CheckpointError(HyperKGError):
    pass


class RankingError(HyperKGError):
    pass


class VocabularyMismatchError(HyperKGError):
    def __init__(self, what: str, expected: int, actual: int):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f'{what} mismatch: checkpoint expects {expected}, dataset has {actual}')


class UnknownRelationError(HyperKGError):
    def __init__(self, name: str, suggestions: Iterable[str] = ()):
        self.name = name
        self.suggestions = list(suggestions)
        message = f'unknown relation {name!r}'
        if self.suggestions:
            message += '; nearest: ' + ', '.join(self.suggestions)
        super().__init__(message)


class TrainingDivergedError(HyperKGError):
    def __init__(self, epoch: int, what: str = 'loss'):
        self.epoch = epoch
        super().__init__(f'non-finite {what} at epoch {epoch}')
