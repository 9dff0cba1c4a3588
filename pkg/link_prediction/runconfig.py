"""
Run configuration files.

A run configuration is plain text, one ``key = value`` per line; ``#`` starts
a comment. Values are validated by RunConfigSerializer and the fully
resolved configuration is written next to every run's outputs.
"""

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, Union

from .hyper.exceptions import ConfigError
from .hyper.model import ModelConfig
from .hyper.training import TrainConfig
from .serializers import RunConfigSerializer

RESOLVED_CONFIG_NAME = 'run.conf'


def parse_config_text(text: str, source: str = '<config>') -> Dict[str, str]:
    values: Dict[str, str] = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        content = line.split('#', 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition('=')
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f'{source}, line {line_number}: expected "key = value"')
        if key in values:
            raise ConfigError(f'{source}, line {line_number}: duplicate key {key!r}')
        values[key] = value.strip()
    return values


def _format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return repr(value) if isinstance(value, float) else str(value)


def _validation_message(errors) -> str:
    parts = []
    for key, messages in errors.items():
        if isinstance(messages, (list, tuple)):
            messages = '; '.join(str(m) for m in messages)
        parts.append(f'{key}: {messages}')
    return 'invalid run configuration: ' + ', '.join(parts)


@dataclass(frozen=True)
class RunConfig:
    """
    A validated, fully resolved run configuration.
    """
    values: Dict[str, object]

    @classmethod
    def from_mapping(cls, data: Dict[str, object]) -> 'RunConfig':
        serializer = RunConfigSerializer(data=data)
        if not serializer.is_valid():
            raise ConfigError(_validation_message(serializer.errors))
        return cls(dict(serializer.validated_data))

    @classmethod
    def from_text(cls, text: str, source: str = '<config>') -> 'RunConfig':
        return cls.from_mapping(parse_config_text(text, source))

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def dataset_dir(self) -> Path:
        return Path(self.values['dataset_dir'])

    @property
    def output_dir(self) -> Path:
        return Path(self.values['output_dir'])

    @property
    def model(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        return ModelConfig(**{key: value for key, value in self.values.items() if key in names})

    @property
    def train(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)} - {'dtype'}
        options = {key: value for key, value in self.values.items() if key in names}
        return TrainConfig(dtype=self.values['precision'], **options)

    def with_overrides(self, **changes) -> 'RunConfig':
        """
        Re-validate with some keys replaced; a None value unsets the key so
        that it is derived again. ``preset`` is dropped since every preset
        value is already resolved.
        """
        data = {key: value for key, value in self.values.items() if key != 'preset'}
        for key, value in changes.items():
            if value is None:
                data.pop(key, None)
            else:
                data[key] = value
        return RunConfig.from_mapping(data)

    def to_text(self) -> str:
        return ''.join(f'{key} = {_format_value(self.values[key])}\n' for key in sorted(self.values))

    def write(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / RESOLVED_CONFIG_NAME
        path.write_text(self.to_text(), encoding='utf-8')
        return path


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'configuration file not found: {path}')
    return RunConfig.from_text(path.read_text(encoding='utf-8'), str(path))
