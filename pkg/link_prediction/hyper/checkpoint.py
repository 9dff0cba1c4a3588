"""
Binary checkpoint format.

Layout (all integers little-endian):

    magic      b'HKGE'
    version    uint32
    metadata   uint32 length + UTF-8 JSON (sorted keys)
    tensors    uint32 count, then per tensor:
                   uint16 name length + UTF-8 name
                   uint8 ndim + ndim x uint64 shape
                   float64 data, row-major
    digest     32-byte SHA-256 of everything above

Tensors are always stored as float64, so saving a loaded checkpoint
reproduces the original bytes.
"""

import hashlib
import io
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Dict, Optional, Tuple, Union

import numpy as np

from .exceptions import CheckpointError, ConfigError, ShapeError
from .model import ModelConfig, ModelParams
from .training import OptimizerState

logger = logging.getLogger(__name__)

MAGIC = b'HKGE'
FORMAT_VERSION = 1
DIGEST_SIZE = 32

_UINT8 = struct.Struct('<B')
_UINT16 = struct.Struct('<H')
_UINT32 = struct.Struct('<I')
_UINT64 = struct.Struct('<Q')

FIRST_MOMENT_PREFIX = 'adam.m.'
SECOND_MOMENT_PREFIX = 'adam.v.'


@dataclass
class Checkpoint:
    """
    Everything needed to rebuild a model: its configuration, all tensors, the
    relation names it was trained with and optionally the Adam state.
    """
    config: ModelConfig
    params: ModelParams
    relations: Tuple[str, ...]
    n_entities: int
    num_original_relations: int
    optimizer: Optional[OptimizerState] = None

    def metadata(self) -> Dict:
        optimizer = None
        if self.optimizer is not None:
            optimizer = {
                'step': self.optimizer.step,
                'beta1': self.optimizer.beta1,
                'beta2': self.optimizer.beta2,
                'epsilon': self.optimizer.epsilon,
            }
        return {
            'model': self.config.to_dict(),
            'n_entities': self.n_entities,
            'relations': list(self.relations),
            'num_original_relations': self.num_original_relations,
            'optimizer': optimizer,
        }


def _write_tensor(stream: BinaryIO, name: str, array: np.ndarray) -> None:
    encoded = name.encode('utf-8')
    stream.write(_UINT16.pack(len(encoded)))
    stream.write(encoded)
    stream.write(_UINT8.pack(array.ndim))
    for dim in array.shape:
        stream.write(_UINT64.pack(dim))
    stream.write(np.ascontiguousarray(array, dtype='<f8').tobytes())


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CheckpointError('checkpoint is truncated')
    return data


def _read_tensor(stream: BinaryIO) -> Tuple[str, np.ndarray]:
    (name_length,) = _UINT16.unpack(_read_exact(stream, _UINT16.size))
    name = _read_exact(stream, name_length).decode('utf-8')
    (ndim,) = _UINT8.unpack(_read_exact(stream, _UINT8.size))
    shape = tuple(_UINT64.unpack(_read_exact(stream, _UINT64.size))[0] for _ in range(ndim))
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    data = _read_exact(stream, count * 8)
    array = np.frombuffer(data, dtype='<f8').astype(np.float64).reshape(shape)
    return name, array


def to_bytes(checkpoint: Checkpoint) -> bytes:
    tensors = dict(checkpoint.params.tensors())
    if checkpoint.optimizer is not None:
        for name, moment in checkpoint.optimizer.first_moment.items():
            tensors[FIRST_MOMENT_PREFIX + name] = moment
        for name, moment in checkpoint.optimizer.second_moment.items():
            tensors[SECOND_MOMENT_PREFIX + name] = moment

    body = io.BytesIO()
    body.write(MAGIC)
    body.write(_UINT32.pack(FORMAT_VERSION))
    metadata = json.dumps(checkpoint.metadata(), sort_keys=True).encode('utf-8')
    body.write(_UINT32.pack(len(metadata)))
    body.write(metadata)
    body.write(_UINT32.pack(len(tensors)))
    for name, array in tensors.items():
        _write_tensor(body, name, array)

    payload = body.getvalue()
    return payload + hashlib.sha256(payload).digest()


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < len(MAGIC) + _UINT32.size + DIGEST_SIZE:
        raise CheckpointError('checkpoint is truncated')
    payload, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if payload[:len(MAGIC)] != MAGIC:
        raise CheckpointError('not a HyperKG checkpoint (bad magic)')
    if hashlib.sha256(payload).digest() != digest:
        raise CheckpointError('checkpoint digest mismatch; the file is corrupt')

    stream = io.BytesIO(payload)
    stream.seek(len(MAGIC))
    (version,) = _UINT32.unpack(_read_exact(stream, _UINT32.size))
    if version != FORMAT_VERSION:
        raise CheckpointError(f'unsupported checkpoint version {version}')

    (metadata_length,) = _UINT32.unpack(_read_exact(stream, _UINT32.size))
    try:
        metadata = json.loads(_read_exact(stream, metadata_length).decode('utf-8'))
    except ValueError as e:
        raise CheckpointError(f'unreadable checkpoint metadata: {e}') from e

    (count,) = _UINT32.unpack(_read_exact(stream, _UINT32.size))
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        name, array = _read_tensor(stream)
        tensors[name] = array
    if stream.read(1):
        raise CheckpointError('trailing bytes after the last tensor')

    first = {k[len(FIRST_MOMENT_PREFIX):]: v for k, v in tensors.items() if k.startswith(FIRST_MOMENT_PREFIX)}
    second = {k[len(SECOND_MOMENT_PREFIX):]: v for k, v in tensors.items() if k.startswith(SECOND_MOMENT_PREFIX)}
    model_tensors = {k: v for k, v in tensors.items() if not k.startswith('adam.')}

    try:
        config = ModelConfig.from_dict(metadata['model'])
        params = ModelParams.from_tensors(model_tensors)
        params.check_shapes(config)
    except (KeyError, TypeError, ConfigError, ShapeError) as e:
        raise CheckpointError(f'checkpoint tensors do not match their configuration: {e}') from e

    optimizer = None
    if metadata.get('optimizer') is not None:
        settings = metadata['optimizer']
        optimizer = OptimizerState(first, second, step=settings['step'], beta1=settings['beta1'],
                                   beta2=settings['beta2'], epsilon=settings['epsilon'])

    return Checkpoint(
        config=config,
        params=params,
        relations=tuple(metadata['relations']),
        n_entities=metadata['n_entities'],
        num_original_relations=metadata['num_original_relations'],
        optimizer=optimizer,
    )


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(checkpoint))
    logger.debug('Wrote checkpoint %s', path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'checkpoint not found: {path}')
    return from_bytes(path.read_bytes())
