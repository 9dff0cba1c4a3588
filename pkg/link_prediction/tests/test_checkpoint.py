import hashlib
import struct
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_array_equal

from link_prediction.hyper.checkpoint import (
    DIGEST_SIZE,
    MAGIC,
    Checkpoint,
    from_bytes,
    load_checkpoint,
    save_checkpoint,
    to_bytes,
)
from link_prediction.hyper.data import add_reciprocals, build_dataset
from link_prediction.hyper.exceptions import CheckpointError
from link_prediction.hyper.model import HyperScorer, ModelConfig, init_params
from link_prediction.hyper.training import OptimizerState

from .toy import toy_splits


def resealed(payload: bytes) -> bytes:
    return payload + hashlib.sha256(payload).digest()


class CheckpointTests(SimpleTestCase):
    def setUp(self):
        self.dataset = add_reciprocals(build_dataset(*toy_splits()))
        self.config = ModelConfig(embedding_dim=12, relation_dim=12, filter_length=3, num_filters=4)
        self.params = init_params(self.config, self.dataset.n_entities, self.dataset.n_relations,
                                  np.random.default_rng(0))
        self.params.bn_hidden.running_mean[:] = np.linspace(-1, 1, 12)
        self.checkpoint = Checkpoint(
            config=self.config,
            params=self.params,
            relations=self.dataset.vocab.relations,
            n_entities=self.dataset.n_entities,
            num_original_relations=self.dataset.num_original_relations,
        )

    def with_optimizer(self) -> Checkpoint:
        optimizer = OptimizerState.create(self.params.trainable())
        optimizer.step = 17
        rng = np.random.default_rng(1)
        for name in optimizer.first_moment:
            optimizer.first_moment[name][...] = rng.normal(size=optimizer.first_moment[name].shape)
            optimizer.second_moment[name][...] = rng.uniform(size=optimizer.second_moment[name].shape)
        return replace(self.checkpoint, optimizer=optimizer)

    def test_save_load_save_is_bit_exact(self):
        for checkpoint in (self.checkpoint, self.with_optimizer()):
            data = to_bytes(checkpoint)
            self.assertEqual(to_bytes(from_bytes(data)), data)

    def test_loaded_tensors_and_metadata(self):
        loaded = from_bytes(to_bytes(self.with_optimizer()))
        self.assertEqual(loaded.config, self.config)
        self.assertEqual(loaded.relations, self.dataset.vocab.relations)
        self.assertEqual(loaded.n_entities, 20)
        self.assertEqual(loaded.num_original_relations, 3)
        for name, array in self.params.tensors().items():
            assert_array_equal(loaded.params.tensors()[name], array)
        self.assertEqual(loaded.optimizer.step, 17)
        self.assertEqual(set(loaded.optimizer.first_moment), set(self.params.trainable()))

    def test_without_optimizer_state(self):
        self.assertIsNone(from_bytes(to_bytes(self.checkpoint)).optimizer)

    def test_without_hypernetwork(self):
        config = ModelConfig(embedding_dim=12, relation_dim=12, filter_length=3, num_filters=4, hypernetwork=False)
        params = init_params(config, 20, 6, np.random.default_rng(2))
        checkpoint = replace(self.checkpoint, config=config, params=params)
        loaded = from_bytes(to_bytes(checkpoint))
        self.assertIsNone(loaded.params.hypernetwork)
        self.assertFalse(loaded.config.hypernetwork)

    def test_loaded_model_reproduces_scores(self):
        loaded = from_bytes(to_bytes(self.checkpoint))
        heads = np.arange(10)
        relations = np.arange(10) % 6
        assert_array_equal(HyperScorer(loaded.params, loaded.config)(heads, relations),
                           HyperScorer(self.params, self.config)(heads, relations))

    def test_any_flipped_byte_is_detected(self):
        data = bytearray(to_bytes(self.checkpoint))
        for position in (len(MAGIC) + 1, len(data) // 2, len(data) - DIGEST_SIZE - 1, len(data) - 1):
            corrupted = bytearray(data)
            corrupted[position] ^= 0x01
            with self.assertRaises(CheckpointError):
                from_bytes(bytes(corrupted))

    def test_bad_magic(self):
        data = to_bytes(self.checkpoint)
        with self.assertRaisesRegex(CheckpointError, 'magic'):
            from_bytes(resealed(b'NOPE' + data[len(MAGIC):-DIGEST_SIZE]))

    def test_unsupported_version(self):
        payload = to_bytes(self.checkpoint)[:-DIGEST_SIZE]
        payload = MAGIC + struct.pack('<I', 99) + payload[len(MAGIC) + 4:]
        with self.assertRaisesRegex(CheckpointError, 'version 99'):
            from_bytes(resealed(payload))

    def test_truncated(self):
        data = to_bytes(self.checkpoint)
        with self.assertRaises(CheckpointError):
            from_bytes(data[:10])
        with self.assertRaisesRegex(CheckpointError, 'truncated'):
            from_bytes(resealed(data[:-DIGEST_SIZE - 100]))

    def test_trailing_bytes(self):
        payload = to_bytes(self.checkpoint)[:-DIGEST_SIZE]
        with self.assertRaisesRegex(CheckpointError, 'trailing'):
            from_bytes(resealed(payload + b'\x00'))

    def test_shapes_must_match_configuration(self):
        wider = ModelConfig(embedding_dim=12, relation_dim=12, filter_length=3, num_filters=5)
        with self.assertRaises(CheckpointError):
            from_bytes(to_bytes(replace(self.checkpoint, config=wider)))

    def test_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = save_checkpoint(Path(tmp) / 'nested' / 'model.hkge', self.checkpoint)
            self.assertEqual(path.read_bytes()[:4], MAGIC)
            self.assertEqual(to_bytes(load_checkpoint(path)), path.read_bytes())
            with self.assertRaises(FileNotFoundError):
                load_checkpoint(Path(tmp) / 'missing.hkge')
