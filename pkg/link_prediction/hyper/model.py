"""
The HypER scoring model.

A hypernetwork H maps each relation embedding w_r to a bank of 1D filters
F_r = vec⁻¹(w_r H); the subject embedding is convolved with F_r, the
vectorized feature map is projected back to d_e dimensions by W, passed
through ReLU and scored against every entity by inner product.

vec and vec⁻¹ are row-major throughout: F_r[k, j] = (w_r H)[k * n_f + j] and
vec(M_r)[i * n_f + j] = M_r[i, j].
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .exceptions import ConfigError, ShapeError
from .tensor_ops import (
    BatchNormCache,
    BatchNormState,
    batchnorm,
    batchnorm_backward,
    conv1d_valid,
    conv1d_valid_backward,
    dropout,
    dropout_backward,
    identity_backward,
    linear,
    linear_backward,
    relu,
    relu_backward,
)

ACTIVATIONS = ('relu', 'linear')
BATCHNORM_SITES = ('bn_input', 'bn_feature', 'bn_hidden')


@dataclass(frozen=True)
class ModelConfig:
    """
    Shape and regularization settings of a HypER model.

    With ``hypernetwork=False`` the relation embedding is reshaped directly into
    the filter bank, so ``relation_dim`` must equal ``filter_length * num_filters``.
    """
    embedding_dim: int = 200
    relation_dim: int = 200
    filter_length: int = 9
    num_filters: int = 32
    hypernetwork: bool = True
    input_dropout: float = 0.2
    feature_map_dropout: float = 0.2
    hidden_dropout: float = 0.3
    batchnorm: bool = True
    activation: str = 'relu'

    def __post_init__(self):
        if self.embedding_dim < 1 or self.relation_dim < 1:
            raise ConfigError('embedding dimensions must be positive')
        if not 1 <= self.filter_length <= self.embedding_dim:
            raise ConfigError(
                f'filter_length must be in [1, embedding_dim={self.embedding_dim}], got {self.filter_length}')
        if self.num_filters < 1:
            raise ConfigError(f'num_filters must be at least 1, got {self.num_filters}')
        if not self.hypernetwork and self.relation_dim != self.filter_size:
            raise ConfigError(
                f'without the hypernetwork relation_dim must equal filter_length * num_filters '
                f'= {self.filter_size}, got {self.relation_dim}')
        for name in ('input_dropout', 'feature_map_dropout', 'hidden_dropout'):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f'{name} must be in [0, 1), got {rate}')
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f'activation must be one of {", ".join(ACTIVATIONS)}, got {self.activation!r}')

    @property
    def feature_map_length(self) -> int:
        """l_m = d_e - l_f + 1"""
        return self.embedding_dim - self.filter_length + 1

    @property
    def filter_size(self) -> int:
        return self.filter_length * self.num_filters

    @property
    def projection_shape(self) -> Tuple[int, int]:
        return self.feature_map_length * self.num_filters, self.embedding_dim

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> 'ModelConfig':
        return cls(**data)


@dataclass
class ModelParams:
    """
    All tensors of a HypER model.

    ``hypernetwork`` is None when the model runs without H.
    """
    entity: np.ndarray
    relation: np.ndarray
    hypernetwork: Optional[np.ndarray]
    projection: np.ndarray
    bn_input: BatchNormState
    bn_feature: BatchNormState
    bn_hidden: BatchNormState

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]

    def trainable(self) -> Dict[str, np.ndarray]:
        """
        Named trainable tensors; the arrays are the live ones, not copies.
        """
        tensors = {'E': self.entity, 'R': self.relation}
        if self.hypernetwork is not None:
            tensors['H'] = self.hypernetwork
        tensors['W'] = self.projection
        for site in BATCHNORM_SITES:
            state = getattr(self, site)
            tensors[f'{site}.gamma'] = state.gamma
            tensors[f'{site}.beta'] = state.beta
        return tensors

    def tensors(self) -> Dict[str, np.ndarray]:
        """
        Every tensor including batch-norm running statistics, in a fixed order.
        """
        tensors = self.trainable()
        for site in BATCHNORM_SITES:
            state = getattr(self, site)
            tensors[f'{site}.running_mean'] = state.running_mean
            tensors[f'{site}.running_var'] = state.running_var
        return tensors

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> 'ModelParams':
        states = {
            site: BatchNormState(
                gamma=tensors[f'{site}.gamma'],
                beta=tensors[f'{site}.beta'],
                running_mean=tensors[f'{site}.running_mean'],
                running_var=tensors[f'{site}.running_var'],
            )
            for site in BATCHNORM_SITES
        }
        return cls(
            entity=tensors['E'],
            relation=tensors['R'],
            hypernetwork=tensors.get('H'),
            projection=tensors['W'],
            **states,
        )

    def copy(self) -> 'ModelParams':
        return ModelParams.from_tensors({name: array.copy() for name, array in self.tensors().items()})

    def check_shapes(self, config: ModelConfig) -> None:
        d_e, d_r = config.embedding_dim, config.relation_dim
        expected = {
            'E': (self.n_entities, d_e),
            'R': (self.n_relations, d_r),
            'W': config.projection_shape,
        }
        if config.hypernetwork:
            expected['H'] = (d_r, config.filter_size)
        elif self.hypernetwork is not None:
            raise ShapeError('model configured without hypernetwork but H is present')
        tensors = self.tensors()
        for name, shape in expected.items():
            if name not in tensors or tensors[name].shape != shape:
                actual = tensors[name].shape if name in tensors else None
                raise ShapeError(f'tensor {name} has shape {actual}, expected {shape}')

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for array in self.tensors().values())


# =============================================================================
# Initialization and parameter accounting
# =============================================================================

def _xavier_uniform(rng: np.random.Generator, shape: Tuple[int, int], scale: float, dtype) -> np.ndarray:
    fan_in, fan_out = shape
    bound = scale * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(config: ModelConfig, n_entities: int, n_relations: int,
                rng: np.random.Generator, dtype=np.float64, scale: float = 1.0) -> ModelParams:
    """
    Xavier-uniform tables, identity batch-norm affine maps.

    Args:
        config: Model shapes
        n_entities: Number of entities
        n_relations: Number of relations (including reciprocals)
        rng: Seeded generator; the same seed gives identical parameters
        dtype: Storage precision
        scale: Multiplier on the Xavier bound
    """
    d_e, d_r = config.embedding_dim, config.relation_dim
    entity = _xavier_uniform(rng, (n_entities, d_e), scale, dtype)
    relation = _xavier_uniform(rng, (n_relations, d_r), scale, dtype)
    hypernetwork = _xavier_uniform(rng, (d_r, config.filter_size), scale, dtype) if config.hypernetwork else None
    projection = _xavier_uniform(rng, config.projection_shape, scale, dtype)
    return ModelParams(
        entity=entity,
        relation=relation,
        hypernetwork=hypernetwork,
        projection=projection,
        bn_input=BatchNormState.create(1, dtype),
        bn_feature=BatchNormState.create(config.num_filters, dtype),
        bn_hidden=BatchNormState.create(d_e, dtype),
    )


@dataclass(frozen=True)
class ParamCount:
    entity: int
    relation: int
    hypernetwork: int
    projection: int
    batchnorm: int

    @property
    def total(self) -> int:
        """Embedding, hypernetwork and projection parameters; batch-norm excluded."""
        return self.entity + self.relation + self.hypernetwork + self.projection


def param_count(config: ModelConfig, n_entities: int, n_relations: int) -> ParamCount:
    d_e, d_r = config.embedding_dim, config.relation_dim
    l_m, n_f = config.feature_map_length, config.num_filters
    batchnorm_affine = 2 * (1 + n_f + d_e) if config.batchnorm else 0
    return ParamCount(
        entity=n_entities * d_e,
        relation=n_relations * d_r,
        hypernetwork=d_r * config.filter_size if config.hypernetwork else 0,
        projection=l_m * n_f * d_e,
        batchnorm=batchnorm_affine,
    )


# =============================================================================
# Filter generation and the tensor view
# =============================================================================

@dataclass(frozen=True)
class FilterBank:
    filters: np.ndarray  # (l_f, n_f)
    relation: int


def relation_filters(params: ModelParams, config: ModelConfig, relations: np.ndarray) -> np.ndarray:
    """
    Filter banks for a batch of relation ids, shape ``(B, l_f, n_f)``.
    """
    w = params.relation[relations]
    flat = linear(w, params.hypernetwork) if config.hypernetwork else w
    if flat.shape[-1] != config.filter_size:
        raise ConfigError(f'relation vectors of size {flat.shape[-1]} cannot be reshaped into '
                          f'{config.filter_length} x {config.num_filters} filters')
    return flat.reshape(flat.shape[:-1] + (config.filter_length, config.num_filters))


def generate_filters(relation: int, params: ModelParams, config: ModelConfig) -> FilterBank:
    """
    F_r = vec⁻¹(w_r H), or vec⁻¹(w_r) when the hypernetwork is disabled.
    """
    if not 0 <= relation < params.n_relations:
        raise ValueError(f'relation id {relation} out of range [0, {params.n_relations})')
    filters = relation_filters(params, config, np.array(relation))
    return FilterBank(filters=filters, relation=relation)


@dataclass(frozen=True)
class SparseConvMatrix:
    """
    The convolution with one filter bank written as a sparse
    ``(l_m * n_f) x d_e`` matrix: row ``i * n_f + j`` holds column j of the
    filter bank at columns ``i .. i + l_f - 1``.
    """
    matrix: sparse.csr_matrix
    relation: int

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dot(self, signal: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ signal)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def expand_sparse(bank: FilterBank, embedding_dim: int) -> SparseConvMatrix:
    filters = bank.filters
    l_f, n_f = filters.shape
    if l_f > embedding_dim:
        raise ShapeError(f'filter length {l_f} exceeds embedding dimension {embedding_dim}')
    l_m = embedding_dim - l_f + 1

    i, j, k = np.meshgrid(np.arange(l_m), np.arange(n_f), np.arange(l_f), indexing='ij')
    rows = (i * n_f + j).ravel()
    cols = (i + k).ravel()
    values = filters[k, j].ravel()
    matrix = sparse.csr_matrix((values, (rows, cols)), shape=(l_m * n_f, embedding_dim))
    return SparseConvMatrix(matrix=matrix, relation=bank.relation)


def relation_matrix(relation: int, params: ModelParams, config: ModelConfig) -> np.ndarray:
    """
    The d_e x d_e matrix M with vec(e1 * F_r) W = e1 M.

    With a linear activation and batch norm and dropout off, the score of
    (e1, r, e2) is exactly ``e1 @ M @ e2``.
    """
    conv = expand_sparse(generate_filters(relation, params, config), config.embedding_dim)
    return np.asarray(conv.matrix.T @ params.projection)


def core_tensor(params: ModelParams, config: ModelConfig) -> np.ndarray:
    """
    Relation-agnostic ``d_e x d_e x d_r`` core: relation_matrix(r) equals
    ``core @ w_r`` for every relation r.
    """
    if not config.hypernetwork:
        raise ConfigError('the core tensor is only defined when filters come from the hypernetwork')
    d_e, d_r = config.embedding_dim, config.relation_dim
    core = np.empty((d_e, d_e, d_r), dtype=params.projection.dtype)
    for k in range(d_r):
        strand = FilterBank(params.hypernetwork[k].reshape(config.filter_length, config.num_filters), relation=-1)
        core[:, :, k] = np.asarray(expand_sparse(strand, d_e).matrix.T @ params.projection)
    return core


def filter_rank(params: ModelParams, config: ModelConfig) -> int:
    """
    Rank of all filter banks stacked as an ``n_r x (l_f * n_f)`` matrix.
    """
    stacked = linear(params.relation, params.hypernetwork) if config.hypernetwork else params.relation
    return int(np.linalg.matrix_rank(stacked))


# =============================================================================
# Scoring pipeline
# =============================================================================

@dataclass
class ForwardCache:
    heads: np.ndarray
    relations: np.ndarray
    relation_vectors: np.ndarray
    filters: np.ndarray
    conv_input: np.ndarray
    feature_vector: np.ndarray
    pre_activation: np.ndarray
    hidden: np.ndarray
    masks: Tuple[np.ndarray, np.ndarray, np.ndarray]
    bn_caches: Dict[str, BatchNormCache] = field(default_factory=dict)


def _maybe_batchnorm(x: np.ndarray, state: BatchNormState, training: bool,
                     caches: Dict[str, BatchNormCache], site: str, enabled: bool) -> np.ndarray:
    if not enabled:
        return x
    shape = x.shape
    out, cache = batchnorm(x.reshape(-1, state.num_features), state, training)
    caches[site] = cache
    return out.reshape(shape)


def forward(params: ModelParams, config: ModelConfig, heads: Sequence[int], relations: Sequence[int],
            training: bool = False, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, ForwardCache]:
    """
    1-N scores for a batch of (subject, relation) queries.

    Pipeline: lookup e1 -> [batchnorm -> input dropout] -> conv with F_r ->
    [batchnorm -> feature-map dropout] on vec(M_r) -> W -> [batchnorm ->
    hidden dropout] -> activation -> inner product with every entity.

    Args:
        params: Model tensors (batch-norm running statistics are updated in train mode)
        config: Model configuration
        heads: Subject entity ids, length B
        relations: Relation ids, length B
        training: Train mode samples dropout masks and uses batch statistics
        rng: Generator for dropout masks

    Returns:
        Tuple of (raw scores of shape (B, n_e), cache for ``backward``)
    """
    heads = np.asarray(heads, dtype=np.int64)
    relations = np.asarray(relations, dtype=np.int64)
    bn = config.batchnorm
    caches: Dict[str, BatchNormCache] = {}

    x = params.entity[heads]
    x = _maybe_batchnorm(x, params.bn_input, training, caches, 'bn_input', bn)
    x, input_mask = dropout(x, config.input_dropout, training, rng)

    relation_vectors = params.relation[relations]
    filters = relation_filters(params, config, relations)
    feature_map = conv1d_valid(x, filters)
    feature_map = _maybe_batchnorm(feature_map, params.bn_feature, training, caches, 'bn_feature', bn)
    feature_vector = feature_map.reshape(len(heads), -1)
    feature_vector, feature_mask = dropout(feature_vector, config.feature_map_dropout, training, rng)

    projected = linear(feature_vector, params.projection)
    projected = _maybe_batchnorm(projected, params.bn_hidden, training, caches, 'bn_hidden', bn)
    pre_activation, hidden_mask = dropout(projected, config.hidden_dropout, training, rng)
    hidden = relu(pre_activation) if config.activation == 'relu' else pre_activation

    scores = hidden @ params.entity.T
    cache = ForwardCache(
        heads=heads,
        relations=relations,
        relation_vectors=relation_vectors,
        filters=filters,
        conv_input=x,
        feature_vector=feature_vector,
        pre_activation=pre_activation,
        hidden=hidden,
        masks=(input_mask, feature_mask, hidden_mask),
        bn_caches=caches,
    )
    return scores, cache


def backward(params: ModelParams, config: ModelConfig, cache: ForwardCache,
             grad_scores: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Gradients of every trainable tensor given d(loss)/d(scores).

    Returns:
        Dict keyed like ``ModelParams.trainable()``
    """
    input_mask, feature_mask, hidden_mask = cache.masks
    batch = len(cache.heads)
    grads: Dict[str, np.ndarray] = {}

    grad_entity = grad_scores.T @ cache.hidden
    grad_hidden = grad_scores @ params.entity

    activation_backward = relu_backward if config.activation == 'relu' else identity_backward
    grad = activation_backward(cache.pre_activation, grad_hidden)
    grad = dropout_backward(grad, hidden_mask)
    if config.batchnorm:
        grad, grads['bn_hidden.gamma'], grads['bn_hidden.beta'] = batchnorm_backward(
            grad, cache.bn_caches['bn_hidden'])

    grad, grads['W'] = linear_backward(cache.feature_vector, params.projection, grad)
    grad = dropout_backward(grad, feature_mask)
    grad = grad.reshape(batch, config.feature_map_length, config.num_filters)
    if config.batchnorm:
        flat, grads['bn_feature.gamma'], grads['bn_feature.beta'] = batchnorm_backward(
            grad.reshape(-1, config.num_filters), cache.bn_caches['bn_feature'])
        grad = flat.reshape(grad.shape)

    grad_input, grad_filters = conv1d_valid_backward(cache.conv_input, cache.filters, grad)
    grad_flat = grad_filters.reshape(batch, config.filter_size)
    if config.hypernetwork:
        grad_relation_vectors, grads['H'] = linear_backward(cache.relation_vectors, params.hypernetwork, grad_flat)
    else:
        grad_relation_vectors = grad_flat
    grad_relation = np.zeros_like(params.relation)
    np.add.at(grad_relation, cache.relations, grad_relation_vectors)
    grads['R'] = grad_relation

    grad_input = dropout_backward(grad_input, input_mask)
    if config.batchnorm:
        flat, grads['bn_input.gamma'], grads['bn_input.beta'] = batchnorm_backward(
            grad_input.reshape(-1, 1), cache.bn_caches['bn_input'])
        grad_input = flat.reshape(grad_input.shape)
    np.add.at(grad_entity, cache.heads, grad_input)
    grads['E'] = grad_entity

    # batch-norm affine parameters get zero gradient when batch norm is off
    for site in BATCHNORM_SITES:
        state = getattr(params, site)
        grads.setdefault(f'{site}.gamma', np.zeros_like(state.gamma))
        grads.setdefault(f'{site}.beta', np.zeros_like(state.beta))
    return grads


def score_1N(head: int, relation: int, params: ModelParams, config: ModelConfig,
             training: bool = False, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Raw scores of (head, relation, e) for every entity e."""
    scores, _ = forward(params, config, [head], [relation], training, rng)
    return scores[0]


def score_triple(head: int, relation: int, tail: int, params: ModelParams, config: ModelConfig) -> float:
    """Eval-mode score of a single triple."""
    return float(score_1N(head, relation, params, config)[tail])


class HyperScorer:
    """
    Eval-mode 1-N scorer bound to a set of parameters.
    """

    def __init__(self, params: ModelParams, config: ModelConfig):
        self.params = params
        self.config = config

    def __call__(self, heads: np.ndarray, relations: np.ndarray) -> np.ndarray:
        scores, _ = forward(self.params, self.config, heads, relations, training=False)
        return scores


# =============================================================================
# DistMult baseline
# =============================================================================

def _check_distmult(params: ModelParams) -> None:
    if params.relation.shape[1] != params.entity.shape[1]:
        raise ConfigError(
            f'DistMult needs relation_dim == embedding_dim, got {params.relation.shape[1]} '
            f'and {params.entity.shape[1]}')


def distmult_score(head: int, relation: int, tail: int, params: ModelParams) -> float:
    """<e1, w_r, e2> = sum_i e1[i] * w_r[i] * e2[i]"""
    _check_distmult(params)
    return float(np.sum(params.entity[head] * params.relation[relation] * params.entity[tail]))


def distmult_scores(heads: np.ndarray, relations: np.ndarray, params: ModelParams) -> np.ndarray:
    """DistMult scores of each (head, relation) query against every entity."""
    _check_distmult(params)
    return (params.entity[heads] * params.relation[relations]) @ params.entity.T
