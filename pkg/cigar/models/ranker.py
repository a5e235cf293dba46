"""
    This file is part of cigar.


    Real-valued re-ranking models and the baselines they are compared to.

    BPR-MF scores by inner product and trains on the logistic pairwise
    loss. CML scores by negative Euclidean distance, trains on a hinge
    loss and keeps every embedding inside the unit ball. NeuMF adds the
    GMF elementwise product to an MLP over a second embedding pair and
    trains pointwise: the sampled positive is pushed towards 1 and the
    sampled negative towards 0. POP scores by training popularity and
    BPR-B by inner products of BPR-MF embeddings quantized to codes.

    Any trainable model becomes its "+" variant when trained with
    candidates: a share h of its negatives is then drawn from each
    user's retrieved candidates rather than the whole catalogue.

"""

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from cigar.classes import container
from cigar.classes.errors import ConfigurationError, EmptyDatasetError, NumericError, PreconditionError
from cigar.classes.progress import progress
from cigar.const import formats, models, names
from cigar.setup import settings
from cigar.tools import codes, metrics
from cigar.tools.codes import BinaryCodeMatrix
from cigar.tools.dataset import InteractionDataset
from cigar.tools.mih import CandidateList, CandidateSet
from cigar.tools.optimize import Adam, accumulate
from cigar.tools.sample import Sampler, TripletBatch


log = logging.getLogger(__name__)


@dataclass
class RerankConfig:
    kind: int = field(default_factory=lambda: names.MODEL_KEYS[settings.ranker])
    k: int = field(default_factory=lambda: settings.embedding_dim)
    lam: float = field(default_factory=lambda: settings.ranker_lambda)
    h: float = field(default_factory=lambda: settings.sampling_ratio)
    c: int = field(default_factory=lambda: settings.candidates)
    margin: float = field(default_factory=lambda: settings.margin)
    mlp_arch: list = field(default_factory=lambda: list(settings.mlp_arch))
    neumf_dim: int = field(default_factory=lambda: settings.neumf_dim)
    init_std: float = field(default_factory=lambda: settings.ranker_init_std)
    num_epochs: int = field(default_factory=lambda: settings.num_epochs)
    iters_per_epoch: int = field(default_factory=lambda: settings.iters_per_epoch)
    batch_size: int = field(default_factory=lambda: settings.batch_size)
    learning_rate: float = field(default_factory=lambda: settings.learning_rate)
    seed: int = field(default_factory=lambda: settings.seed)
    eval_every: int = field(default_factory=lambda: settings.eval_every)
    patience: int = field(default_factory=lambda: settings.patience)
    eval_n: int = field(default_factory=lambda: settings.ranker_eval_n)
    queue_size: int = field(default_factory=lambda: settings.sampler_queue_size)
    threads: int = field(default_factory=lambda: settings.threads)

    def validate(self) -> 'RerankConfig':
        if self.kind not in names.MODELS:
            raise ConfigurationError(f'Unknown model kind: {self.kind}')
        if not 0 <= self.h <= 1:
            raise ConfigurationError(f'Sampling ratio must lie in [0, 1], got {self.h}')
        if self.k < 1 or self.neumf_dim < 1 or self.c < 0:
            raise ConfigurationError('Embedding sizes must be positive and c non-negative')
        if self.margin <= 0:
            raise ConfigurationError(f'CML margin must be positive, got {self.margin}')
        if self.batch_size < 1 or self.num_epochs < 0:
            raise ConfigurationError('Batch size must be positive and epochs non-negative')
        return self


class RankerModel:
    """ A model kind plus its named parameter arrays. Scoring dispatches
    on kind; trained models are never mutated and can be shared between
    scoring threads. """
    def __init__(self, kind: int, params: dict, num_users: int, num_items: int, candidate_oriented: bool = False, label: str = None) -> None:
        self.kind = kind
        self.label = label
        self.params = params
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.candidate_oriented = candidate_oriented
        self.telemetry = {}

    @property
    def name(self) -> str:
        return self.label or names.model(self.kind, self.candidate_oriented)

    @property
    def user_emb(self) -> np.ndarray:
        return self.params.get('user_emb')

    @property
    def item_emb(self) -> np.ndarray:
        return self.params.get('item_emb')

    def score(self, user: int, item: int) -> float:
        if not 0 <= item < self.num_items:
            raise PreconditionError(f'Item {item} is out of range')
        return float(self.scores(user, np.asarray([item]))[0])

    def scores(self, user: int, items: np.ndarray = None) -> np.ndarray:
        """ Scores of one user for the given items (all items if None). """
        if not 0 <= user < self.num_users:
            raise PreconditionError(f'User {user} is out of range')

        items = np.arange(self.num_items) if items is None else np.asarray(items, dtype=np.int64)

        if self.kind == models.BPR_MF:
            return self.params['item_emb'][items] @ self.params['user_emb'][user]

        if self.kind == models.CML:
            return -np.linalg.norm(self.params['item_emb'][items] - self.params['user_emb'][user], axis=1)

        if self.kind == models.NEUMF:
            return neumf_forward(self.params, np.full(len(items), user), items)[0]

        if self.kind == models.POP:
            return self.params['popularity'][items].astype(np.float64)

        if self.kind == models.BPR_B:
            item_codes = self.params['item_codes']
            return codes.inner_products(item_codes[items], self.params['user_codes'][user], item_codes.shape[1] * 8).astype(np.float64)

        raise ConfigurationError(f'Unknown model kind: {self.kind}')

    def save(self, path: str) -> None:
        fields = {
            'kind': np.int64(self.kind),
            'num_users': np.int64(self.num_users),
            'num_items': np.int64(self.num_items),
            'candidate_oriented': np.int64(self.candidate_oriented),
        }
        if self.label:
            fields['label'] = np.frombuffer(self.label.encode('utf-8'), dtype=np.uint8)

        fields.update(self.params)
        container.write(path, formats.RANKER, fields)

    @classmethod
    def load(cls, path: str) -> 'RankerModel':
        fields = container.read(path, formats.RANKER)
        header = {name: container.scalar(fields, name) for name in ('kind', 'num_users', 'num_items', 'candidate_oriented')}
        label = fields.pop('label', None)
        params = {name: value for name, value in fields.items() if name not in header}
        return cls(header['kind'], params, header['num_users'], header['num_items'], bool(header['candidate_oriented']), label=None if label is None else label.tobytes().decode('utf-8'))


def bpr_loss(positive_scores: np.ndarray, negative_scores: np.ndarray) -> float:
    """ -Σ ln σ(s_ui - s_uj). """
    return float(np.logaddexp(0, -(np.asarray(positive_scores) - np.asarray(negative_scores))).sum())


def hinge_loss(positive_scores: np.ndarray, negative_scores: np.ndarray, margin: float) -> float:
    """ Σ max(0, margin + s_uj - s_ui). """
    return float(np.maximum(0, margin + np.asarray(negative_scores) - np.asarray(positive_scores)).sum())


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0, -x))


def _regularize(loss: float, grads: dict, params: dict, lam: float) -> float:
    """ Adds λ‖row‖² for every touched embedding row, once per row. """
    for name in models.EMBEDDINGS:
        if name in grads:
            rows = params[name][grads[name].rows]
            loss += lam * float((rows ** 2).sum())
            grads[name].values[:] += 2 * lam * rows
    return loss


def bpr_mf_gradients(params: dict, batch: TripletBatch, lam: float) -> tuple:
    p_u = params['user_emb'][batch.users]
    q_i, q_j = params['item_emb'][batch.positives], params['item_emb'][batch.negatives]
    margins = np.einsum('bk,bk->b', p_u, q_i - q_j)

    loss = float(np.logaddexp(0, -margins).sum())
    slope = -_sigmoid(-margins)[:, None]

    grads = {
        'user_emb': accumulate(batch.users, slope * (q_i - q_j)),
        'item_emb': accumulate(np.concatenate((batch.positives, batch.negatives)), np.concatenate((slope * p_u, -slope * p_u))),
    }

    return _regularize(loss, grads, params, lam), grads


def cml_gradients(params: dict, batch: TripletBatch, margin: float, lam: float) -> tuple:
    p_u = params['user_emb'][batch.users]
    diff_i = p_u - params['item_emb'][batch.positives]
    diff_j = p_u - params['item_emb'][batch.negatives]
    dist_i = np.linalg.norm(diff_i, axis=1)
    dist_j = np.linalg.norm(diff_j, axis=1)

    # s = -d, so margin + s_uj - s_ui = margin + d_ui - d_uj
    violations = margin + dist_i - dist_j
    active = (violations > 0)[:, None].astype(np.float64)
    loss = float(np.maximum(violations, 0).sum())

    unit_i = np.divide(diff_i, dist_i[:, None], out=np.zeros_like(diff_i), where=dist_i[:, None] > 0)
    unit_j = np.divide(diff_j, dist_j[:, None], out=np.zeros_like(diff_j), where=dist_j[:, None] > 0)

    grads = {
        'user_emb': accumulate(batch.users, active * (unit_i - unit_j)),
        'item_emb': accumulate(np.concatenate((batch.positives, batch.negatives)), np.concatenate((-active * unit_i, active * unit_j))),
    }

    return _regularize(loss, grads, params, lam), grads


def neumf_forward(params: dict, users: np.ndarray, items: np.ndarray) -> tuple:
    """ Scores for (user, item) pairs plus the activations backprop needs. """
    gmf_u, gmf_i = params['user_emb'][users], params['item_emb'][items]
    hidden = [np.concatenate((params['user_mlp'][users], params['item_mlp'][items]), axis=1)]
    pre = []

    for layer in range(sum(1 for name in params if name.startswith('mlp_w'))):
        pre.append(hidden[-1] @ params[f'mlp_w{layer}'] + params[f'mlp_b{layer}'])
        hidden.append(np.maximum(pre[-1], 0))

    features = np.concatenate((gmf_u * gmf_i, hidden[-1]), axis=1)
    return features @ params['w'], (gmf_u, gmf_i, hidden, pre, features)


def neumf_backward(params: dict, cache: tuple, upstream: np.ndarray) -> dict:
    """ Gradients of Σ upstream·score for every parameter, embeddings as
    per-example rows (not yet accumulated). """
    gmf_u, gmf_i, hidden, pre, features = cache
    k = gmf_u.shape[1]
    grads = {'w': features.T @ upstream}

    d_features = upstream[:, None] * params['w'][None, :]
    d_gmf, d_hidden = d_features[:, :k], d_features[:, k:]

    for layer in reversed(range(len(pre))):
        d_pre = d_hidden * (pre[layer] > 0)
        grads[f'mlp_w{layer}'] = hidden[layer].T @ d_pre
        grads[f'mlp_b{layer}'] = d_pre.sum(axis=0)
        d_hidden = d_pre @ params[f'mlp_w{layer}'].T

    mlp_k = params['user_mlp'].shape[1]
    grads['user_mlp'] = d_hidden[:, :mlp_k]
    grads['item_mlp'] = d_hidden[:, mlp_k:]
    grads['user_emb'] = d_gmf * gmf_i
    grads['item_emb'] = d_gmf * gmf_u

    return grads


def neumf_gradients(params: dict, batch: TripletBatch, lam: float) -> tuple:
    """ Pointwise cross-entropy: softplus(-s_ui) + softplus(s_uj). """
    positive, positive_cache = neumf_forward(params, batch.users, batch.positives)
    negative, negative_cache = neumf_forward(params, batch.users, batch.negatives)

    loss = float(np.logaddexp(0, -positive).sum() + np.logaddexp(0, negative).sum())
    positive_grads = neumf_backward(params, positive_cache, -_sigmoid(-positive))
    negative_grads = neumf_backward(params, negative_cache, _sigmoid(negative))

    users = np.concatenate((batch.users, batch.users))
    items = np.concatenate((batch.positives, batch.negatives))
    grads = {}

    for name in positive_grads:
        both = (positive_grads[name], negative_grads[name])

        if name in ('user_emb', 'user_mlp'):
            grads[name] = accumulate(users, np.concatenate(both))
        elif name in ('item_emb', 'item_mlp'):
            grads[name] = accumulate(items, np.concatenate(both))
        else:
            grads[name] = both[0] + both[1]

    return _regularize(loss, grads, params, lam), grads


def loss_and_gradients(kind: int, params: dict, batch: TripletBatch, config: RerankConfig) -> tuple:
    if kind == models.BPR_MF:
        return bpr_mf_gradients(params, batch, config.lam)
    if kind == models.CML:
        return cml_gradients(params, batch, config.margin, config.lam)
    if kind == models.NEUMF:
        return neumf_gradients(params, batch, config.lam)
    raise ConfigurationError(f'{names.MODELS.get(kind, kind)} is not trainable')


def project_unit_ball(matrix: np.ndarray, rows: np.ndarray = None) -> None:
    """ Rescales rows with norm above 1 back onto the unit sphere. """
    rows = np.arange(len(matrix)) if rows is None else rows
    norms = np.linalg.norm(matrix[rows], axis=1)
    outside = norms > 1
    matrix[rows[outside]] /= norms[outside][:, None]


def initialize(kind: int, num_users: int, num_items: int, config: RerankConfig, rng: np.random.Generator) -> dict:
    if kind in (models.BPR_MF, models.CML):
        params = {
            'user_emb': rng.normal(0, config.init_std, (num_users, config.k)),
            'item_emb': rng.normal(0, config.init_std, (num_items, config.k)),
        }
        if kind == models.CML:
            project_unit_ball(params['user_emb'])
            project_unit_ball(params['item_emb'])
        return params

    k = config.neumf_dim
    params = {
        'user_emb': rng.normal(0, config.init_std, (num_users, k)),
        'item_emb': rng.normal(0, config.init_std, (num_items, k)),
        'user_mlp': rng.normal(0, config.init_std, (num_users, k)),
        'item_mlp': rng.normal(0, config.init_std, (num_items, k)),
    }

    width = 2 * k

    for layer, out in enumerate(config.mlp_arch):
        params[f'mlp_w{layer}'] = rng.normal(0, math.sqrt(2 / width), (width, out))
        params[f'mlp_b{layer}'] = np.zeros(out)
        width = out

    params['w'] = rng.normal(0, math.sqrt(2 / (k + width)), k + width)
    return params


def popularity_model(dataset: InteractionDataset) -> RankerModel:
    """ POP, counted on the training split only. """
    return RankerModel(models.POP, {'popularity': dataset.popularity().astype(np.int64)}, dataset.num_users, dataset.num_items)


def quantize_to_bprb(model: RankerModel) -> RankerModel:
    """ BPR-B: sgn() of a BPR-MF model's embeddings, scored over codes. """
    if model.kind != models.BPR_MF:
        raise ConfigurationError(f'BPR-B quantizes BPR-MF models, got {model.name}')

    return code_model(codes.binarize(model.user_emb), codes.binarize(model.item_emb))


def code_model(user_codes: BinaryCodeMatrix, item_codes: BinaryCodeMatrix, label: str = None) -> RankerModel:
    """ Scores by code inner product, r - 2·Hamming distance. Wraps
    HashRec codes the same way as BPR-B. """
    return RankerModel(models.BPR_B, {
            'user_codes': user_codes.codes,
            'item_codes': item_codes.codes,
        }, user_codes.rows, item_codes.rows, label=label)


def rerank(model: RankerModel, user: int, candidates: CandidateList | np.ndarray, n: int, exclude: np.ndarray = None) -> np.ndarray:
    """ Top n candidates by model score, excluded items removed, ties by
    ascending item id. """
    items = np.unique(candidates.items if isinstance(candidates, CandidateList) else np.asarray(candidates, dtype=np.int64))

    if exclude is not None and len(exclude):
        items = items[~np.isin(items, exclude)]

    if not len(items):
        return items

    return metrics.top_n(model.scores(user, items), items, n)


def validation_ranks(model: RankerModel, dataset: InteractionDataset, candidates: CandidateSet = None, threads: int = 1) -> np.ndarray:
    """ Validation ranks over all items, or over each user's candidates
    for models trained with them. """
    users = np.flatnonzero(dataset.valid >= 0)

    def rank_user(user: int) -> int:
        target = dataset.valid[user]
        train = dataset.train_items(user)

        if candidates is None:
            return metrics.full_rank(model.scores(user), target, train)

        items = candidates.for_user(user)
        items = items[~np.isin(items, train)]
        return metrics.candidate_rank(model.scores(user, items), items, target)

    return metrics.collect_ranks(rank_user, users, threads)


def train_ranker(dataset: InteractionDataset, config: RerankConfig = None, candidates: CandidateSet = None) -> RankerModel:
    """ Trains a ranker with early stopping on validation HR. Passing
    candidates trains the candidate-oriented variant. """
    config = (config or RerankConfig()).validate()

    if config.kind == models.POP:
        return popularity_model(dataset)

    if config.kind not in models.TRAINABLE:
        raise ConfigurationError(f'{names.MODELS[config.kind]} is not trained directly')

    if dataset.num_train == 0:
        raise EmptyDatasetError('Cannot train on a dataset without training interactions')

    init_seed, sample_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = initialize(config.kind, dataset.num_users, dataset.num_items, config, np.random.default_rng(init_seed))
    model = RankerModel(config.kind, params, dataset.num_users, dataset.num_items, candidate_oriented=candidates is not None)
    optimizer = Adam(params, config.learning_rate)
    iters = config.iters_per_epoch or math.ceil(dataset.num_train / config.batch_size)
    can_validate = bool(np.any(dataset.valid >= 0))

    best_hr, best_epoch = -1.0, 0
    best = copy.deepcopy(params)

    log.info('Training %s for up to %d epochs of %d iterations', model.name, config.num_epochs, iters)

    with Sampler(dataset, config.batch_size, sample_seed, config.h, candidates, config.queue_size, threaded=config.threads > 0) as sampler:
        for epoch in progress(range(1, config.num_epochs + 1), log, desc=model.name):
            total, count = 0.0, 0

            for _ in range(iters):
                batch = sampler.next_batch()
                loss, grads = loss_and_gradients(config.kind, params, batch, config)

                if not math.isfinite(loss):
                    raise NumericError('Loss is not finite', epoch)

                optimizer.step(grads)

                if config.kind == models.CML:
                    project_unit_ball(params['user_emb'], grads['user_emb'].rows)
                    project_unit_ball(params['item_emb'], grads['item_emb'].rows)

                total += loss
                count += batch.size

            if not all(np.all(np.isfinite(value)) for value in params.values()):
                raise NumericError('Non-finite parameters', epoch)

            if can_validate and (epoch % config.eval_every == 0 or epoch == config.num_epochs):
                hr = metrics.hit_rate(validation_ranks(model, dataset, candidates, config.threads), config.eval_n)
                log.info('Epoch %d: loss=%.4f valid HR@%d=%.4f', epoch, total / count, config.eval_n, hr)

                if hr > best_hr:
                    best_hr, best_epoch = hr, epoch
                    best = copy.deepcopy(params)

                if epoch - best_epoch >= config.patience:
                    log.info('Early stop at epoch %d, best validation HR@%d %.4f at epoch %d', epoch, config.eval_n, best_hr, best_epoch)
                    break
            else:
                log.debug('Epoch %d: loss=%.4f', epoch, total / count)

        model.telemetry = sampler.telemetry()

    if can_validate and best_hr >= 0:
        model.params = best

    if candidates is not None:
        log.info('Candidate negatives: %.3f of %d sampled, %d fallbacks', sampler.candidate_fraction, sampler.sampled, sampler.fallbacks)

    return model
