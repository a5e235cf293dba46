"""
    This file is part of cigar.


    HashRec learns r-bit codes for users and items so that a user's code
    lies closer, in Hamming distance, to the codes of items they prefer.

    Each user u and item i has an auxiliary real vector (b̃_u, d̃_i). The
    code is its sign; during training the sign is relaxed to tanh(β·x)
    and β is annealed per epoch (β = sqrt(10·(epoch - 1)), floored so the
    first epoch still has a gradient). The objective is a BPR loss on the
    relaxed inner products, with a sigmoid scaled by α (10/r by default)
    to suit scores that range over [-r, r]:

        L = -Σ ln σ_α(<t_u, t_i> - <t_u, t_j>) + λ·Σ‖x‖² (touched rows)

    where t = tanh(β·x). Gradients are computed analytically and applied
    with sparse Adam. Training evaluates validation HR@200 by Hamming
    linear scan every few epochs and stops once it stops improving,
    keeping the best embeddings seen.

"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from cigar.classes import container
from cigar.classes.errors import ConfigurationError, EmptyDatasetError, NumericError
from cigar.classes.progress import progress
from cigar.const import data, formats
from cigar.setup import settings
from cigar.tools import codes, metrics
from cigar.tools.codes import BinaryCodeMatrix
from cigar.tools.dataset import InteractionDataset
from cigar.tools.optimize import Adam, accumulate
from cigar.tools.sample import Sampler, TripletBatch


log = logging.getLogger(__name__)


@dataclass
class HashRecConfig:
    r: int = field(default_factory=lambda: settings.code_bits)
    lam: float = field(default_factory=lambda: settings.hashrec_lambda)
    alpha: float = field(default_factory=lambda: settings.hashrec_alpha)
    num_epochs: int = field(default_factory=lambda: settings.num_epochs)
    iters_per_epoch: int = field(default_factory=lambda: settings.iters_per_epoch)
    batch_size: int = field(default_factory=lambda: settings.batch_size)
    learning_rate: float = field(default_factory=lambda: settings.learning_rate)
    seed: int = field(default_factory=lambda: settings.seed)
    beta_floor: float = field(default_factory=lambda: settings.beta_floor)
    beta_schedule: Callable[[int], float] = None
    init_scale: float = field(default_factory=lambda: settings.init_scale)
    eval_every: int = field(default_factory=lambda: settings.eval_every)
    patience: int = field(default_factory=lambda: settings.patience)
    eval_n: int = field(default_factory=lambda: settings.hashrec_eval_n)
    queue_size: int = field(default_factory=lambda: settings.sampler_queue_size)
    threads: int = field(default_factory=lambda: settings.threads)

    def __post_init__(self) -> None:
        # Unset alpha follows the code length actually trained
        if self.alpha is None and self.r > 0:
            self.alpha = 10 / self.r

    def validate(self) -> 'HashRecConfig':
        if self.r <= 0 or self.r % 8:
            raise ConfigurationError(f'Code length must be a positive multiple of 8, got {self.r}')
        if self.alpha <= 0:
            raise ConfigurationError(f'alpha must be positive, got {self.alpha}')
        if self.lam < 0:
            raise ConfigurationError(f'lambda must not be negative, got {self.lam}')
        if self.batch_size < 1 or self.num_epochs < 0:
            raise ConfigurationError('Batch size must be positive and epochs non-negative')
        return self

    def beta(self, epoch: int) -> float:
        """ β for a 1-based epoch. """
        if self.beta_schedule is not None:
            return max(self.beta_schedule(epoch), self.beta_floor)
        return max(math.sqrt(10 * (epoch - 1)), self.beta_floor)


class HashRecModel:
    """ Trained auxiliary embeddings plus the codes derived from them. """
    def __init__(self, user_emb: np.ndarray, item_emb: np.ndarray, curve: list = None, epochs: int = 0) -> None:
        self.user_emb = user_emb
        self.item_emb = item_emb
        self.curve = curve or []
        self.epochs = epochs

    @property
    def r(self) -> int:
        return self.user_emb.shape[1]

    @property
    def user_codes(self) -> BinaryCodeMatrix:
        return codes.binarize(self.user_emb)

    @property
    def item_codes(self) -> BinaryCodeMatrix:
        return codes.binarize(self.item_emb)

    def curve_frame(self) -> pd.DataFrame:
        """ Per-epoch training diagnostics. """
        return pd.DataFrame(self.curve, columns=['epoch', 'beta', 'loss', 'desired_loss', 'quantization_error', 'valid_hr'])

    def save(self, path: str) -> None:
        container.write(path, formats.HASHREC, {
            'r': np.int64(self.r),
            'num_users': np.int64(self.user_emb.shape[0]),
            'num_items': np.int64(self.item_emb.shape[0]),
            'epochs': np.int64(self.epochs),
            'user_codes': self.user_codes.codes,
            'item_codes': self.item_codes.codes,
            'user_emb': self.user_emb,
            'item_emb': self.item_emb,
        })

    @classmethod
    def load(cls, path: str) -> 'HashRecModel':
        fields = container.read(path, formats.HASHREC)
        return cls(fields['user_emb'], fields['item_emb'], epochs=container.scalar(fields, 'epochs'))

    @staticmethod
    def load_codes(path: str) -> tuple:
        """ Just the packed user and item codes. """
        fields = container.read(path, formats.HASHREC)
        r = container.scalar(fields, 'r')
        return BinaryCodeMatrix(fields['user_codes'], r), BinaryCodeMatrix(fields['item_codes'], r)


def _check_finite(*arrays: np.ndarray) -> None:
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NumericError('Non-finite embedding entry')


def _margins(batch: TripletBatch, user_act: np.ndarray, item_act: np.ndarray) -> np.ndarray:
    """ <a_u, a_i> - <a_u, a_j> per triplet. """
    users, positives, negatives = user_act[batch.users], item_act[batch.positives], item_act[batch.negatives]
    return np.einsum('bk,bk->b', users, positives - negatives)


def surrogate_loss(batch: TripletBatch, user_emb: np.ndarray, item_emb: np.ndarray, alpha: float, beta: float, lam: float) -> tuple:
    """ Relaxed HashRec loss over a batch and its analytic gradients, as
    (loss, (user_gradient, item_gradient)) with sparse row gradients. """
    if beta <= 0:
        raise ConfigurationError(f'beta must be positive, got {beta}')

    u_rows, i_rows, j_rows = user_emb[batch.users], item_emb[batch.positives], item_emb[batch.negatives]
    _check_finite(u_rows, i_rows, j_rows)

    a_u, a_i, a_j = np.tanh(beta * u_rows), np.tanh(beta * i_rows), np.tanh(beta * j_rows)
    margins = np.einsum('bk,bk->b', a_u, a_i - a_j)

    # -ln σ(αx) = softplus(-αx); its derivative is -α·σ(-αx)
    loss = float(np.logaddexp(0, -alpha * margins).sum())
    slope = -alpha * np.exp(-np.logaddexp(0, alpha * margins))[:, None]

    grad_u = slope * (a_i - a_j) * beta * (1 - a_u ** 2)
    grad_i = slope * a_u * beta * (1 - a_i ** 2)
    grad_j = -slope * a_u * beta * (1 - a_j ** 2)

    user_grad = accumulate(batch.users, grad_u)
    item_grad = accumulate(np.concatenate((batch.positives, batch.negatives)), np.concatenate((grad_i, grad_j)))

    # ℓ2 on each touched row once
    user_rows, item_rows = user_emb[user_grad.rows], item_emb[item_grad.rows]
    loss += lam * float((user_rows ** 2).sum() + (item_rows ** 2).sum())
    user_grad.values[:] += 2 * lam * user_rows
    item_grad.values[:] += 2 * lam * item_rows

    return loss, (user_grad, item_grad)


def desired_loss(batch: TripletBatch, user_emb: np.ndarray, item_emb: np.ndarray, alpha: float) -> float:
    """ The BPR loss on the actual codes, sgn(0) = +1. Diagnostic only. """
    margins = _margins(batch, codes.sgn(user_emb), codes.sgn(item_emb))
    return float(np.logaddexp(0, -alpha * margins).sum())


def quantization_error(embeddings: np.ndarray, beta: float) -> float:
    """ Mean squared distance between tanh(β·x) and sgn(x). """
    return float(np.mean((np.tanh(beta * embeddings) - codes.sgn(embeddings)) ** 2))


def validation_ranks(dataset: InteractionDataset, user_codes: BinaryCodeMatrix, item_codes: BinaryCodeMatrix, split: str = data.VALID, threads: int = 1) -> np.ndarray:
    """ Rank of every user's held-out item under a Hamming linear scan,
    training items excluded. """
    held_out = dataset.held_out(split)
    users = np.flatnonzero(held_out >= 0)

    def rank_user(user: int) -> int:
        scores = codes.inner_products(item_codes.codes, user_codes.row(user), item_codes.r)
        return metrics.full_rank(scores, held_out[user], dataset.train_items(user))

    return metrics.collect_ranks(rank_user, users, threads)


def train_hashrec(dataset: InteractionDataset, config: HashRecConfig = None, warm_start: HashRecModel = None) -> HashRecModel:
    """ Trains HashRec and returns the best model seen on validation. """
    config = (config or HashRecConfig()).validate()

    if dataset.num_train == 0:
        raise EmptyDatasetError('Cannot train on a dataset without training interactions')

    init_seed, sample_seed = np.random.SeedSequence(config.seed).spawn(2)

    if warm_start is not None:
        if warm_start.user_emb.shape != (dataset.num_users, config.r) or warm_start.item_emb.shape != (dataset.num_items, config.r):
            raise ConfigurationError('Warm-start embeddings do not match the dataset and code length')
        user_emb, item_emb = warm_start.user_emb.copy(), warm_start.item_emb.copy()
        first_epoch = warm_start.epochs + 1
        log.info('Warm start from epoch %d', warm_start.epochs)
    else:
        rng = np.random.default_rng(init_seed)
        scale = config.init_scale / config.r
        user_emb = rng.uniform(-scale, scale, (dataset.num_users, config.r))
        item_emb = rng.uniform(-scale, scale, (dataset.num_items, config.r))
        first_epoch = 1

    iters = config.iters_per_epoch or math.ceil(dataset.num_train / config.batch_size)
    optimizer = Adam({'user': user_emb, 'item': item_emb}, config.learning_rate)
    can_validate = bool(np.any(dataset.valid >= 0))

    curve = []
    best_hr, best_epoch = -1.0, first_epoch - 1
    best = (user_emb.copy(), item_emb.copy())
    epoch = first_epoch - 1

    with Sampler(dataset, config.batch_size, sample_seed, queue_size=config.queue_size, threaded=config.threads > 0) as sampler:
        for epoch in progress(range(first_epoch, first_epoch + config.num_epochs), log, desc='HashRec'):
            beta = config.beta(epoch)
            total, desired, count = 0.0, 0.0, 0

            for _ in range(iters):
                batch = sampler.next_batch()

                try:
                    loss, (user_grad, item_grad) = surrogate_loss(batch, user_emb, item_emb, config.alpha, beta, config.lam)
                except NumericError as e:
                    raise NumericError(str(e), epoch) from e

                if not math.isfinite(loss):
                    raise NumericError('Loss is not finite', epoch)

                desired += desired_loss(batch, user_emb, item_emb, config.alpha)
                optimizer.step({'user': user_grad, 'item': item_grad})
                total += loss
                count += batch.size

            quantization = quantization_error(np.concatenate((user_emb, item_emb)), beta)
            point = {
                'epoch': epoch,
                'beta': beta,
                'loss': total / count,
                'desired_loss': desired / count,
                'quantization_error': quantization,
                'valid_hr': None,
            }

            if can_validate and (epoch % config.eval_every == 0 or epoch == first_epoch + config.num_epochs - 1):
                ranks = validation_ranks(dataset, codes.binarize(user_emb), codes.binarize(item_emb), threads=config.threads)
                point['valid_hr'] = metrics.hit_rate(ranks, config.eval_n)

                if point['valid_hr'] > best_hr:
                    best_hr, best_epoch = point['valid_hr'], epoch
                    best = (user_emb.copy(), item_emb.copy())

            curve.append(point)
            log.info('Epoch %d: beta=%.3f loss=%.4f desired=%.4f quantization=%.4f valid HR@%d=%s', epoch, beta, point['loss'], point['desired_loss'], quantization, config.eval_n, point['valid_hr'])

            if point['valid_hr'] is not None and epoch - best_epoch >= config.patience:
                log.info('Early stop at epoch %d, best validation HR@%d %.4f at epoch %d', epoch, config.eval_n, best_hr, best_epoch)
                break

    if can_validate and best_hr >= 0:
        user_emb, item_emb = best
        epoch = best_epoch

    return HashRecModel(user_emb, item_emb, curve, epoch)
