"""
    This file is part of cigar.


    Adam with sparse (lazy) row semantics for embedding tables. A sparse
    gradient names the unique rows a batch touched; only those rows have
    their moments and values updated, while the bias-correction step count
    is shared by the whole parameter. Dense parameters (MLP weights) go
    through the same update with every row touched.

"""

from typing import NamedTuple

import numpy as np

from cigar.const import models


class SparseGradient(NamedTuple):
    rows: np.ndarray
    values: np.ndarray

    def dense(self, shape: tuple) -> np.ndarray:
        """ Scatters the rows into a zero matrix of the given shape. """
        grad = np.zeros(shape)
        np.add.at(grad, self.rows, self.values)
        return grad


class Moments:
    """ First and second moment estimates for one parameter. """
    def __init__(self, shape: tuple) -> None:
        self.first = np.zeros(shape)
        self.second = np.zeros(shape)


def accumulate(rows: np.ndarray, values: np.ndarray) -> SparseGradient:
    """ Sums per-example row gradients into one entry per unique row. """
    unique, inverse = np.unique(rows, return_inverse=True)
    summed = np.zeros((len(unique),) + values.shape[1:])
    np.add.at(summed, inverse, values)
    return SparseGradient(unique, summed)


def adam_update(params: np.ndarray, grads: np.ndarray | SparseGradient, moments: Moments, step: int, lr: float) -> tuple:
    """ One Adam step in place. step is 1-based. Returns the parameters
    and moments for convenience. """
    beta1, beta2, epsilon = models.ADAM_BETA1, models.ADAM_BETA2, models.ADAM_EPSILON
    correction1 = 1 - beta1 ** step
    correction2 = 1 - beta2 ** step

    if isinstance(grads, SparseGradient):
        rows, values = grads.rows, grads.values
        first = beta1 * moments.first[rows] + (1 - beta1) * values
        second = beta2 * moments.second[rows] + (1 - beta2) * values * values
        moments.first[rows] = first
        moments.second[rows] = second
        params[rows] -= lr * (first / correction1) / (np.sqrt(second / correction2) + epsilon)
    else:
        moments.first *= beta1
        moments.first += (1 - beta1) * grads
        moments.second *= beta2
        moments.second += (1 - beta2) * grads * grads
        params -= lr * (moments.first / correction1) / (np.sqrt(moments.second / correction2) + epsilon)

    return params, moments


class Adam:
    """ Adam over a dict of named parameter arrays, updated in place. """
    def __init__(self, params: dict, lr: float) -> None:
        self.params = params
        self.lr = lr
        self.step_count = 0
        self.moments = {name: Moments(value.shape) for name, value in params.items()}

    def step(self, grads: dict) -> None:
        self.step_count += 1

        for name, grad in grads.items():
            adam_update(self.params[name], grad, self.moments[name], self.step_count, self.lr)
