"""Parameter-fusion strategies for federated rounds.

Three interchangeable local-training policies:

* FedAvgMultiEpoch: each round trains one or more full epochs over all
  local rows, then averages. Big clients dominate the weighted average
  and clients of different sizes drift apart in wall-clock epochs.
* FedMMB: each round trains a fixed count of mini-batches taken in
  order from a shuffled epoch; reshuffle when the epoch is exhausted.
  Per-round contributions are equal-ish but clients with less data
  complete epochs faster.
* FedSam: each round trains one pass over a fresh fixed-size random
  sample, so every client contributes exactly the same number of rows
  per round regardless of dataset size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .data import FlowDataset
from .errors import ConfigError, EmptyInputError, ShapeError
from .nn import DenseNet, OptimizerState, ParamVector, train_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FedAvgMultiEpoch:
    epochs: int = 1
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class FedMMB:
    batch_count: int
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.batch_count < 1:
            raise ConfigError("batch_count must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass(frozen=True)
class FedSam:
    sample_size: int
    batch_size: int = 32

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.sample_size < self.batch_size:
            raise ConfigError("sample_size must be >= batch_size")


FusionStrategy = Union[FedAvgMultiEpoch, FedMMB, FedSam]


def fed_avg(
    updates: Union[Sequence[ParamVector], Mapping[str, ParamVector]]
) -> ParamVector:
    """Example-count weighted average of parameter vectors.

    A mapping is summed in ascending key order, so the result is
    bit-identical no matter how the mapping was populated. A single
    update is returned as-is (identity).
    """
    if isinstance(updates, Mapping):
        ordered = [updates[k] for k in sorted(updates)]
    else:
        ordered = list(updates)
    if not ordered:
        raise EmptyInputError("fed_avg needs at least one update")
    length = ordered[0].values.size
    for u in ordered:
        if u.values.size != length:
            raise ShapeError("updates have mismatched parameter counts")
        if u.count <= 0:
            raise ShapeError("every update needs a positive example count")
    if len(ordered) == 1:
        u = ordered[0]
        return ParamVector(u.values.copy(), u.count)
    total = sum(u.count for u in ordered)
    acc = np.zeros(length)
    for u in ordered:
        acc += u.count * u.values
    return ParamVector(acc / total, total)


@dataclass
class ClientCursor:
    """FedMMB bookkeeping: position inside the current shuffled epoch."""

    order: np.ndarray
    next_batch: int
    epoch_count: int
    rng: np.random.Generator

    @classmethod
    def fresh(cls, n_rows: int, rng: np.random.Generator) -> "ClientCursor":
        if n_rows < 1:
            raise EmptyInputError("cursor needs a non-empty dataset")
        return cls(rng.permutation(n_rows), 0, 0, rng)

    def _total_batches(self, batch_size: int) -> int:
        return -(-self.order.size // batch_size)  # ceil div

    def _reshuffle(self) -> None:
        self.order = self.rng.permutation(self.order.size)
        self.next_batch = 0
        self.epoch_count += 1


def fedmmb_select(
    cursor: ClientCursor,
    dataset: FlowDataset,
    batch_size: int,
    batch_count: int,
) -> tuple[list[np.ndarray], ClientCursor]:
    """Next batch_count index batches in epoch order; mutates the cursor.

    If the epoch runs out mid-selection the remaining batches finish it,
    the rows reshuffle (epoch_count increments), and selection continues
    in the new epoch. Reshuffling is eager: consuming the final batch of
    an epoch immediately starts the next one.
    """
    if dataset.n_rows == 0:
        raise EmptyInputError("fedmmb_select on an empty dataset")
    if dataset.n_rows != cursor.order.size:
        raise ShapeError("cursor does not belong to this dataset")
    batches = []
    for _ in range(batch_count):
        start = cursor.next_batch * batch_size
        batches.append(cursor.order[start : start + batch_size])
        cursor.next_batch += 1
        if cursor.next_batch >= cursor._total_batches(batch_size):
            cursor._reshuffle()
    return batches, cursor


def fedsam_sample(
    dataset: FlowDataset, sample_size: int, rng: np.random.Generator
) -> FlowDataset:
    """Uniform random subset of exactly sample_size rows.

    Without replacement when the dataset is large enough; otherwise with
    replacement (logged), so small clients can still match the quota.
    Each call draws independently.
    """
    if dataset.n_rows == 0:
        raise EmptyInputError("fedsam_sample on an empty dataset")
    if sample_size < 1:
        raise ConfigError("sample_size must be >= 1")
    if dataset.n_rows >= sample_size:
        idx = rng.choice(dataset.n_rows, size=sample_size, replace=False)
    else:
        log.warning(
            "%s: sampling %d rows with replacement from %d",
            dataset.name, sample_size, dataset.n_rows,
        )
        idx = rng.choice(dataset.n_rows, size=sample_size, replace=True)
    return dataset.take(idx)


def _train_indices(
    net: DenseNet,
    features: np.ndarray,
    labels,
    batches: Sequence[np.ndarray],
    optimizer: OptimizerState,
) -> None:
    for idx in batches:
        x = features[idx]
        t = labels[idx] if net.output_activation == "softmax" else x
        train_batch(net, (x, t), optimizer)


def client_round(
    net: DenseNet,
    strategy: FusionStrategy,
    dataset: FlowDataset,
    optimizer: OptimizerState,
    *,
    rng: np.random.Generator,
    cursor: ClientCursor | None = None,
) -> ParamVector:
    """Run one round of local training and return the flattened result.

    The net is trained in place (it starts from freshly set global
    parameters). The returned count is the number of training rows
    consumed this round, which is what fed_avg weights by. Autoencoder
    targets are the inputs themselves; softmax nets train on labels.
    """
    if dataset.n_rows == 0:
        raise EmptyInputError("client_round on an empty dataset")
    features = dataset.features
    labels = dataset.labels
    if net.output_activation == "softmax" and labels is None:
        raise ConfigError("classifier round requires a labeled dataset")

    if isinstance(strategy, FedAvgMultiEpoch):
        n = dataset.n_rows
        for _ in range(strategy.epochs):
            perm = rng.permutation(n)
            batches = [
                perm[i : i + strategy.batch_size]
                for i in range(0, n, strategy.batch_size)
            ]
            _train_indices(net, features, labels, batches, optimizer)
        used = n * strategy.epochs
    elif isinstance(strategy, FedMMB):
        if cursor is None:
            raise ConfigError("FedMMB needs a persistent ClientCursor")
        batches, _ = fedmmb_select(
            cursor, dataset, strategy.batch_size, strategy.batch_count
        )
        _train_indices(net, features, labels, batches, optimizer)
        used = int(sum(b.size for b in batches))
    elif isinstance(strategy, FedSam):
        subset = fedsam_sample(dataset, strategy.sample_size, rng)
        batches = [
            np.arange(i, min(i + strategy.batch_size, subset.n_rows))
            for i in range(0, subset.n_rows, strategy.batch_size)
        ]
        _train_indices(net, subset.features, subset.labels, batches, optimizer)
        used = strategy.sample_size
    else:
        raise ConfigError(f"unknown fusion strategy: {strategy!r}")

    return ParamVector(net.get_params(), count=used)
