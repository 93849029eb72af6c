"""Collaborative global min-max scaling.

A scaler object is initialized on the server (either with random bounds
per feature, which hides whose data produced the final extremes, or
with sentinel placeholders that any real value replaces), then passed
through every client exactly once in random order. Each client widens
the per-feature bounds where its local data falls outside them and
forwards the object. The final scaler is broadcast and used by all
clients to map features to the unit interval.

Bounds only ever widen: with random initialization a bound that already
dominates the data survives the whole pass, which is the price of the
anonymity property. ``count_retained_bounds`` measures that slack.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .data import FlowDataset
from .errors import ConfigError, EmptyInputError, ProtocolError, SchemaError

log = logging.getLogger(__name__)

INIT_MODES = ("sentinel", "random")


@dataclass
class MinMaxScaler:
    """Per-feature (min, max) bounds; sentinel placeholders are +/-inf."""

    mins: np.ndarray
    maxs: np.ndarray
    initialized_randomly: bool = False
    visit_log: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise SchemaError("mins and maxs must be equal-length vectors")
        finite = np.isfinite(self.mins) & np.isfinite(self.maxs)
        if np.any(self.mins[finite] > self.maxs[finite]):
            raise SchemaError("scaler invariant violated: min > max")

    @property
    def n_features(self) -> int:
        return self.mins.size

    def copy(self) -> "MinMaxScaler":
        return MinMaxScaler(
            self.mins.copy(), self.maxs.copy(),
            self.initialized_randomly, list(self.visit_log),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MinMaxScaler):
            return NotImplemented
        return (
            np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
            and self.initialized_randomly == other.initialized_randomly
        )


def init_scaler(
    n_features: int,
    mode: str = "sentinel",
    rng: np.random.Generator | None = None,
    low: float = -1.0,
    high: float = 1.0,
) -> MinMaxScaler:
    """Create the initial scaler object.

    sentinel: mins=+inf, maxs=-inf, so the first client value always
    replaces both bounds. random: draw two values per feature from
    U(low, high) and store them swapped so min <= max.
    """
    if n_features < 1:
        raise ConfigError("n_features must be >= 1")
    if mode == "sentinel":
        return MinMaxScaler(
            np.full(n_features, np.inf), np.full(n_features, -np.inf)
        )
    if mode == "random":
        if not (np.isfinite(low) and np.isfinite(high) and low < high):
            raise ConfigError(f"invalid random-init bounds: ({low}, {high})")
        if rng is None:
            raise ConfigError("random init requires an rng")
        draws = rng.uniform(low, high, size=(2, n_features))
        return MinMaxScaler(
            draws.min(axis=0), draws.max(axis=0), initialized_randomly=True
        )
    raise ConfigError(f"unknown scaler init mode: {mode!r}")


def _data_matrix(data) -> np.ndarray:
    if isinstance(data, FlowDataset):
        return data.features
    return np.asarray(data, dtype=np.float64)


def client_update(scaler: MinMaxScaler, local_data) -> MinMaxScaler:
    """Widen bounds to cover local data; values inside them change nothing."""
    rows = _data_matrix(local_data)
    out = scaler.copy()
    if rows.size == 0:
        return out
    if rows.ndim != 2 or rows.shape[1] != scaler.n_features:
        raise SchemaError(
            f"data width {rows.shape[-1] if rows.ndim else 0} does not match "
            f"scaler width {scaler.n_features}"
        )
    out.mins = np.minimum(out.mins, rows.min(axis=0))
    out.maxs = np.maximum(out.maxs, rows.max(axis=0))
    return out


def ring_orchestrate(
    clients: Mapping[str, FlowDataset],
    mode: str = "sentinel",
    rng: np.random.Generator | None = None,
    *,
    low: float = -1.0,
    high: float = 1.0,
    order: list[str] | None = None,
    update_fn: Callable[[str, MinMaxScaler], MinMaxScaler] | None = None,
    n_features: int | None = None,
    initial: MinMaxScaler | None = None,
) -> MinMaxScaler:
    """Pass the scaler through every client exactly once, in random order.

    ``order`` overrides the random visitation order (audits and tests).
    ``update_fn`` routes one visit; the default applies client_update to
    the client's dataset directly, a federation substitutes its
    transport here and must then pass n_features explicitly. A pre-built
    ``initial`` scaler overrides mode/low/high.
    """
    ids = sorted(clients)
    if not ids:
        raise EmptyInputError("ring needs at least one client")
    if update_fn is None:
        widths = {c.features.shape[1] for c in clients.values()}
        if len(widths) != 1:
            raise SchemaError("clients disagree on feature width")
        n_features = widths.pop()
        update_fn = lambda cid, s: client_update(s, clients[cid])
    elif n_features is None and initial is None:
        raise ConfigError("n_features is required with a custom update_fn")

    if initial is not None:
        scaler = initial.copy()
    else:
        scaler = init_scaler(int(n_features), mode, rng=rng, low=low, high=high)

    if order is None:
        if rng is None:
            rng = np.random.default_rng()
        order = [ids[i] for i in rng.permutation(len(ids))]
    else:
        if sorted(order) != ids:
            raise ProtocolError("order must visit each client exactly once")

    for cid in order:
        try:
            scaler = update_fn(cid, scaler)
        except Exception as exc:
            raise ProtocolError(f"scaler pass failed at client {cid!r}: {exc}") from exc
        scaler.visit_log.append(cid)
    return scaler


def scale(scaler: MinMaxScaler, x: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Map each feature to (x - min) / (max - min).

    Degenerate features (max == min) map to 0. Output is not clamped by
    default: values outside the training bounds keep their out-of-range
    signal unless clamp is set.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != scaler.n_features:
        raise SchemaError(
            f"input width {x.shape[-1] if x.ndim else 0} does not match scaler "
            f"width {scaler.n_features}"
        )
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    out = (x - scaler.mins) / safe
    out = np.where(span > 0, out, 0.0)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return out


def count_retained_bounds(initial: MinMaxScaler, final: MinMaxScaler) -> int:
    """Features whose min or max still equals the initial value (slack)."""
    if initial.n_features != final.n_features:
        raise SchemaError("scaler widths differ")
    retained = (initial.mins == final.mins) | (initial.maxs == final.maxs)
    return int(retained.sum())


SCALER_FILE_HEADER = "# fedids-scaler v1"


def save_scaler(scaler: MinMaxScaler, path, feature_names=None) -> None:
    """Write ordered per-feature (name, min, max) records.

    Floats are stored in hex so finite doubles round-trip bit-exactly;
    sentinel infinities serialize as inf/-inf.
    """
    names = feature_names or [f"f{i:02d}" for i in range(scaler.n_features)]
    if len(names) != scaler.n_features:
        raise SchemaError("feature_names length does not match scaler width")
    lines = [SCALER_FILE_HEADER, f"random_init: {int(scaler.initialized_randomly)}"]
    for name, lo, hi in zip(names, scaler.mins, scaler.maxs):
        lines.append(f"{name}\t{float(lo).hex()}\t{float(hi).hex()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scaler(path) -> tuple[MinMaxScaler, list[str]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != SCALER_FILE_HEADER:
        raise SchemaError(f"not a scaler file: {path}")
    if not lines[1].startswith("random_init: "):
        raise SchemaError(f"missing random_init flag in {path}")
    random_init = bool(int(lines[1].split(": ", 1)[1]))
    names, mins, maxs = [], [], []
    for ln in lines[2:]:
        if not ln:
            continue
        name, lo, hi = ln.split("\t")
        names.append(name)
        mins.append(float.fromhex(lo))
        maxs.append(float.fromhex(hi))
    return MinMaxScaler(np.array(mins), np.array(maxs), random_init), names
