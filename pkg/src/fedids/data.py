"""Flow-record ingestion, splitting, and synthetic data generation.

CSV input follows the CIC-FlowMeter layout: an 80-column header from
which four metadata columns plus the label are excluded, leaving the 75
numeric features the models train on. Header spelling differences
between dataset exports are resolved through one alias table.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import CapacityError, ConfigError, EmptyInputError, SchemaError
from .seeding import child_rng

log = logging.getLogger(__name__)

# Canonical (2018-style) CIC-FlowMeter column names, in file order.
CIC_COLUMNS = (
    "Dst Port", "Protocol", "Timestamp", "Flow Duration",
    "Tot Fwd Pkts", "Tot Bwd Pkts", "TotLen Fwd Pkts", "TotLen Bwd Pkts",
    "Fwd Pkt Len Max", "Fwd Pkt Len Min", "Fwd Pkt Len Mean", "Fwd Pkt Len Std",
    "Bwd Pkt Len Max", "Bwd Pkt Len Min", "Bwd Pkt Len Mean", "Bwd Pkt Len Std",
    "Flow Byts/s", "Flow Pkts/s",
    "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max", "Flow IAT Min",
    "Fwd IAT Tot", "Fwd IAT Mean", "Fwd IAT Std", "Fwd IAT Max", "Fwd IAT Min",
    "Bwd IAT Tot", "Bwd IAT Mean", "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min",
    "Fwd PSH Flags", "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags",
    "Fwd Header Len", "Bwd Header Len", "Fwd Pkts/s", "Bwd Pkts/s",
    "Pkt Len Min", "Pkt Len Max", "Pkt Len Mean", "Pkt Len Std", "Pkt Len Var",
    "FIN Flag Cnt", "SYN Flag Cnt", "RST Flag Cnt", "PSH Flag Cnt",
    "ACK Flag Cnt", "URG Flag Cnt", "CWE Flag Count", "ECE Flag Cnt",
    "Down/Up Ratio", "Pkt Size Avg", "Fwd Seg Size Avg", "Bwd Seg Size Avg",
    "Fwd Byts/b Avg", "Fwd Pkts/b Avg", "Fwd Blk Rate Avg",
    "Bwd Byts/b Avg", "Bwd Pkts/b Avg", "Bwd Blk Rate Avg",
    "Subflow Fwd Pkts", "Subflow Fwd Byts", "Subflow Bwd Pkts", "Subflow Bwd Byts",
    "Init Fwd Win Byts", "Init Bwd Win Byts", "Fwd Act Data Pkts", "Fwd Seg Size Min",
    "Active Mean", "Active Std", "Active Max", "Active Min",
    "Idle Mean", "Idle Std", "Idle Max", "Idle Min",
    "Label",
)

CIC_DROPPED = ("Dst Port", "Timestamp", "Flow Byts/s", "Flow Pkts/s", "Label")

# 2017-style (long-name) header spellings mapped onto the canonical names.
# Lookups happen after whitespace normalization, case-insensitively.
HEADER_ALIASES = {
    "Destination Port": "Dst Port",
    "Total Fwd Packets": "Tot Fwd Pkts",
    "Total Backward Packets": "Tot Bwd Pkts",
    "Total Length of Fwd Packets": "TotLen Fwd Pkts",
    "Total Length of Bwd Packets": "TotLen Bwd Pkts",
    "Fwd Packet Length Max": "Fwd Pkt Len Max",
    "Fwd Packet Length Min": "Fwd Pkt Len Min",
    "Fwd Packet Length Mean": "Fwd Pkt Len Mean",
    "Fwd Packet Length Std": "Fwd Pkt Len Std",
    "Bwd Packet Length Max": "Bwd Pkt Len Max",
    "Bwd Packet Length Min": "Bwd Pkt Len Min",
    "Bwd Packet Length Mean": "Bwd Pkt Len Mean",
    "Bwd Packet Length Std": "Bwd Pkt Len Std",
    "Flow Bytes/s": "Flow Byts/s",
    "Flow Packets/s": "Flow Pkts/s",
    "Fwd IAT Total": "Fwd IAT Tot",
    "Bwd IAT Total": "Bwd IAT Tot",
    "Fwd Header Length": "Fwd Header Len",
    "Bwd Header Length": "Bwd Header Len",
    "Min Packet Length": "Pkt Len Min",
    "Max Packet Length": "Pkt Len Max",
    "Packet Length Mean": "Pkt Len Mean",
    "Packet Length Std": "Pkt Len Std",
    "Packet Length Variance": "Pkt Len Var",
    "FIN Flag Count": "FIN Flag Cnt",
    "SYN Flag Count": "SYN Flag Cnt",
    "RST Flag Count": "RST Flag Cnt",
    "PSH Flag Count": "PSH Flag Cnt",
    "ACK Flag Count": "ACK Flag Cnt",
    "URG Flag Count": "URG Flag Cnt",
    "ECE Flag Count": "ECE Flag Cnt",
    "Average Packet Size": "Pkt Size Avg",
    "Avg Fwd Segment Size": "Fwd Seg Size Avg",
    "Avg Bwd Segment Size": "Bwd Seg Size Avg",
    "Fwd Avg Bytes/Bulk": "Fwd Byts/b Avg",
    "Fwd Avg Packets/Bulk": "Fwd Pkts/b Avg",
    "Fwd Avg Bulk Rate": "Fwd Blk Rate Avg",
    "Bwd Avg Bytes/Bulk": "Bwd Byts/b Avg",
    "Bwd Avg Packets/Bulk": "Bwd Pkts/b Avg",
    "Bwd Avg Bulk Rate": "Bwd Blk Rate Avg",
    "Subflow Fwd Packets": "Subflow Fwd Pkts",
    "Subflow Fwd Bytes": "Subflow Fwd Byts",
    "Subflow Bwd Packets": "Subflow Bwd Pkts",
    "Subflow Bwd Bytes": "Subflow Bwd Byts",
    "Init_Win_bytes_forward": "Init Fwd Win Byts",
    "Init_Win_bytes_backward": "Init Bwd Win Byts",
    "act_data_pkt_fwd": "Fwd Act Data Pkts",
    "min_seg_size_forward": "Fwd Seg Size Min",
}


def normalize_header(name: str) -> str:
    """Canonicalize one header cell: trim, collapse spaces, apply aliases."""
    cleaned = " ".join(str(name).split())
    lowered = cleaned.lower()
    for known in CIC_COLUMNS:
        if lowered == known.lower():
            return known
    for alias, canonical in HEADER_ALIASES.items():
        if lowered == alias.lower():
            return canonical
    return cleaned


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column layout plus which columns are excluded from training."""

    column_names: tuple[str, ...]
    dropped_columns: tuple[str, ...]
    label_column: str = "Label"

    def __post_init__(self) -> None:
        missing = [c for c in self.dropped_columns if c not in self.column_names]
        if missing:
            raise SchemaError(f"dropped columns not in schema: {missing}")

    @property
    def feature_names(self) -> tuple[str, ...]:
        dropped = set(self.dropped_columns)
        return tuple(c for c in self.column_names if c not in dropped)

    @property
    def feature_count(self) -> int:
        return len(self.column_names) - len(self.dropped_columns)


CIC_SCHEMA = FeatureSchema(CIC_COLUMNS, CIC_DROPPED)


def synthetic_schema(n_features: int = 75) -> FeatureSchema:
    names = tuple(f"f{i:02d}" for i in range(n_features)) + ("Label",)
    return FeatureSchema(names, ("Label",))


@dataclass
class FlowDataset:
    """Numeric feature matrix plus optional binary labels.

    labels is None for unlabeled (benign-only) sources; those rows are
    treated as benign during autoencoder training and never enter
    classifier phases.
    """

    features: np.ndarray
    labels: np.ndarray | None
    schema: FeatureSchema
    name: str = ""
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise SchemaError("features must be a 2-D matrix")
        if self.features.shape[1] != self.schema.feature_count:
            raise SchemaError(
                f"feature width {self.features.shape[1]} does not match schema "
                f"width {self.schema.feature_count}"
            )
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.features.shape[0],):
                raise SchemaError("labels length must match row count")
            if self.labels.size and not np.isin(self.labels, (0, 1)).all():
                raise SchemaError("labels must be 0 (benign) or 1 (attack)")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def take(self, indices: np.ndarray, name: str | None = None) -> "FlowDataset":
        indices = np.asarray(indices)
        return FlowDataset(
            self.features[indices],
            self.labels[indices] if self.labels is not None else None,
            self.schema,
            name if name is not None else self.name,
        )

    @staticmethod
    def concat(parts: list["FlowDataset"], name: str = "") -> "FlowDataset":
        if not parts:
            raise EmptyInputError("cannot concatenate zero datasets")
        schema = parts[0].schema
        for p in parts[1:]:
            if p.schema.feature_count != schema.feature_count:
                raise SchemaError("cannot concatenate datasets of different widths")
        features = np.concatenate([p.features for p in parts], axis=0)
        if all(p.labeled for p in parts):
            labels = np.concatenate([p.labels for p in parts])
        else:
            labels = None
        return FlowDataset(features, labels, schema, name)


def map_label(raw) -> int:
    """Benign maps to 0; every attack label string maps to 1."""
    return 0 if str(raw).strip().lower() == "benign" else 1


def load_flow_csv(path, schema: FeatureSchema = CIC_SCHEMA, name: str = "") -> FlowDataset:
    """Load one flow CSV, select the schema's features, sanitize rows.

    Unknown columns are ignored. A missing label column yields an
    unlabeled dataset. Rows with values that fail numeric parsing or are
    non-finite are dropped and counted in ``dropped_rows``.
    """
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise EmptyInputError(f"empty file: {path}") from exc
    frame.columns = [normalize_header(c) for c in frame.columns]
    # Duplicate headers after normalization would make selection ambiguous.
    if len(set(frame.columns)) != len(frame.columns):
        raise SchemaError(f"duplicate columns after normalization in {path}")

    missing = [c for c in schema.feature_names if c not in frame.columns]
    if missing:
        raise SchemaError(f"missing required feature columns in {path}: {missing}")
    if frame.shape[0] == 0:
        raise EmptyInputError(f"no data rows in {path}")

    numeric = frame[list(schema.feature_names)].apply(pd.to_numeric, errors="coerce")
    finite = np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1)
    dropped = int((~finite).sum())
    if dropped:
        log.warning("%s: dropped %d rows with non-finite features", path, dropped)
    features = numeric.to_numpy(dtype=np.float64)[finite]
    if features.shape[0] == 0:
        raise EmptyInputError(f"all rows dropped while loading {path}")

    labels = None
    if schema.label_column in frame.columns:
        raw = frame[schema.label_column][finite]
        labels = np.fromiter((map_label(v) for v in raw), dtype=np.int64, count=len(raw))
    return FlowDataset(features, labels, schema, name or str(path), dropped_rows=dropped)


@dataclass(frozen=True)
class SplitSpec:
    """Row budget for the three disjoint partitions of one dataset."""

    ae_train_benign: int = 0
    clf_train_benign: int = 0
    clf_train_attack: int = 0
    test_benign: int = 0
    test_attack: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        for f in ("ae_train_benign", "clf_train_benign", "clf_train_attack",
                  "test_benign", "test_attack"):
            if getattr(self, f) < 0:
                raise ConfigError(f"{f} must be non-negative")


@dataclass
class Splits:
    ae_train: FlowDataset
    clf_train: FlowDataset | None
    test: FlowDataset | None


def split(dataset: FlowDataset, spec: SplitSpec) -> Splits:
    """Partition a dataset into disjoint AE-train / CLF-train / test sets.

    AE training draws benign rows only. Classifier counts act as the
    balancing mechanism: the majority class is down-sampled to whatever
    the spec asks for. Deterministic under spec.seed. Test rows taken
    from an unlabeled source are materialized with label 0.
    """
    rng = np.random.default_rng(spec.seed)
    if dataset.labeled:
        benign_pool = np.flatnonzero(dataset.labels == 0)
        attack_pool = np.flatnonzero(dataset.labels == 1)
    else:
        benign_pool = np.arange(dataset.n_rows)
        attack_pool = np.array([], dtype=np.intp)

    need_benign = spec.ae_train_benign + spec.clf_train_benign + spec.test_benign
    need_attack = spec.clf_train_attack + spec.test_attack
    if need_benign > benign_pool.size:
        raise CapacityError(
            f"{dataset.name or 'dataset'}: need {need_benign} benign rows, "
            f"have {benign_pool.size}"
        )
    if need_attack > attack_pool.size:
        raise CapacityError(
            f"{dataset.name or 'dataset'}: need {need_attack} attack rows, "
            f"have {attack_pool.size}"
        )

    benign_perm = rng.permutation(benign_pool)
    attack_perm = rng.permutation(attack_pool)
    b = iter(np.split(benign_perm, np.cumsum(
        [spec.ae_train_benign, spec.clf_train_benign, spec.test_benign])))
    ae_idx, clf_b_idx, test_b_idx = next(b), next(b), next(b)
    a = iter(np.split(attack_perm, np.cumsum([spec.clf_train_attack, spec.test_attack])))
    clf_a_idx, test_a_idx = next(a), next(a)

    ae_train = dataset.take(ae_idx, name=f"{dataset.name}/ae")

    clf_train = None
    if spec.clf_train_benign + spec.clf_train_attack > 0:
        if not dataset.labeled:
            raise CapacityError(
                f"{dataset.name or 'dataset'}: classifier rows requested from an "
                "unlabeled source"
            )
        clf_train = dataset.take(
            np.concatenate([clf_b_idx, clf_a_idx]), name=f"{dataset.name}/clf"
        )

    test = None
    if spec.test_benign + spec.test_attack > 0:
        test_idx = np.concatenate([test_b_idx, test_a_idx])
        test = dataset.take(test_idx, name=f"{dataset.name}/test")
        if test.labels is None:
            # Benign-only source used for evaluation: assume benign.
            test.labels = np.zeros(test.n_rows, dtype=np.int64)
    return Splits(ae_train, clf_train, test)


@dataclass(frozen=True)
class SynthSpec:
    """Generative recipe for one client's flow distribution.

    Benign rows come from a Gaussian mixture around ``center``; attack
    rows reuse the mixture but shift every feature by ``attack_offset``
    times a client-specific random sign pattern and widen the noise by
    ``attack_scale``. A scalar center means a constant vector, so two
    specs whose centers differ by c produce feature means that differ
    by c in every column.
    """

    name: str
    n_benign: int
    n_attack: int = 0
    center: float | tuple = 0.0
    scale: float | tuple = 1.0
    cov: tuple | None = None  # full covariance, overrides scale
    n_clusters: int = 1
    cluster_spread: float = 0.0
    attack_offset: float | tuple = 0.0
    attack_scale: float = 1.0
    labeled: bool = True
    n_features: int = 75

    def __post_init__(self) -> None:
        if self.n_benign < 0 or self.n_attack < 0:
            raise ConfigError("row counts must be non-negative")
        if self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")
        if self.attack_scale <= 0:
            raise ConfigError("attack_scale must be positive")
        if not self.labeled and self.n_attack > 0:
            raise ConfigError(f"{self.name}: unlabeled spec cannot have attack rows")
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")


def _as_vector(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{name} must be a scalar or a length-{n} vector")
    return arr


def _cluster_counts(total: int, k: int) -> list[int]:
    base, extra = divmod(total, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def _draw(rng, mean, chol, scale, n, widen=1.0):
    noise = rng.standard_normal((n, mean.size))
    if chol is not None:
        return mean + (noise @ chol.T) * widen
    return mean + noise * (scale * widen)


def synth_generate(specs: list[SynthSpec], seed: int) -> list[FlowDataset]:
    """Generate one dataset per spec; independent streams per spec name."""
    if not specs:
        raise EmptyInputError("need at least one synthetic spec")
    datasets = []
    for spec in specs:
        d = spec.n_features
        rng = child_rng(seed, "synth", spec.name)
        center = _as_vector(spec.center, d, "center")
        scale = _as_vector(spec.scale, d, "scale")
        if np.any(scale <= 0):
            raise ConfigError("scale entries must be positive")
        chol = None
        if spec.cov is not None:
            cov = np.asarray(spec.cov, dtype=np.float64)
            if cov.shape != (d, d):
                raise ConfigError(f"cov must be {d}x{d}")
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise ConfigError(f"{spec.name}: covariance not positive definite") from exc

        # Fixed per-client directions: cluster placement and attack shift.
        cluster_dirs = rng.choice((-1.0, 1.0), size=(spec.n_clusters, d))
        cluster_dirs[0] = 0.0  # first cluster sits at the center itself
        attack_dir = rng.choice((-1.0, 1.0), size=d)
        attack_offset = _as_vector(spec.attack_offset, d, "attack_offset")

        benign_parts = []
        for k, count in enumerate(_cluster_counts(spec.n_benign, spec.n_clusters)):
            mean = center + spec.cluster_spread * cluster_dirs[k]
            benign_parts.append(_draw(rng, mean, chol, scale, count))
        attack_parts = []
        for k, count in enumerate(_cluster_counts(spec.n_attack, spec.n_clusters)):
            mean = center + spec.cluster_spread * cluster_dirs[k] + attack_offset * attack_dir
            attack_parts.append(_draw(rng, mean, chol, scale, count, widen=spec.attack_scale))

        features = np.concatenate(benign_parts + attack_parts, axis=0)
        labels = None
        if spec.labeled:
            labels = np.concatenate(
                [np.zeros(spec.n_benign, dtype=np.int64),
                 np.ones(spec.n_attack, dtype=np.int64)]
            )
        datasets.append(
            FlowDataset(features, labels, synthetic_schema(d), name=spec.name)
        )
    return datasets
