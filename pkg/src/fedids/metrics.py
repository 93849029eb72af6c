"""Evaluation: confusion counts, per-class reports, the threshold
baseline detector, and loss-curve emission."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import FlowDataset
from .errors import ConfigError, EmptyInputError, ShapeError
from .nn import DenseNet
from .scaling import MinMaxScaler, scale


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary counts with attack (1) as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def benign_row(self) -> tuple[int, int]:
        """(benign classified benign, benign classified attack)."""
        return (self.tn, self.fp)

    @property
    def attack_row(self) -> tuple[int, int]:
        """(attack classified benign, attack classified attack)."""
        return (self.fn, self.tp)


def confusion(preds: np.ndarray, labels: np.ndarray) -> ConfusionMatrix:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ShapeError("preds and labels must be equal-length vectors")
    for arr, name in ((preds, "preds"), (labels, "labels")):
        if arr.size and not np.isin(arr, (0, 1)).all():
            raise ShapeError(f"{name} must contain only 0 and 1")
    return ConfusionMatrix(
        tp=int(np.sum((preds == 1) & (labels == 1))),
        fp=int(np.sum((preds == 1) & (labels == 0))),
        tn=int(np.sum((preds == 0) & (labels == 0))),
        fn=int(np.sum((preds == 0) & (labels == 1))),
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    row: tuple[int, int]


@dataclass(frozen=True)
class ClassReport:
    benign: ClassMetrics
    attack: ClassMetrics
    accuracy: float
    # metric names that hit a zero denominator and were reported as 0
    zero_division_flags: tuple[str, ...] = ()

    @property
    def macro_f1(self) -> float:
        return 0.5 * (self.benign.f1 + self.attack.f1)


def _prf(tp: int, fp: int, fn: int, prefix: str, flags: list[str]):
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append(f"{prefix}_precision")
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append(f"{prefix}_recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append(f"{prefix}_f1")
    return precision, recall, f1


def class_report(cm: ConfusionMatrix) -> ClassReport:
    """Per-class precision/recall/F1 and overall accuracy.

    Zero-denominator metrics are reported as 0 and named in
    zero_division_flags so reports stay machine-comparable.
    """
    if cm.total == 0:
        raise EmptyInputError("confusion matrix has no rows")
    flags: list[str] = []
    # benign as positive class: tp <- tn, fp <- fn, fn <- fp
    b_p, b_r, b_f1 = _prf(cm.tn, cm.fn, cm.fp, "benign", flags)
    a_p, a_r, a_f1 = _prf(cm.tp, cm.fp, cm.fn, "attack", flags)
    return ClassReport(
        benign=ClassMetrics(b_p, b_r, b_f1, cm.tn + cm.fp, cm.benign_row),
        attack=ClassMetrics(a_p, a_r, a_f1, cm.tp + cm.fn, cm.attack_row),
        accuracy=(cm.tp + cm.tn) / cm.total,
        zero_division_flags=tuple(flags),
    )


def render_report(report: ClassReport, title: str = "") -> str:
    """Fixed-width text table; attack metrics print as -- when the test
    data contains no attack rows at all."""
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'class':<8} {'precision':>9} {'recall':>7} {'f1':>6}  confusion")
    for name, m in (("benign", report.benign), ("attack", report.attack)):
        omit = m.support == 0 and m.row == (0, 0)
        if omit:
            p = r = f1 = "--"
        else:
            p, r, f1 = f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f1:.4f}"
        lines.append(f"{name:<8} {p:>9} {r:>7} {f1:>6}  [{m.row[0]}, {m.row[1]}]")
    lines.append(f"accuracy {report.accuracy:.4f} over {report.benign.support + report.attack.support} rows")
    if report.zero_division_flags:
        lines.append("zero-denominator: " + ", ".join(report.zero_division_flags))
    return "\n".join(lines) + "\n"


def scalar_losses(ae: DenseNet, scaler: MinMaxScaler, dataset: FlowDataset) -> np.ndarray:
    """Per-row mean squared reconstruction error after scaling."""
    x = scale(scaler, dataset.features)
    d = x - ae.forward(x)
    return np.mean(d * d, axis=1)


def threshold_baseline(
    global_ae: DenseNet,
    scaler: MinMaxScaler,
    val_benign: FlowDataset,
    val_attack: FlowDataset,
    test_benign: FlowDataset,
    test_attack: FlowDataset,
) -> tuple[float, ClassReport]:
    """Classic detector: flag rows whose reconstruction loss exceeds a
    threshold chosen to maximize attack-class F1 on the validation sets.

    Candidates are the midpoints between consecutive sorted unique
    validation losses plus one below and one above everything, so
    all-attack and all-benign rules take part in the sweep. Ties go to
    the smallest candidate. The report is computed on the disjoint test
    sets.
    """
    if val_benign.n_rows == 0 or val_attack.n_rows == 0:
        raise ConfigError("threshold selection needs both validation classes")
    lb = scalar_losses(global_ae, scaler, val_benign)
    la = scalar_losses(global_ae, scaler, val_attack)
    uniq = np.unique(np.concatenate([lb, la]))
    mids = (uniq[:-1] + uniq[1:]) / 2 if uniq.size > 1 else np.array([])
    candidates = np.concatenate([[uniq[0] - 1.0], mids, [uniq[-1] + 1.0]])

    # attack positive: predicted attack when loss > threshold
    tp = (la[None, :] > candidates[:, None]).sum(axis=1)
    fp = (lb[None, :] > candidates[:, None]).sum(axis=1)
    fn = la.size - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    threshold = float(candidates[int(np.argmax(f1))])

    test_losses = np.concatenate(
        [
            scalar_losses(global_ae, scaler, test_benign),
            scalar_losses(global_ae, scaler, test_attack),
        ]
    )
    labels = np.concatenate(
        [np.zeros(test_benign.n_rows, dtype=np.int64),
         np.ones(test_attack.n_rows, dtype=np.int64)]
    )
    preds = (test_losses > threshold).astype(np.int64)
    return threshold, class_report(confusion(preds, labels))


def emit_loss_curve(round_logs, path) -> None:
    """Write (round, phase, loss) rows sorted by round for plotting."""
    if not round_logs:
        raise EmptyInputError("no round logs to emit")
    rows = sorted(round_logs, key=lambda r: (r.round, r.phase))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "phase", "loss"])
        for entry in rows:
            loss = "" if entry.global_eval_loss is None else repr(entry.global_eval_loss)
            writer.writerow([entry.round, entry.phase, loss])
