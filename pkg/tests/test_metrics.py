import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedids.data import FlowDataset, synthetic_schema
from fedids.errors import ConfigError, EmptyInputError, ShapeError
from fedids.federation import RoundLog
from fedids.metrics import (
    ClassReport,
    ConfusionMatrix,
    class_report,
    confusion,
    emit_loss_curve,
    render_report,
    scalar_losses,
    threshold_baseline,
)
from fedids.nn import DenseNet
from fedids.scaling import MinMaxScaler


class TestConfusion:
    def test_all_correct(self):
        cm = confusion(np.array([0, 1, 0, 1]), np.array([0, 1, 0, 1]))
        assert (cm.fp, cm.fn) == (0, 0)
        assert (cm.tp, cm.tn) == (2, 2)

    def test_all_predicted_attack(self):
        labels = np.array([0, 0, 1, 1])
        cm = confusion(np.ones(4, dtype=int), labels)
        assert cm.fp == 2 and cm.tp == 2 and cm.tn == 0 and cm.fn == 0

    def test_matches_bruteforce_tally(self):
        rng = np.random.default_rng(0)
        preds = rng.integers(0, 2, size=1000)
        labels = rng.integers(0, 2, size=1000)
        cm = confusion(preds, labels)
        tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
        for p, l in zip(preds, labels):
            if p == 1 and l == 1:
                tally["tp"] += 1
            elif p == 1 and l == 0:
                tally["fp"] += 1
            elif p == 0 and l == 0:
                tally["tn"] += 1
            else:
                tally["fn"] += 1
        assert (cm.tp, cm.fp, cm.tn, cm.fn) == (
            tally["tp"], tally["fp"], tally["tn"], tally["fn"]
        )
        assert cm.total == 1000

    def test_shape_and_value_checks(self):
        with pytest.raises(ShapeError):
            confusion(np.array([0, 1]), np.array([0]))
        with pytest.raises(ShapeError):
            confusion(np.array([0, 2]), np.array([0, 1]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_row_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        preds = rng.integers(0, 2, size=50)
        labels = rng.integers(0, 2, size=50)
        perm = rng.permutation(50)
        assert confusion(preds, labels) == confusion(preds[perm], labels[perm])


def report_from_rows(benign_row, attack_row):
    # rows follow the published layout: [kept in class, sent to other class]
    tn, fp = benign_row
    fn, tp = attack_row
    return class_report(ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn))


class TestClassReport:
    def test_published_weak_model_arithmetic(self):
        rep = report_from_rows((16985, 7015), (7509, 16500))
        assert rep.benign.precision == pytest.approx(0.69, abs=0.005)
        assert rep.benign.recall == pytest.approx(0.71, abs=0.005)
        assert rep.benign.f1 == pytest.approx(0.70, abs=0.005)

    def test_published_strong_model_arithmetic(self):
        rep = report_from_rows((23831, 169), (119, 23881))
        assert rep.benign.precision == pytest.approx(1.00, abs=0.005)
        assert rep.benign.recall == pytest.approx(0.99, abs=0.005)
        assert rep.benign.f1 == pytest.approx(0.99, abs=0.005)

    def test_perfect_predictor(self):
        rep = report_from_rows((50, 0), (0, 50))
        for m in (rep.benign, rep.attack):
            assert m.precision == m.recall == m.f1 == 1.0
        assert rep.accuracy == 1.0
        assert rep.zero_division_flags == ()

    def test_zero_denominator_flags(self):
        # no attack rows and nothing predicted attack
        rep = report_from_rows((10, 0), (0, 0))
        assert rep.attack.precision == 0.0
        assert "attack_precision" in rep.zero_division_flags
        assert "attack_recall" in rep.zero_division_flags

    def test_swapping_classes_swaps_metric_blocks(self):
        def prf(m):
            return (m.precision, m.recall, m.f1, m.support)

        cm = ConfusionMatrix(tp=30, fp=7, tn=50, fn=13)
        swapped = ConfusionMatrix(tp=cm.tn, fp=cm.fn, tn=cm.tp, fn=cm.fp)
        a, b = class_report(cm), class_report(swapped)
        assert prf(a.benign) == prf(b.attack)
        assert prf(a.attack) == prf(b.benign)
        assert a.accuracy == b.accuracy

    def test_empty_matrix(self):
        with pytest.raises(EmptyInputError):
            class_report(ConfusionMatrix(0, 0, 0, 0))

    def test_render_omits_absent_attack_class(self):
        rep = report_from_rows((10, 2), (0, 0))
        text = render_report(rep, title="[x]")
        assert "--" in text
        assert "[10, 2]" in text


def identity_ae(n):
    return DenseNet([n, n], [np.eye(n)], [np.zeros(n)])


def flat_scaler(n):
    return MinMaxScaler(np.zeros(n), np.ones(n))


def loss_dataset(target_losses, n_features=4):
    """Rows whose per-row reconstruction loss under a zero-output AE is known."""
    rows = np.sqrt(np.asarray(target_losses))[:, None] * np.ones(n_features)
    return FlowDataset(rows, None, synthetic_schema(n_features), "v")


def zero_ae(n):
    # maps everything to zero, so per-row loss is mean(x^2)
    return DenseNet([n, n], [np.zeros((n, n))], [np.zeros(n)])


class TestThresholdBaseline:
    def test_scalar_losses_match_definition(self):
        net = zero_ae(4)
        ds = loss_dataset([0.04, 0.25])
        out = scalar_losses(net, flat_scaler(4), ds)
        np.testing.assert_allclose(out, [0.04, 0.25], atol=1e-12)

    def test_separable_case_perfect_f1(self):
        benign = loss_dataset([0.01, 0.02, 0.03])
        attack = loss_dataset([0.5, 0.6, 0.7])
        thr, rep = threshold_baseline(
            zero_ae(4), flat_scaler(4), benign, attack, benign, attack
        )
        assert 0.03 < thr < 0.5
        assert rep.attack.f1 == 1.0 and rep.benign.f1 == 1.0

    def test_identical_distributions_all_attack_threshold(self):
        same = [0.1, 0.2, 0.3, 0.4]
        thr, rep = threshold_baseline(
            zero_ae(4), flat_scaler(4),
            loss_dataset(same), loss_dataset(same),
            loss_dataset(same), loss_dataset(same),
        )
        # best achievable F1 is flagging everything: P=0.5, R=1 -> 2/3
        assert thr < 0.1
        assert rep.attack.recall == 1.0
        assert rep.attack.f1 == pytest.approx(2 / 3, abs=1e-9)

    def test_sweep_beats_every_fixed_midpoint(self):
        rng = np.random.default_rng(1)
        benign = loss_dataset(rng.uniform(0.0, 0.5, size=40))
        attack = loss_dataset(rng.uniform(0.2, 1.0, size=40))
        net, sc = zero_ae(4), flat_scaler(4)
        thr, _ = threshold_baseline(net, sc, benign, attack, benign, attack)
        lb = scalar_losses(net, sc, benign)
        la = scalar_losses(net, sc, attack)

        def f1_at(t):
            tp = int((la > t).sum())
            fp = int((lb > t).sum())
            fn = la.size - tp
            return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0

        best = f1_at(thr)
        all_losses = np.unique(np.concatenate([lb, la]))
        mids = (all_losses[:-1] + all_losses[1:]) / 2
        for t in np.concatenate([[all_losses[0] - 1], mids, [all_losses[-1] + 1]]):
            assert best >= f1_at(t) - 1e-12

    def test_empty_validation_class(self):
        benign = loss_dataset([0.1])
        empty = FlowDataset(np.empty((0, 4)), None, synthetic_schema(4), "e")
        with pytest.raises(ConfigError):
            threshold_baseline(zero_ae(4), flat_scaler(4), benign, empty, benign, benign)


class TestLossCurve:
    def test_rows_and_header(self, tmp_path):
        logs = [
            RoundLog(10, "ae", 0.5, {"a": 1}),
            RoundLog(20, "ae", 0.4, {"a": 1}),
            RoundLog(30, "ae", 0.3, {"a": 1}),
        ]
        path = tmp_path / "curve.csv"
        emit_loss_curve(logs, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["round", "phase", "loss"]
        assert len(rows) == 4

    def test_sorted_by_round(self, tmp_path):
        logs = [
            RoundLog(30, "ae", 0.3, {}),
            RoundLog(10, "ae", 0.5, {}),
            RoundLog(20, "clf", 0.4, {}),
        ]
        path = tmp_path / "curve.csv"
        emit_loss_curve(logs, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))[1:]
        assert [int(r[0]) for r in rows] == [10, 20, 30]

    def test_empty_logs(self, tmp_path):
        with pytest.raises(EmptyInputError):
            emit_loss_curve([], tmp_path / "x.csv")
