import numpy as np
import pytest

from ptxens import metrics as mx
from ptxens.metrics import (
    Confusion,
    ScoredSample,
    auc,
    choose_cutoff,
    confusion_at,
    fmt_half_up,
    interpret,
    load_report,
    report,
    roc_curve,
    round_half_up,
    save_report,
    save_roc,
    sp_se_acc,
)


def _samples(scores, labels):
    return [ScoredSample(score=float(s), label=int(l)) for s, l in zip(scores, labels)]


FOUR = _samples([0.9, 0.6, 0.4, 0.2], [1, 0, 1, 0])


# ---------------------------------------------------------------------------
# Confusion counts


def test_confusion_four_sample_case():
    c = confusion_at(FOUR, 0.5)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)


def test_confusion_threshold_above_everything():
    c = confusion_at(FOUR, 2.0)
    assert (c.tp, c.fp) == (0, 0)
    assert c.tn == 2 and c.fn == 2


def test_confusion_threshold_zero_predicts_all_positive():
    c = confusion_at(FOUR, 0.0)
    assert (c.tn, c.fn) == (0, 0)
    assert c.tp == 2 and c.fp == 2


def test_confusion_boundary_score_counts_positive():
    c = confusion_at(_samples([0.5], [1]), 0.5)
    assert c.tp == 1 and c.fn == 0


# ---------------------------------------------------------------------------
# Sp / Se / Acc


def test_sp_se_acc_balanced():
    assert sp_se_acc(Confusion(tp=1, tn=1, fp=1, fn=1)) == (50.0, 50.0, 50.0)


def test_sp_se_acc_perfect():
    assert sp_se_acc(Confusion(tp=3, tn=5, fp=0, fn=0)) == (100.0, 100.0, 100.0)


def test_sp_se_acc_reference_row():
    sp, se, acc = 84.02, 85.51, (84.02 + 85.51) / 2
    assert acc == 84.765
    assert fmt_half_up(acc, 2) == "84.77"


def test_sp_se_acc_rejects_empty_classes():
    with pytest.raises(ValueError):
        sp_se_acc(Confusion(tp=0, tn=0, fp=0, fn=0))


# ---------------------------------------------------------------------------
# ROC curve


def test_roc_two_sample_shape():
    curve = roc_curve(_samples([0.9, 0.8], [1, 0]))
    pts = [(fpr, tpr) for _, fpr, tpr in curve.points]
    assert pts == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]


def test_roc_starts_and_ends_at_corners():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 50))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        curve = roc_curve(_samples(rng.random(n), labels))
        assert curve.points[0][1:] == (0.0, 0.0)
        assert curve.points[-1][1:] == (1.0, 1.0)


def test_roc_perfect_separation_hugs_edges():
    curve = roc_curve(_samples([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]))
    assert any(fpr == 0.0 and tpr == 1.0 for _, fpr, tpr in curve.points)
    assert auc(curve) == 1.0


def test_roc_monotone():
    rng = np.random.default_rng(4)
    scores = rng.random(200)
    labels = rng.integers(0, 2, size=200)
    labels[0], labels[1] = 0, 1
    curve = roc_curve(_samples(scores, labels))
    fprs = [p[1] for p in curve.points]
    tprs = [p[2] for p in curve.points]
    assert all(a <= b for a, b in zip(fprs, fprs[1:]))
    assert all(a <= b for a, b in zip(tprs, tprs[1:]))


def test_roc_random_labels_near_diagonal():
    rng = np.random.default_rng(5)
    n = 10_000
    curve = roc_curve(_samples(rng.random(n), rng.integers(0, 2, size=n)))
    worst = max(abs(tpr - fpr) for _, fpr, tpr in curve.points)
    assert worst < 0.05


def test_roc_requires_both_classes():
    with pytest.raises(ValueError):
        roc_curve(_samples([0.1, 0.2], [1, 1]))


# ---------------------------------------------------------------------------
# AUC


def _auc_pairwise(samples):
    pos = [s.score for s in samples if s.label == 1]
    neg = [s.score for s in samples if s.label == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def test_auc_four_sample_case():
    assert auc(roc_curve(FOUR)) == 0.75


def test_auc_single_tie_is_half():
    assert auc(roc_curve(_samples([0.5, 0.5], [1, 0]))) == 0.5


def test_auc_matches_pairwise_statistic():
    rng = np.random.default_rng(6)
    for _ in range(50):
        n = int(rng.integers(4, 120))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        if rng.random() < 0.5:
            scores = rng.integers(0, 6, size=n) / 5.0  # heavy ties
        else:
            scores = rng.random(n)
        samples = _samples(scores, labels)
        assert abs(auc(roc_curve(samples)) - _auc_pairwise(samples)) < 1e-12


def test_auc_label_swap_complements():
    rng = np.random.default_rng(7)
    scores = rng.random(60)
    labels = rng.integers(0, 2, size=60)
    labels[:2] = [0, 1]
    a = auc(roc_curve(_samples(scores, labels)))
    b = auc(roc_curve(_samples(scores, 1 - labels)))
    assert abs(a + b - 1.0) < 1e-12


def test_auc_invariant_under_monotone_transform():
    rng = np.random.default_rng(8)
    scores = rng.random(80)
    labels = rng.integers(0, 2, size=80)
    labels[:2] = [0, 1]
    a = auc(roc_curve(_samples(scores, labels)))
    b = auc(roc_curve(_samples(np.exp(3.0 * scores), labels)))
    assert abs(a - b) < 1e-12


# ---------------------------------------------------------------------------
# Cut-off selection


def test_choose_cutoff_prefers_sensitivity_on_ties():
    curve = roc_curve(FOUR)
    threshold, sp, se = choose_cutoff(curve, FOUR)
    assert (sp, se) == (50.0, 100.0)
    assert threshold == 0.4


def test_choose_cutoff_perfect_separation():
    samples = _samples([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    _, sp, se = choose_cutoff(roc_curve(samples), samples)
    assert (sp, se) == (100.0, 100.0)


def test_choose_cutoff_attains_sweep_maximum():
    """Compare via the exact integer objective tn*P + tp*N, which equals
    (Sp+Se)/100 * P * N and avoids float tie noise."""
    rng = np.random.default_rng(9)
    for _ in range(50):
        n = int(rng.integers(4, 80))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        scores = rng.integers(0, 10, size=n) / 9.0
        samples = _samples(scores, labels)
        n_pos = int(labels.sum())
        n_neg = n - n_pos
        curve = roc_curve(samples)
        threshold, sp, se = choose_cutoff(curve, samples)
        chosen = confusion_at(samples, threshold)
        best_key = max(
            confusion_at(samples, t).tn * n_pos + confusion_at(samples, t).tp * n_neg
            for t in [p[0] for p in curve.points]
        )
        assert chosen.tn * n_pos + chosen.tp * n_neg == best_key
        assert np.isclose(sp + se, 100.0 * best_key / (n_pos * n_neg))


def test_choose_cutoff_invariant_under_monotone_transform():
    samples = FOUR
    t1, sp1, se1 = choose_cutoff(roc_curve(samples), samples)
    warped = _samples([np.exp(s.score) for s in samples], [s.label for s in samples])
    t2, sp2, se2 = choose_cutoff(roc_curve(warped), warped)
    assert (sp1, se1) == (sp2, se2)
    assert np.isclose(t2, np.exp(t1))


# ---------------------------------------------------------------------------
# Interpretation bands


@pytest.mark.parametrize(
    "value,expected",
    [
        (0.911, "Excellent discrimination"),
        (0.806, "Good discrimination"),
        (0.841, "Good discrimination"),
        (0.888, "Good discrimination"),
        (0.5, "No discrimination"),
        (0.8, "Good discrimination"),
        (0.9, "Excellent discrimination"),
        (0.7, "Acceptable discrimination"),
        (0.6, "Poor discrimination"),
        (1.0, "Excellent discrimination"),
        (0.3, "Worse than chance"),
    ],
)
def test_interpret_bands(value, expected):
    assert interpret(value) == expected


def test_interpret_rejects_out_of_range():
    with pytest.raises(ValueError):
        interpret(1.2)
    with pytest.raises(ValueError):
        interpret(-0.1)


# ---------------------------------------------------------------------------
# Rounding


def test_round_half_up_values():
    assert round_half_up(84.765, 2) == 84.77
    assert round_half_up(83.395, 2) == 83.40
    assert round_half_up(0.9105, 3) == 0.911
    assert round_half_up(2.5, 0) == 3.0
    assert round_half_up(-0.005, 2) == -0.01


def test_fmt_half_up_strings():
    assert fmt_half_up(84.765, 2) == "84.77"
    assert fmt_half_up(0.911, 3) == "0.911"
    assert fmt_half_up(100.0, 2) == "100.00"


# ---------------------------------------------------------------------------
# Report rendering


ROWS = [
    ("Model 512", 0.806, 84.21, 82.58, 83.40),
    ("Model 384", 0.841, 83.72, 81.32, 82.52),
    ("Model 256", 0.888, 83.66, 83.07, 83.37),
    ("Ensemble", 0.911, 84.02, 85.51, 84.77),
]


def test_report_reference_table():
    text, records = report(ROWS)
    accs = [r["acc"] for r in records]
    assert accs == ["83.40", "82.52", "83.37", "84.77"]
    assert records[-1]["interpretation"] == "Excellent discrimination"
    assert records[0]["interpretation"] == "Good discrimination"
    assert "Model 512" in text and "84.77" in text


def test_report_consistency_check_rejects_bad_acc():
    with pytest.raises(ValueError):
        mx._check_row_consistency("X", 50.0, 50.0, 51.0)


def test_report_perfect_row():
    _, records = report([("M", 1.0, 100.0, 100.0, 100.0)])
    assert records[0]["acc"] == "100.00"
    assert records[0]["auc"] == "1.000"


def test_report_round_trip(tmp_path):
    _, records = report(ROWS)
    path = tmp_path / "report.json"
    save_report(records, path)
    back = load_report(path)
    assert back == records


def test_save_roc_format(tmp_path):
    curve = roc_curve(FOUR)
    path = tmp_path / "roc.txt"
    save_roc(curve, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0].startswith("#")
    assert len(lines) - 1 == len(curve.points)
    cols = lines[1].split()
    assert len(cols) == 3
