import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pumpdetect.models import DegenerateLabelsError, ThresholdModel, fit_threshold_detector, model_from_dict
from pumpdetect.models.threshold import pr_curve


def brute_curve(values, labels):
    out = []
    for t in sorted(set(values)):
        fire = [v >= t for v in values]
        tp = sum(f and l for f, l in zip(fire, labels))
        nf = sum(fire)
        out.append((t, tp / nf if nf else 0.0, tp / sum(labels) if sum(labels) else 0.0))
    return out


def test_hand_example():
    X = np.array([[0.1], [0.2], [0.9], [0.8], [0.3]])
    y = np.array([0, 0, 1, 1, 0], bool)
    m, curve = fit_threshold_detector(X, y)
    assert m.threshold == 0.8
    assert list(m.predict(X)) == list(y)
    i = list(curve.thresholds).index(0.8)
    assert (curve.precision[i], curve.recall[i]) == (1.0, 1.0)


def test_ties_prefer_higher_threshold():
    # thresholds 2 and 3 both give F1 = 2/3
    X = np.array([[1.0], [2.0], [3.0]])
    y = np.array([0, 1, 0], bool)
    m, curve = fit_threshold_detector(X, y)
    f1 = dict(zip(curve.thresholds, curve.f1))
    assert f1[2.0] == pytest.approx(2 / 3)
    assert m.threshold == 2.0


def test_needs_positive():
    with pytest.raises(DegenerateLabelsError):
        fit_threshold_detector(np.zeros((3, 1)), np.zeros(3, bool))


def test_feature_index_and_round_trip():
    X = np.zeros((4, 9))
    X[:, 3] = [1, 2, 3, 4]
    m, _ = fit_threshold_detector(X, np.array([0, 0, 1, 1], bool), feature_index=3)
    assert m.threshold == 3.0 and m.feature_name == "std_volumes"
    back = model_from_dict(m.to_dict())
    assert isinstance(back, ThresholdModel) and back == m


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=1, max_size=40))
def test_curve_matches_brute_force(rows):
    v = np.array([float(a) for a, _ in rows])
    l = np.array([b for _, b in rows])
    c = pr_curve(v, l)
    ref = brute_curve(list(v), list(l))
    assert list(c.thresholds) == [r[0] for r in ref]
    np.testing.assert_allclose(c.precision, [r[1] for r in ref])
    np.testing.assert_allclose(c.recall, [r[2] for r in ref])
    assert np.all(np.diff(c.recall) <= 0)
