import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cssl_har import metrics as mt
from cssl_har.model import Model, ModelConfig
from cssl_har.plots import bar_chart, emit_plots, grouped_bar_chart, line_chart, matrix_charts

from oracles import ca_direct, fa_direct, forgetting_direct, ft_direct


class _Constant:
    """Stand-in model whose classifier always prefers class ``k``."""

    class _Clf:
        def __init__(self, n):
            self.n_classes = n

    def __init__(self, k, n):
        self.k, self.classifier = k, self._Clf(n)

    def encode(self, x):
        return x

    def classify(self, feats):
        from cssl_har.numerics import Tensor
        out = np.zeros((len(feats.data if hasattr(feats, "data") else feats), self.classifier.n_classes))
        out[:, self.k] = 1.0
        return Tensor(out)


HAND = np.array([[0.9, 0.1], [0.7, 0.8]])


def test_hand_example():
    assert mt.final_accuracy(HAND) == pytest.approx(0.75, abs=1e-15)
    assert mt.continual_accuracy(HAND) == pytest.approx(0.825, abs=1e-15)
    assert mt.forgetting(HAND) == pytest.approx(0.2, abs=1e-15)


def test_single_task_and_constant_matrices():
    assert mt.final_accuracy([[0.9]]) == 0.9 and mt.continual_accuracy([[0.9]]) == 0.9
    assert mt.forgetting(np.full((4, 4), 0.6)) == 0.0
    with pytest.raises(ValueError):
        mt.forgetting([[0.9]])


def test_forward_transfer_examples():
    A = np.array([[0.9, 0.4], [0.7, 0.8]])
    assert mt.forward_transfer(A, [0.5, 0.33]) == pytest.approx(0.07, abs=1e-12)
    B = np.array([[0.5, 0.2, 0.3], [0.1, 0.6, 0.3], [0.2, 0.2, 0.9]])
    assert mt.forward_transfer(B, [0.0, 0.2, 0.3]) == 0.0


@pytest.mark.parametrize("seed", range(20))
def test_metrics_match_definitions(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 8))
    A, b = rng.uniform(size=(T, T)), rng.uniform(size=T)
    assert abs(mt.final_accuracy(A) - fa_direct(A)) < 1e-12
    assert abs(mt.continual_accuracy(A) - ca_direct(A)) < 1e-12
    assert abs(mt.forgetting(A) - forgetting_direct(A)) < 1e-12
    assert abs(mt.forward_transfer(A, b) - ft_direct(A, b)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6).flatmap(lambda t: arrays(np.float64, (t, t), elements=st.floats(0, 1))))
def test_metric_ranges(A):
    assert 0.0 <= mt.final_accuracy(A) <= 1.0
    assert 0.0 <= mt.continual_accuracy(A) <= 1.0
    assert -1.0 <= mt.forgetting(A) <= 1.0
    # with the last row zeroed, nothing can have improved, so forgetting is non-negative
    A2 = A.copy()
    A2[-1] = 0.0
    assert mt.forgetting(A2) >= 0.0


def test_evaluate_constant_predictor():
    x = np.zeros((10, 4))
    assert mt.evaluate(_Constant(0, 3), [(x, np.zeros(10, dtype=int))]).tolist() == [1.0]
    assert mt.evaluate(_Constant(0, 0), [(x, np.zeros(10, dtype=int))]).tolist() == [0.0]
    with pytest.raises(ValueError):
        mt.evaluate(_Constant(0, 3), [(x[:0], np.zeros(0, dtype=int))])


def test_uniform_random_logits_give_chance_accuracy():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(10_000, 18))
    labels = rng.integers(0, 3, 10_000)
    acc = mt.accuracy(logits.argmax(1), labels)
    assert abs(acc - 1 / 18) < 0.02


def test_untrained_model_row_has_one_entry_per_task():
    m = Model.build(ModelConfig(filters=(4,), kernels=(3,)), np.random.default_rng(0))
    m.grow_classifier(2, np.random.default_rng(1))
    sets = [(np.zeros((3, 16, 3)), np.array([0, 1, 0])), (np.ones((2, 16, 3)), np.array([2, 3]))]
    row = mt.evaluate(m, sets)
    assert row.shape == (2,) and row[1] == 0.0


# --- serialisation ----------------------------------------------------------

def test_matrix_csv_round_trip(tmp_path):
    A = np.random.default_rng(0).uniform(size=(3, 3))
    mt.write_matrix_csv(tmp_path / "m.csv", A)
    assert np.array_equal(mt.read_matrix_csv(tmp_path / "m.csv"), A)
    text = (tmp_path / "m.csv").read_text().splitlines()
    assert text[0] == "after_task,task_1,task_2,task_3" and text[1].startswith("1,")


def test_partial_matrix_round_trip(tmp_path):
    A = np.array([[0.5, 0.0, 0.0]])
    mt.write_matrix_csv(tmp_path / "m.csv", A)
    assert mt.read_matrix_csv(tmp_path / "m.csv").shape == (1, 3)


def test_read_rejects_other_csv(tmp_path):
    (tmp_path / "x.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        mt.read_matrix_csv(tmp_path / "x.csv")


def test_baseline_round_trip_and_json(tmp_path):
    b = np.array([0.5, 0.25, 1 / 3])
    mt.write_baseline_csv(tmp_path / "b.csv", b)
    assert np.array_equal(mt.read_baseline_csv(tmp_path / "b.csv"), b)
    assert mt.metrics_json({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_summarize_keys():
    s = mt.summarize(HAND, [0.5, 0.5])
    assert set(s) == {"fa", "ca", "forgetting", "forward_transfer"}
    assert s["forward_transfer"] == pytest.approx(0.1 - 0.5)
    assert mt.summarize(np.array([[0.4]]), [0.5])["forgetting"] == 0.0


# --- plots ------------------------------------------------------------------

def _points(svg):
    root = ET.fromstring(svg)
    return [(e.get("data-series"), e.get("data-x"), float(e.get("data-y")))
            for e in root.iter() if e.get("data-y") is not None]


def test_single_task_chart_is_valid_svg():
    charts = matrix_charts(np.array([[0.7]]))
    for svg in charts.values():
        ET.fromstring(svg)
    assert _points(charts["average_accuracy.svg"]) == [("average", "after T1", 0.7)]


def test_per_task_chart_round_trip():
    A = np.array([[0.9, 0.1], [0.7, 0.8]])
    svg = matrix_charts(A)["per_task_accuracy.svg"]
    pts = _points(svg)
    assert ("T1", "after T1", 0.9) in pts and ("T1", "after T2", 0.7) in pts and ("T2", "after T2", 0.8) in pts
    assert len(pts) == 3
    series = {e.get("data-name") for e in ET.fromstring(svg).iter() if e.get("class") == "series"}
    assert series == {"T1", "T2"}


def test_summary_chart_values():
    pts = _points(matrix_charts(HAND, [0.5, 0.5])["summary_metrics.svg"])
    vals = {x: y for _, x, y in pts}
    assert vals["FA"] == pytest.approx(0.75) and vals["CA"] == pytest.approx(0.825) and vals["F"] == pytest.approx(0.2)


def test_chart_builders_escape_and_parse():
    ET.fromstring(line_chart("a < b & c", ["x"], [("s\"1", [0.5])]))
    ET.fromstring(bar_chart("bars", ["a", "b"], [-0.2, 1.4]))
    svg = grouped_bar_chart("groups", ["0.50+0.00", "1.00+0.50"], ["FA", "CA"], [[0.1, 0.2], [0.3, 0.4]])
    assert [(s, x, y) for s, x, y in _points(svg)] == [
        ("FA", "0.50+0.00", 0.1), ("FA", "1.00+0.50", 0.3), ("CA", "0.50+0.00", 0.2), ("CA", "1.00+0.50", 0.4)]


def test_emit_plots_writes_three_files(tmp_path):
    mt.write_matrix_csv(tmp_path / "matrix.csv", HAND)
    mt.write_baseline_csv(tmp_path / "baseline.csv", [0.5, 0.5])
    paths = emit_plots(tmp_path)
    assert sorted(p.name for p in paths) == ["average_accuracy.svg", "per_task_accuracy.svg", "summary_metrics.svg"]
    assert re.search(r"<svg", paths[0].read_text())
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path / "missing")
