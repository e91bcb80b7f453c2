import json

import pandas as pd
import pytest

from sim_modules.metrics import CSV_COLUMNS
from streamlit_app.visuals import load_results, metric_curve_chart, peak_chart, summary_frame


def _row(param, value, t_h, metric, mean):
    return [param, value, t_h, metric, mean, mean - 0.01, mean + 0.01, mean + 0.02, 4, 0]


def _write_results(directory):
    pd.DataFrame([_row("detection_period_us", v, 5000, "detect_prob", m) for v, m in ((500, 0.95), (5000, 0.5))],
                 columns=CSV_COLUMNS).to_csv(directory / "detect_Th5000.csv", index=False)
    ideal = pd.DataFrame([_row("detection_period_us", v, 5000, "detect_prob", m) for v, m in ((500, 0.95), (5000, 0.5))],
                         columns=CSV_COLUMNS)
    ideal["method"] = "closed_form"
    ideal.to_csv(directory / "ideal_Th5000.csv", index=False)
    pd.DataFrame([_row("jamming_period_us", 1000, 5000, "ser", 0.023)],
                 columns=CSV_COLUMNS).to_csv(directory / "jam_Th5000.csv", index=False)
    (directory / "notes_Th5000.csv").write_text("ignored\n")
    (directory / "qkd_summary.json").write_text(json.dumps({"qkd": {"qber": 0.035, "secret_len": 5000}}))


def test_load_results_tags_sources(tmp_path):
    _write_results(tmp_path)
    curves, summary = load_results(str(tmp_path))
    assert len(curves) == 5
    assert sorted(curves["source"].unique()) == ["ideal", "measured"]
    assert summary["qkd"]["qber"] == 0.035


def test_empty_results_dir(tmp_path):
    curves, summary = load_results(str(tmp_path))
    assert curves.empty
    assert summary is None


def test_charts_have_one_trace_per_series(tmp_path):
    _write_results(tmp_path)
    curves, summary = load_results(str(tmp_path))
    assert len(metric_curve_chart(curves, "detect_prob").data) == 2
    assert len(metric_curve_chart(curves, "ser").data) == 1
    assert len(peak_chart(curves, "detect_prob").data) == 2
    frame = summary_frame(summary)
    assert list(frame["field"]) == ["qber", "secret_len"]


def test_series_file_missing_columns_is_rejected(tmp_path):
    _write_results(tmp_path)
    pd.DataFrame({"swept_param": ["jamming_period_us"], "mean": [0.5]}).to_csv(tmp_path / "jam_Th1000.csv", index=False)
    with pytest.raises(ValueError, match="missing columns"):
        load_results(str(tmp_path))
