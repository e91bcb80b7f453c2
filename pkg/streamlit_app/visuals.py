# streamlit_app\visuals.py

# imports
import glob
import json
import os
import re

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

from sim_modules.metrics import read_series_csv

_ARTIFACT = re.compile(r"^(detect|jam|ideal)_Th(\d+)\.csv$")
METRIC_LABELS = {"detect_prob": "Detection probability", "ser": "Symbol error rate"}


def load_results(results_dir):
    """
    Reads every detect/jam/ideal CSV in a results directory into one long DataFrame
    with an extra `source` column ("measured" or "ideal"), plus the QKD summary if present.
    """
    frames = []
    for path in sorted(glob.glob(os.path.join(results_dir, "*_Th*.csv"))):
        match = _ARTIFACT.match(os.path.basename(path))
        if not match:
            continue
        df = read_series_csv(path)
        df["source"] = "ideal" if match.group(1) == "ideal" else "measured"
        frames.append(df)
    curves = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    summary = None
    summary_path = os.path.join(results_dir, "qkd_summary.json")
    if os.path.exists(summary_path):
        with open(summary_path) as f:
            summary = json.load(f)
    return curves, summary


def metric_curve_chart(curves, metric):
    """
    Measured mean with its 95% CI band against the ideal curve, one color per hop interval.
    Log x-axis since the swept periods span two decades.
    """
    df = curves[curves["metric"] == metric].sort_values("value_us")
    fig = go.Figure()
    for (t_h, source), group in df.groupby(["hop_interval_us", "source"]):
        name = f"T_h={t_h} us ({source})"
        if source == "measured":
            fig.add_trace(go.Scatter(
                x=group["value_us"], y=group["mean"], mode="lines+markers", name=name,
                error_y=dict(type="data", symmetric=False,
                             array=group["ci95_high"] - group["mean"],
                             arrayminus=group["mean"] - group["ci95_low"]),
            ))
        else:
            fig.add_trace(go.Scatter(x=group["value_us"], y=group["mean"], mode="lines", name=name,
                                     line=dict(dash="dash")))
    fig.update_xaxes(type="log", title="Period (us)")
    fig.update_yaxes(title=METRIC_LABELS.get(metric, metric))
    fig.update_layout(title=f"{METRIC_LABELS.get(metric, metric)}: measured vs ideal",
                      margin=dict(l=20, r=20, t=50, b=20))
    return fig


def peak_chart(curves, metric):
    """Phase-worst-case values per swept period, measured and ideal side by side."""
    df = curves[curves["metric"] == metric].copy()
    df["series"] = df["source"] + " T_h=" + df["hop_interval_us"].astype(str)
    fig = px.line(
        df.sort_values("value_us"),
        x="value_us",
        y="peak_over_phase",
        color="series",
        markers=True,
        log_x=True,
        title=f"Peak over phase: {METRIC_LABELS.get(metric, metric)}",
        labels={"value_us": "Period (us)", "peak_over_phase": "Peak"},
    )
    return fig


def summary_frame(summary):
    """Flattens the QKD diagnostic record into a two-column table for display."""
    rows = [(key, value) for key, value in sorted(summary.get("qkd", {}).items())]
    return pd.DataFrame(rows, columns=["field", "value"])
