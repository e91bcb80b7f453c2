# app.py – Results dashboard for the QKD-keyed FHSS simulator
# Description: Streamlit dashboard that overlays the measured detection and jamming curves on their
# ideal counterparts and shows the QKD link summary. Reads the CSV/JSON artifacts of one run.

import argparse
import os
import sys

import streamlit as st

# Import custom visualization functions from visuals.py
from visuals import load_results, metric_curve_chart, peak_chart, summary_frame

# The results directory comes after `--` on the streamlit command line
parser = argparse.ArgumentParser()
parser.add_argument("--results", default=os.getenv("QKD_FHSS_OUTPUT_DIR", "results"))
args, _ = parser.parse_known_args(sys.argv[1:])

# App Layout Configuration
st.set_page_config(page_title="QKD-keyed FHSS", layout="wide")
st.title("QKD-keyed Frequency Hopping: Interception and Jamming")

results_dir = st.sidebar.text_input("Results directory", args.results)
curves, summary = load_results(results_dir)

if curves.empty:
    st.error(f"No result CSVs found in `{results_dir}`. Run `python run_all.py run --out {results_dir}` first.")
    st.stop()

tab1, tab2, tab3 = st.tabs(["Detection", "Jamming", "QKD link"])

# TAB 1: eavesdropper detection probability vs detection period
with tab1:
    col1, col2 = st.columns(2)
    with col1:
        st.plotly_chart(metric_curve_chart(curves, "detect_prob"), use_container_width=True)
    with col2:
        st.plotly_chart(peak_chart(curves, "detect_prob"), use_container_width=True)

# TAB 2: jammer symbol error rate vs jamming period
with tab2:
    col1, col2 = st.columns(2)
    with col1:
        st.plotly_chart(metric_curve_chart(curves, "ser"), use_container_width=True)
    with col2:
        st.plotly_chart(peak_chart(curves, "ser"), use_container_width=True)

with tab3:
    if summary is None:
        st.info("qkd_summary.json not found in this directory.")
    else:
        st.subheader("Link summary")
        st.dataframe(summary_frame(summary), use_container_width=True)
        if "predictability" in summary:
            st.subheader("Predictability contrast")
            st.json(summary["predictability"])
        if "baseline" in summary:
            st.subheader("Synchronized baseline")
            st.json(summary["baseline"])

# Footer & Download
st.download_button("Download curves", data=curves.to_csv(index=False), file_name="curves.csv", mime="text/csv")
