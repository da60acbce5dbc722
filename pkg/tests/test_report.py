"""Decisions CSV schema, PR CSV, summary JSON, and figure rendering."""

import csv
import json

import numpy as np
import pytest

from seqfuse.controller import MatchDecision
from seqfuse.evaluation import PRCurve
from seqfuse.report import (curve_summary, plot_match_trace, plot_pr_curves,
                            plot_quality_timeline, read_decisions_csv,
                            write_decisions_csv, write_pr_csv,
                            write_summary_json)

CHANNELS = ["sad", "hog", "cnn-pyramid"]


def _dec(frame_id, template, quality, accepted, excluded=None,
         degenerate=(False, False, False)):
    return MatchDecision(frame_id=frame_id, template_index=template,
                         template_id=template, quality=quality,
                         accepted=accepted, seq_start_frame=max(0, frame_id - 4),
                         seq_len=min(frame_id + 1, 5),
                         excluded_channel=excluded, ambiguous=False,
                         bests=(template, template + 1, template + 2),
                         degenerate=degenerate)


@pytest.fixture()
def decisions():
    return [
        _dec(0, 10, 0.004, True),
        _dec(1, 11, 0.0123456789, True, excluded=2),
        _dec(2, 12, 0.9, False, degenerate=(True, False, True)),
    ]


def test_decisions_csv_layout(tmp_path, decisions):
    path = tmp_path / "decisions.csv"
    write_decisions_csv(path, decisions, CHANNELS)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["frame_id", "template_id", "quality", "accepted",
                       "seq_start", "seq_len", "excluded_channel", "ambiguous",
                       "best_sad", "best_hog", "best_cnn-pyramid",
                       "degenerate_channels"]
    assert rows[1] == ["0", "10", "0.004", "1", "0", "1", "", "0",
                       "10", "11", "12", ""]
    # excluded channel is written by name, quality at nine significant digits
    assert rows[2][6] == "cnn-pyramid"
    assert rows[2][2] == "0.0123456789"
    assert rows[3][3] == "0"
    assert rows[3][11] == "sad|cnn-pyramid"


def test_decisions_csv_roundtrip(tmp_path, decisions):
    path = tmp_path / "decisions.csv"
    write_decisions_csv(path, decisions, CHANNELS)
    loaded = read_decisions_csv(path)
    assert len(loaded) == 3
    for src, back in zip(decisions, loaded):
        assert back.frame_id == src.frame_id
        assert back.template_id == src.template_id
        assert back.accepted == src.accepted
        assert back.bests == src.bests
        assert back.seq_len == src.seq_len
        assert back.excluded_channel == src.excluded_channel
        np.testing.assert_allclose(back.quality, src.quality, rtol=1e-8)
        assert back.template_index == -1  # not serialized
        assert back.degenerate == ()


def test_decisions_csv_validation(tmp_path, decisions):
    with pytest.raises(ValueError, match="channel count"):
        write_decisions_csv(tmp_path / "bad.csv", decisions, ["sad"])
    short = tmp_path / "short.csv"
    short.write_text("frame_id,template_id\n1,2\n")
    with pytest.raises(ValueError, match="missing decision columns"):
        read_decisions_csv(short)
    empty = tmp_path / "empty.csv"
    empty.write_text("frame_id,template_id,quality,accepted\n")
    with pytest.raises(ValueError, match="no decision rows"):
        read_decisions_csv(empty)


def test_pr_csv_and_summary(tmp_path):
    curve = PRCurve(thresholds=(0.01, 0.02), precisions=(1.0, 0.5),
                    recalls=(0.5, 1.0))
    path = tmp_path / "pr.csv"
    write_pr_csv(path, curve)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["threshold", "precision", "recall"]
    assert rows[1] == ["0.01", "1", "0.5"]
    assert rows[2] == ["0.02", "0.5", "1"]

    summary = curve_summary(curve)
    assert summary["max_f1"] == pytest.approx(2 / 3)
    assert summary["recall_at_100_precision"] == 0.5
    assert summary["n_thresholds"] == 2

    out = tmp_path / "summary.json"
    write_summary_json(out, summary)
    assert json.loads(out.read_text()) == summary


def test_figures_render_to_files(tmp_path, decisions):
    curve = PRCurve(thresholds=(0.01, 0.02), precisions=(1.0, 0.5),
                    recalls=(0.5, 1.0))
    pr_png = tmp_path / "pr.png"
    timeline_png = tmp_path / "timeline.png"
    trace_png = tmp_path / "trace.png"
    plot_pr_curves(pr_png, {"fused": curve, "solo": curve})
    plot_quality_timeline(timeline_png, decisions, theta_a=0.05)
    plot_match_trace(trace_png, decisions)
    for png in (pr_png, timeline_png, trace_png):
        data = png.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 1000
