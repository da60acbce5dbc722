"""Delimited output and figure rendering for the command-line reports.

The decisions CSV (schema v1, documented in the README) carries one row
per query frame with the per-channel single-frame hypotheses alongside the
sequence decision, so ranking behavior over time can be reconstructed
offline. Figures are rendered headless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .controller import MatchDecision  # noqa: E402
from .evaluation import PRCurve  # noqa: E402

DECISIONS_SCHEMA = 1
_FIXED_FIELDS = ["frame_id", "template_id", "quality", "accepted",
                 "seq_start", "seq_len", "excluded_channel", "ambiguous"]


def write_decisions_csv(path: str | Path, decisions: list[MatchDecision],
                        channel_names: list[str]) -> None:
    """One row per query frame; per-channel best-template columns appended."""
    path = Path(path)
    header = _FIXED_FIELDS + [f"best_{name}" for name in channel_names] \
        + ["degenerate_channels"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for d in decisions:
            if len(d.bests) != len(channel_names):
                raise ValueError("decision channel count does not match names")
            degen = "|".join(name for name, flag in zip(channel_names, d.degenerate)
                             if flag)
            writer.writerow([
                d.frame_id, d.template_id, f"{d.quality:.9g}", int(d.accepted),
                d.seq_start_frame, d.seq_len,
                "" if d.excluded_channel is None else channel_names[d.excluded_channel],
                int(d.ambiguous), *d.bests, degen])


def read_decisions_csv(path: str | Path) -> list[MatchDecision]:
    """Rehydrate decisions (evaluation needs ids, quality, and the flag)."""
    path = Path(path)
    out: list[MatchDecision] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"frame_id", "template_id", "quality", "accepted"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path.name}: missing decision columns {sorted(missing)}")
        best_cols = [c for c in reader.fieldnames if c.startswith("best_")]
        for row in reader:
            excluded = row.get("excluded_channel", "")
            if excluded:
                names = [c[len("best_"):] for c in best_cols]
                excluded_idx = names.index(excluded) if excluded in names else None
            else:
                excluded_idx = None
            out.append(MatchDecision(
                frame_id=int(row["frame_id"]),
                template_index=-1,
                template_id=int(row["template_id"]),
                quality=float(row["quality"]),
                accepted=bool(int(row["accepted"])),
                seq_start_frame=int(row.get("seq_start", -1) or -1),
                seq_len=int(row.get("seq_len", 0) or 0),
                excluded_channel=excluded_idx,
                ambiguous=bool(int(row.get("ambiguous", 0) or 0)),
                bests=tuple(int(row[c]) for c in best_cols),
                degenerate=()))
    if not out:
        raise ValueError(f"{path.name}: no decision rows")
    return out


def write_pr_csv(path: str | Path, curve: PRCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "precision", "recall"])
        for t, p, r in zip(curve.thresholds, curve.precisions, curve.recalls):
            writer.writerow([f"{t:.9g}", f"{p:.9g}", f"{r:.9g}"])


def write_summary_json(path: str | Path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def curve_summary(curve: PRCurve) -> dict:
    return {"max_f1": curve.max_f1,
            "recall_at_100_precision": curve.recall_at_full_precision,
            "n_thresholds": len(curve.thresholds)}


def plot_pr_curves(path: str | Path, curves: dict[str, PRCurve],
                   title: str = "Precision-recall") -> None:
    """Overlay one PR curve per labeled run."""
    fig, ax = plt.subplots(figsize=(6, 5))
    for label, curve in curves.items():
        ax.plot(curve.recalls, curve.precisions, marker=".", markersize=3,
                linewidth=1.2, label=f"{label} (F1 {curve.max_f1:.3f})")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_quality_timeline(path: str | Path, decisions: list[MatchDecision],
                          theta_a: float | None = None) -> None:
    """Averaged quality per frame with accepted frames marked."""
    frames = [d.frame_id for d in decisions]
    quality = [d.quality for d in decisions]
    accepted = [d.frame_id for d in decisions if d.accepted]
    acc_q = [d.quality for d in decisions if d.accepted]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(frames, quality, linewidth=0.9, color="tab:blue", label="quality")
    ax.scatter(accepted, acc_q, s=12, color="tab:green", zorder=3, label="accepted")
    if theta_a is not None:
        ax.axhline(theta_a, color="tab:red", linewidth=0.8, linestyle="--",
                   label=f"threshold {theta_a:g}")
    ax.set_yscale("log")
    ax.set_xlabel("Query frame")
    ax.set_ylabel("Averaged quality (lower is better)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_match_trace(path: str | Path, decisions: list[MatchDecision]) -> None:
    """Matched template index per frame, split by accept/reject."""
    fig, ax = plt.subplots(figsize=(8, 4))
    acc = [(d.frame_id, d.template_id) for d in decisions if d.accepted]
    rej = [(d.frame_id, d.template_id) for d in decisions if not d.accepted]
    if rej:
        ax.scatter(*zip(*rej), s=6, color="lightgray", label="rejected")
    if acc:
        ax.scatter(*zip(*acc), s=6, color="tab:blue", label="accepted")
    ax.set_xlabel("Query frame")
    ax.set_ylabel("Matched template")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
