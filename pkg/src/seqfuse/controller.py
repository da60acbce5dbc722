"""Rolling-window sequence localization.

The :class:`SequenceLocalizer` consumes one set of per-channel distance
columns per query frame, votes away the worst channel, fuses the survivors
into a log-emission column, and decodes the best template path over a
window whose start is chosen dynamically from the quality-score history.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .fusion import (TransitionModel, VoteRecord, averaged_path_quality,
                     build_emission_column, column_quality,
                     dynamic_sequence_start, normalize_observation,
                     viterbi_decode, vote_exclude_channel)


@dataclass(frozen=True)
class MatchDecision:
    """Outcome of localizing a single query frame.

    ``template_index`` is the 0-based database row the decoded path ends at;
    ``template_id`` is that row's original reference frame id. ``quality``
    is the path-averaged quality ratio (lower is better) and ``accepted``
    means it cleared the acceptance threshold.
    """

    frame_id: int
    template_index: int
    template_id: int
    quality: float
    accepted: bool
    seq_start_frame: int
    seq_len: int
    excluded_channel: int | None
    ambiguous: bool
    bests: tuple[int, ...]
    degenerate: tuple[bool, ...]


@dataclass(frozen=True)
class _FrameRecord:
    frame_id: int
    bests: tuple[int, ...]
    vote: VoteRecord | None
    emission: np.ndarray
    quality: float
    degenerate: tuple[bool, ...]


class SequenceLocalizer:
    """Stateful per-frame localizer over a fixed template database.

    Parameters mirror the pipeline configuration: ``o_thresh`` may be a
    scalar or a per-channel sequence. With ``dynamic`` false the window is
    simply the last ``tau`` frames (capped by what has been seen).
    """

    def __init__(self, template_ids, n_channels: int, *,
                 o_thresh=0.5, epsilon: float = 0.001, q_t: float = 0.1,
                 window: int = 10, s_min: int = 5, s_max: int = 20,
                 v_min: int = 0, v_max: int = 5, theta_a: float = 0.05,
                 mpf: bool = True, vote_mode: str = "median",
                 dynamic: bool = True, tau: int | None = None):
        self.template_ids = [int(t) for t in template_ids]
        n = len(self.template_ids)
        if n <= 2 * window + 1:
            raise ValueError(
                f"database of {n} templates is too small for quality window "
                f"half-width {window} (need N > {2 * window + 1})")
        if n_channels < 1:
            raise ValueError("need at least one channel")
        if not 0 < s_min <= s_max:
            raise ValueError(f"bad sequence bounds [{s_min}, {s_max}]")
        self.n_templates = n
        self.n_channels = n_channels
        if np.ndim(o_thresh) == 0:
            o_thresh = [float(o_thresh)] * n_channels
        if len(o_thresh) != n_channels:
            raise ValueError("per-channel threshold list length mismatch")
        self.o_thresh = [float(t) for t in o_thresh]
        self.epsilon = float(epsilon)
        self.q_t = float(q_t)
        self.window = int(window)
        self.s_min = int(s_min)
        self.s_max = int(s_max)
        self.theta_a = float(theta_a)
        self.mpf = bool(mpf)
        self.vote_mode = vote_mode
        self.dynamic = bool(dynamic)
        self.tau = int(tau) if tau is not None else int(s_max)
        if self.tau < 1:
            raise ValueError("fixed sequence length must be positive")
        self.model = TransitionModel(v_min=v_min, v_max=v_max,
                                     log_miss=float(np.log(self.epsilon)))
        self._records: deque[_FrameRecord] = deque(maxlen=self.s_max)
        self.last_result = None  # ViterbiResult of the most recent decode

    def push(self, frame_id: int, distance_columns) -> MatchDecision:
        """Ingest one query frame's per-channel distance columns and decide."""
        cols = [np.asarray(c, dtype=np.float64) for c in distance_columns]
        if len(cols) != self.n_channels:
            raise ValueError(f"expected {self.n_channels} distance columns, got {len(cols)}")
        for c in cols:
            if c.shape != (self.n_templates,):
                raise ValueError(
                    f"distance column shape {c.shape} does not cover "
                    f"{self.n_templates} templates")

        bests = tuple(int(c.argmin()) for c in cols)
        vote = None
        excluded = None
        if self.mpf and self.n_channels >= 3:
            vote = vote_exclude_channel(bests, mode=self.vote_mode)
            excluded = vote.excluded

        obs, degenerate = [], []
        for ch, c in enumerate(cols):
            o, degen = normalize_observation(c, self.o_thresh[ch], self.epsilon)
            obs.append(o)
            degenerate.append(degen)
        contributing = [o for ch, o in enumerate(obs) if ch != excluded]
        emission = build_emission_column(contributing)
        quality = column_quality(emission, self.window)

        self._records.append(_FrameRecord(
            frame_id=frame_id, bests=bests, vote=vote, emission=emission,
            quality=quality, degenerate=tuple(degenerate)))

        start = self._window_start()
        records = list(self._records)[start:]
        e_window = np.stack([r.emission for r in records], axis=1)
        result = viterbi_decode(e_window, self.model)
        self.last_result = result
        avg_q = averaged_path_quality(e_window, result.path, self.window)
        k = result.path[-1]
        return MatchDecision(
            frame_id=frame_id,
            template_index=k,
            template_id=self.template_ids[k],
            quality=avg_q,
            accepted=avg_q <= self.theta_a,
            seq_start_frame=records[0].frame_id,
            seq_len=len(records),
            excluded_channel=excluded,
            ambiguous=bool(vote.ambiguous) if vote is not None else False,
            bests=bests,
            degenerate=tuple(degenerate))

    def _window_start(self) -> int:
        if not self.dynamic:
            return max(0, len(self._records) - self.tau)
        if len(self._records) < self.s_max:
            return 0
        history = np.array([r.quality for r in self._records])
        return dynamic_sequence_start(history, self.s_min, self.s_max, self.q_t)

    def reset(self) -> None:
        """Forget all window state (template database is retained)."""
        self._records.clear()
        self.last_result = None
