"""Observation normalization, transition model, and sequence decoding.

Distance columns from each channel are rescaled into normalized observation
columns, fused into a log-emission matrix, and decoded against a banded
transition model with a Viterbi variant that drops the initial-probability
term. Also houses the match-quality ratios, the dynamic sequence-start
selection, and the per-frame channel voting rule.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

EPSILON = 0.001
LOG_EPSILON = math.log(EPSILON)  # -6.907755278982137


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationColumn:
    """Normalized similarity of one query frame against all templates for
    one channel. ``degenerate`` marks an uninformative (constant-distance)
    source column."""

    values: np.ndarray
    channel_id: int
    query_index: int
    degenerate: bool = False


def normalize_observation(dist: np.ndarray, o_thresh: float = 0.5,
                          eps: float = EPSILON) -> tuple[np.ndarray, bool]:
    """Rescale a distance column into (eps, 0.999] similarities.

    The column is mapped by (max-d)/(max-min) - eps, then every value below
    ``o_thresh`` is floored to ``eps``. Returns the column and a degenerate
    flag; a constant input column has no information and comes back as all
    ``eps`` with the flag set.
    """
    d = np.asarray(dist, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise ValueError(f"need a distance vector of length >= 2, got shape {d.shape}")
    if not np.isfinite(d).all():
        raise ValueError("distance column contains non-finite values")
    if not 0.0 <= o_thresh <= 1.0 - eps:
        raise ValueError(f"observation threshold {o_thresh} outside [0, {1.0 - eps}]")
    lo, hi = d.min(), d.max()
    if hi == lo:
        return np.full(d.shape, eps), True
    v = (hi - d) / (hi - lo) - eps
    v = np.where(v < o_thresh, eps, v)
    # if o_thresh < eps a small positive value can survive the floor above
    return np.maximum(v, eps), False


def build_emission_column(obs_columns: list[np.ndarray]) -> np.ndarray:
    """Sum of natural logs of the contributing observation columns."""
    if not obs_columns:
        raise ValueError("no contributing observation columns")
    n = obs_columns[0].shape[0]
    out = np.zeros(n)
    for col in obs_columns:
        col = np.asarray(col, dtype=np.float64)
        if col.shape != (n,):
            raise ValueError("observation columns disagree on template count")
        if (col <= 0).any() or (col > 1).any():
            raise ValueError("observation values must lie in (0, 1]")
        out += np.log(col)
    return out


# ---------------------------------------------------------------------------
# Transition model and decoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransitionModel:
    """Velocity band [v_min, v_max] template steps at log-score 0;
    everything else pays ``log_miss``."""

    v_min: int = 0
    v_max: int = 5
    log_miss: float = LOG_EPSILON

    def __post_init__(self):
        if self.v_min > self.v_max:
            raise ValueError(f"v_min {self.v_min} exceeds v_max {self.v_max}")
        if not self.log_miss < 0:
            raise ValueError("out-of-band penalty must be negative")

    def term(self, k_prev: int, k_next: int) -> float:
        """Log transition score for a template step k_prev -> k_next."""
        return 0.0 if self.v_min <= k_next - k_prev <= self.v_max else self.log_miss


def transition_term(k_prev: int, k_next: int,
                    model: TransitionModel | None = None) -> float:
    return (model or TransitionModel()).term(k_prev, k_next)


@dataclass(frozen=True)
class ViterbiResult:
    """Decoded template path with the score and backpointer matrices kept
    for quality scoring and debugging."""

    path: tuple[int, ...]
    score: float
    d_matrix: np.ndarray = field(repr=False)
    h_matrix: np.ndarray = field(repr=False)


def _step_naive(prev: np.ndarray, model: TransitionModel) -> tuple[np.ndarray, np.ndarray]:
    """O(N^2) predecessor maximization; argmax ties to the smallest index."""
    n = prev.shape[0]
    scores = np.empty(n)
    args = np.empty(n, dtype=np.intp)
    offsets = np.arange(n)[:, None] - np.arange(n)[None, :]  # k_next - k_prev
    trans = np.where((offsets >= model.v_min) & (offsets <= model.v_max),
                     0.0, model.log_miss)
    cand = prev[None, :] + trans
    args[:] = cand.argmax(axis=1)
    scores[:] = cand[np.arange(n), args]
    return scores, args


def _running_argmax(values: np.ndarray, keep_ties: bool) -> tuple[np.ndarray, np.ndarray]:
    """Running maxima of a 1-D array with the index each was first reached.

    With ``keep_ties`` False a later equal value takes over the index (used
    on reversed arrays so the smallest original index survives ties).
    """
    n = values.shape[0]
    run = np.maximum.accumulate(values)
    before = np.concatenate(([-np.inf], run[:-1]))
    improved = values > before if keep_ties else values >= before
    marks = np.where(improved, np.arange(n), -1)
    return run, np.maximum.accumulate(marks)


def _step_banded(prev: np.ndarray, model: TransitionModel) -> tuple[np.ndarray, np.ndarray]:
    """Banded predecessor maximization.

    For each successor only the in-band predecessor window is examined; the
    out-of-band contribution comes from prefix/suffix running maxima, so
    the whole update is O(N * band) instead of O(N^2). Must agree with
    :func:`_step_naive` exactly, tie-breaks included.
    """
    n = prev.shape[0]
    v_min, v_max = model.v_min, model.v_max
    band = v_max - v_min + 1
    k = np.arange(n)

    # prefix max over [0..j] (smallest index on ties) and suffix max over
    # [j..n-1] (also smallest index: computed on the reversed array with
    # later-equal-takes-over so the leftmost original index wins)
    pref_val, pref_arg = _running_argmax(prev, keep_ties=True)
    rev_val, rev_arg = _running_argmax(prev[::-1], keep_ties=False)
    suf_val, suf_arg = rev_val[::-1], (n - 1 - rev_arg)[::-1]

    # in-band: sliding max over prev[k-v_max .. k-v_min], left-padded so the
    # window is positionally aligned; argmax picks the first (smallest j)
    pad_left, pad_right = v_max, max(0, -v_min)
    padded = np.concatenate([np.full(pad_left, -np.inf), prev,
                             np.full(pad_right, -np.inf)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, band)[:n]
    in_off = windows.argmax(axis=1)
    in_val = windows[k, in_off] + 0.0  # normalize -0.0 like the naive sum
    in_arg = k - v_max + in_off
    in_ok = (in_val > -np.inf) & (in_arg >= 0) & (in_arg <= n - 1)

    # out-of-band: prefix part [0 .. k-v_max-1] and suffix part [k-v_min+1 ..]
    li = k - v_max - 1
    left_ok = li >= 0
    left_val = np.where(left_ok, pref_val[np.clip(li, 0, n - 1)], -np.inf)
    left_arg = np.where(left_ok, pref_arg[np.clip(li, 0, n - 1)], -1)
    ri = k - v_min + 1
    right_ok = (ri <= n - 1) & (ri >= 0)
    right_val = np.where(right_ok, suf_val[np.clip(ri, 0, n - 1)], -np.inf)
    right_arg = np.where(right_ok, suf_arg[np.clip(ri, 0, n - 1)], -1)
    empty_band = ~in_ok  # k < v_min (or everything padded): all out of band
    out_val = np.where(empty_band, pref_val[n - 1],
                       np.where(left_val >= right_val, left_val, right_val))
    out_arg = np.where(empty_band, pref_arg[n - 1],
                       np.where(left_val >= right_val, left_arg, right_arg))
    out_score = np.where(out_arg >= 0, out_val + model.log_miss, -np.inf)

    take_in = in_ok & ((in_val > out_score)
                       | ((in_val == out_score) & (in_arg < out_arg)))
    scores = np.where(take_in, in_val, out_score)
    args = np.where(take_in, in_arg, out_arg).astype(np.intp)
    return scores, args


def viterbi_decode(emissions: np.ndarray, model: TransitionModel | None = None,
                   banded: bool = True) -> ViterbiResult:
    """Best template path through an (N, tau) log-emission matrix.

    The score matrix starts from the first emission column directly (no
    initial state distribution). All argmax ties, including the terminal
    one, break to the smallest template index.
    """
    model = model or TransitionModel()
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
        raise ValueError(f"emission matrix must be (N, tau) nonempty, got {e.shape}")
    if not np.isfinite(e).all():
        raise ValueError("emission matrix contains non-finite entries")
    n, tau = e.shape
    step = _step_banded if banded else _step_naive
    d = np.empty((n, tau))
    h = np.full((n, tau), -1, dtype=np.intp)
    d[:, 0] = e[:, 0]
    for i in range(1, tau):
        scores, args = step(d[:, i - 1], model)
        d[:, i] = scores + e[:, i]
        h[:, i] = args
    k = int(d[:, tau - 1].argmax())
    path = [0] * tau
    path[tau - 1] = k
    for i in range(tau - 1, 0, -1):
        k = int(h[k, i])
        path[i - 1] = k
    return ViterbiResult(path=tuple(path), score=float(d[path[-1], tau - 1]),
                         d_matrix=d, h_matrix=h)


def brute_force_decode(emissions: np.ndarray,
                       model: TransitionModel | None = None) -> tuple[tuple[int, ...], float]:
    """Exhaustive search over all N^tau paths.

    Accumulates each path score left to right, (score + transition) + emission,
    matching the decoder's arithmetic term for term so scores compare exactly.
    Candidate paths are visited in ascending order of the reversed path, which
    reproduces the decoder's tie-breaking.
    """
    model = model or TransitionModel()
    e = np.asarray(emissions, dtype=np.float64)
    n, tau = e.shape
    best_path, best_score = None, -np.inf
    for rev in itertools.product(range(n), repeat=tau):
        path = rev[::-1]
        s = e[path[0], 0]
        for i in range(1, tau):
            s = (s + model.term(path[i - 1], path[i])) + e[path[i], i]
        if s > best_score:
            best_score, best_path = s, path
    return tuple(best_path), float(best_score)


# ---------------------------------------------------------------------------
# Quality scores
# ---------------------------------------------------------------------------

def column_quality(e_col: np.ndarray, w: int) -> float:
    """Peak-to-runner-up ratio of a log-emission column.

    Q = best / (largest value more than ``w`` indices from the best). Both
    are negative logs, so Q lies in (0, 1] and smaller means the peak is
    more distinctive. A flat column scores exactly 1.
    """
    e = np.asarray(e_col, dtype=np.float64)
    if e.ndim != 1:
        raise ValueError(f"expected a column vector, got shape {e.shape}")
    n = e.shape[0]
    if n <= 2 * w + 1:
        raise ValueError(f"column of {n} templates is swallowed by window half-width {w}")
    b = int(e.argmax())
    return _ratio_outside(e, b, b, w)


def path_point_quality(e_col: np.ndarray, k: int, w: int) -> float:
    """Like :func:`column_quality` but anchored at a decoded path entry.

    The numerator is the column value at index ``k`` (which need not be the
    column maximum, so the ratio can exceed 1); the denominator is the
    largest value more than ``w`` indices away from ``k``.
    """
    e = np.asarray(e_col, dtype=np.float64)
    n = e.shape[0]
    if n <= 2 * w + 1:
        raise ValueError(f"column of {n} templates is swallowed by window half-width {w}")
    if not 0 <= k < n:
        raise ValueError(f"path index {k} outside [0, {n})")
    return _ratio_outside(e, k, k, w)


def _ratio_outside(e: np.ndarray, num_idx: int, center: int, w: int) -> float:
    n = e.shape[0]
    lo, hi = center - w, center + w
    outside = np.concatenate([e[:max(lo, 0)], e[hi + 1:]])
    if outside.size == 0:
        raise ValueError("window covers the entire column")
    e_num = e[num_idx]
    e_next = outside.max()
    if e_num == e_next:
        return 1.0
    return float(e_num / e_next)


def averaged_path_quality(emissions: np.ndarray, path: tuple[int, ...], w: int) -> float:
    """Mean of per-column path-point qualities along a decoded path."""
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] != len(path):
        raise ValueError("path length must equal the emission column count")
    vals = [path_point_quality(e[:, i], path[i], w) for i in range(len(path))]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Dynamic sequence start
# ---------------------------------------------------------------------------

def dynamic_sequence_start(quality_history: np.ndarray, s_min: int, s_max: int,
                           q_t: float) -> int:
    """Index into the rolling quality history where the sequence should begin.

    Looks for the most negative backward difference among start positions
    that would leave a sequence of s_min..s_max frames. A drop of at least
    ``q_t`` wins; otherwise 0 (the full window). A history shorter than
    ``s_max`` always yields 0.
    """
    q = np.asarray(quality_history, dtype=np.float64)
    if q.ndim != 1:
        raise ValueError(f"quality history must be 1-D, got shape {q.shape}")
    if not 0 < s_min <= s_max:
        raise ValueError(f"bad sequence bounds [{s_min}, {s_max}]")
    if q.shape[0] < s_max:
        return 0
    if q.shape[0] > s_max:
        raise ValueError(f"history of {q.shape[0]} exceeds the window of {s_max}")
    delta = np.diff(q)  # delta[p-1] = q[p] - q[p-1]
    hi = s_max - s_min  # start p leaves s_max - p frames
    if hi < 1:
        return 0
    eligible = delta[:hi]  # starts p = 1 .. s_max - s_min
    p = int(eligible.argmin()) + 1
    q_roc = eligible[p - 1]
    return p if q_roc <= -q_t else 0


# ---------------------------------------------------------------------------
# Channel voting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VoteRecord:
    """Per-frame channel consensus outcome. ``excluded`` is None when fewer
    than three channels vote; ``ambiguous`` marks total disagreement (all
    deviations from consensus equal and nonzero)."""

    bests: tuple[int, ...]
    consensus: float
    excluded: int | None
    ambiguous: bool


def vote_exclude_channel(single_frame_bests, mode: str = "median") -> VoteRecord:
    """Drop the channel whose single-frame hypothesis strays furthest from
    the consensus template index.

    Consensus is the median (or mean) of the per-channel best indices.
    Exactly one channel is excluded when three or more vote; ties break to
    the lowest channel id. With one or two channels nothing is excluded.
    """
    bests = tuple(int(b) for b in single_frame_bests)
    if not bests:
        raise ValueError("no channel hypotheses to vote on")
    if mode not in ("median", "mean"):
        raise ValueError(f"unknown vote mode {mode!r}")
    arr = np.asarray(bests, dtype=np.float64)
    consensus = float(np.median(arr) if mode == "median" else arr.mean())
    if len(bests) < 3:
        return VoteRecord(bests=bests, consensus=consensus, excluded=None,
                          ambiguous=False)
    dev = np.abs(arr - consensus)
    excluded = int(dev.argmax())
    ambiguous = bool(np.all(dev == dev[0]) and dev[0] > 0)
    return VoteRecord(bests=bests, consensus=consensus, excluded=excluded,
                      ambiguous=ambiguous)
