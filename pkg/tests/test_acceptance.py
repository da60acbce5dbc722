"""Acceptance gate: one test per headline criterion.

Each test prints a single verdict line with the measured values next to the
required bound, then asserts the bound. Criteria that need external
full-scale datasets are skipped with the reason stated.
"""

import time

import numpy as np
import pytest

from seqfuse.config import RunConfig
from seqfuse.controller import SequenceLocalizer
from seqfuse.descriptors import KeypointSet, keypoint_distance
from seqfuse.evaluation import (fusion_benefit_world, generate_synthetic,
                                latency_world, localizer_kwargs_from_config,
                                run_synthetic, sweep_pr)
from seqfuse.fusion import (EPSILON, TransitionModel, _step_banded,
                            _step_naive, brute_force_decode,
                            normalize_observation, viterbi_decode,
                            vote_exclude_channel)


def _verdict(label: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


# ---------------------------------------------------------------------------
# Decoder vs exhaustive oracle
# ---------------------------------------------------------------------------

def test_decoder_matches_exhaustive_oracle():
    """500 seeded instances, N <= 8, tau <= 5: terminal score and decoded
    path equal exhaustive enumeration bitwise; runtime < 10 s."""
    rng = np.random.default_rng(0)
    model = TransitionModel()
    start = time.perf_counter()
    checked = 0
    for i in range(500):
        if i < 470:
            n, tau = int(rng.integers(2, 8)), int(rng.integers(1, 5))
        else:
            n, tau = 8, 5  # envelope corner
        if i % 2:
            e = rng.normal(size=(n, tau))
        else:
            e = rng.integers(-3, 3, size=(n, tau)).astype(float)  # ties
        result = viterbi_decode(e, model)
        oracle_path, oracle_score = brute_force_decode(e, model)
        assert result.score == oracle_score
        assert result.path == oracle_path
        # the decoded path attains the reported score under the same
        # left-to-right accumulation
        s = e[result.path[0], 0]
        for t in range(1, tau):
            s = (s + model.term(result.path[t - 1], result.path[t])) \
                + e[result.path[t], t]
        assert s == result.score
        checked += 1
    elapsed = time.perf_counter() - start
    ok = checked == 500 and elapsed < 10.0
    _verdict("decoder-oracle", ok,
             f"{checked}/500 instances bitwise-equal in {elapsed:.2f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------------------
# Observation normalization properties
# ---------------------------------------------------------------------------

def test_observation_normalization_properties():
    """1000 random distance vectors: output within [0.001, 0.999], argmax
    preserved, flooring exactly where the raw value falls below the
    threshold; constant vectors degenerate to all-epsilon. Runtime < 1 s."""
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(1000):
        n = int(rng.integers(2, 50))
        d = rng.uniform(0, 10, size=n) * float(rng.uniform(0.1, 5))
        if d.max() == d.min():  # pragma: no cover - measure-zero draw
            continue
        o_thresh = float(rng.uniform(0, 0.9))
        values, degenerate = normalize_observation(d, o_thresh=o_thresh)
        assert not degenerate
        assert values.min() >= EPSILON and values.max() <= 1 - EPSILON
        assert int(values.argmax()) == int(d.argmin())
        raw = (d.max() - d) / (d.max() - d.min()) - EPSILON
        floored = (raw < o_thresh) | (raw < EPSILON)
        np.testing.assert_array_equal(values == EPSILON, floored)
        np.testing.assert_array_equal(values[~floored], raw[~floored])
    const, degenerate = normalize_observation(np.full(7, 3.3))
    assert degenerate and np.all(const == EPSILON)
    elapsed = time.perf_counter() - start
    ok = elapsed < 1.0
    _verdict("observation-normalization", ok,
             f"1000 vectors in range with exact flooring in {elapsed:.3f}s (< 1s)")
    assert ok


# ---------------------------------------------------------------------------
# Keypoint metric properties
# ---------------------------------------------------------------------------

def _random_keypoints(rng, n_maps, h, w):
    coords = np.stack([rng.integers(0, w, size=n_maps),
                       rng.integers(0, h, size=n_maps)], axis=1)
    return KeypointSet(coords=coords.astype(np.int64), map_height=h, map_width=w)


def test_keypoint_metric_properties():
    """Symmetry, identity of indiscernibles, and the triangle inequality
    over 1000 random keypoint-set triples; the 3-4-5 case gives 5.0."""
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n_maps = int(rng.integers(1, 9))
        h, w = int(rng.integers(2, 14)), int(rng.integers(2, 14))
        a, b, c = (_random_keypoints(rng, n_maps, h, w) for _ in range(3))
        ab, ba = keypoint_distance(a, b), keypoint_distance(b, a)
        assert ab == ba
        assert keypoint_distance(a, a) == 0.0
        assert (ab == 0.0) == bool(np.array_equal(a.coords, b.coords))
        assert keypoint_distance(a, c) <= ab + keypoint_distance(b, c) + 1e-12
    p = KeypointSet(coords=np.array([[0, 0]]), map_height=6, map_width=6)
    q = KeypointSet(coords=np.array([[3, 4]]), map_height=6, map_width=6)
    err = abs(keypoint_distance(p, q) - 5.0)
    ok = err <= 1e-12
    _verdict("keypoint-metric", ok,
             f"1000 triples symmetric/triangular, 3-4-5 error {err:.1e} (<= 1e-12)")
    assert ok


# ---------------------------------------------------------------------------
# Banded transition update vs naive
# ---------------------------------------------------------------------------

def test_banded_update_matches_naive():
    """Banded predecessor maximization equals the O(N^2) update exactly on
    100 random instances with N <= 64."""
    rng = np.random.default_rng(3)
    for i in range(100):
        n = int(rng.integers(2, 65)) if i else 64  # pin the envelope once
        v_max = int(rng.integers(0, 8))
        v_min = int(rng.integers(0, v_max + 1))
        model = TransitionModel(v_min=v_min, v_max=v_max)
        if i % 3 == 0:
            prev = rng.integers(-5, 5, size=n).astype(float)  # forced ties
        else:
            prev = rng.normal(size=n) * float(rng.uniform(0.5, 20))
        scores_b, args_b = _step_banded(prev, model)
        scores_n, args_n = _step_naive(prev, model)
        np.testing.assert_array_equal(scores_b, scores_n)
        np.testing.assert_array_equal(args_b, args_n)
    _verdict("banded-update", True,
             "100/100 instances (N <= 64) bitwise-equal scores and argmaxes")


# ---------------------------------------------------------------------------
# Fusion benefit benchmark
# ---------------------------------------------------------------------------

def test_fusion_outperforms_single_channels():
    """Four channels with disjoint 25% corruption quarters over 400
    templates: fused max F1 >= 0.95 while every single channel stays at
    <= 0.85. Runtime < 60 s."""
    start = time.perf_counter()
    world = fusion_benefit_world(seed=0)
    data = generate_synthetic(world)
    kwargs = localizer_kwargs_from_config(RunConfig())
    fused_f1 = sweep_pr(run_synthetic(data, **kwargs), data.gt).max_f1
    single_f1 = [
        sweep_pr(run_synthetic(data, channel_subset=[c], **kwargs),
                 data.gt).max_f1
        for c in range(world.n_channels)
    ]
    elapsed = time.perf_counter() - start
    ok = fused_f1 >= 0.95 and max(single_f1) <= 0.85 and elapsed < 60.0
    singles = ", ".join(f"{f:.4f}" for f in single_f1)
    _verdict("fusion-benefit", ok,
             f"fused F1 {fused_f1:.4f} (>= 0.95), singles [{singles}] "
             f"(each <= 0.85) in {elapsed:.1f}s (< 60s)")
    assert fused_f1 >= 0.95
    assert max(single_f1) <= 0.85
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# Relocalization latency
# ---------------------------------------------------------------------------

def test_dynamic_window_shortens_relocalization_latency():
    """Familiar -> 30 unfamiliar frames -> familiar: the dynamic window
    accepts within 7 frames of re-entry; a fixed 20-frame window needs
    at least 18."""
    world = latency_world(seed=0)
    data = generate_synthetic(world)
    reentry = world.novel[0][1]
    kwargs = localizer_kwargs_from_config(RunConfig())

    def latency(decisions):
        for t in range(reentry, data.n_queries):
            if decisions[t].accepted:
                return t - reentry
        return data.n_queries - reentry

    dynamic = latency(run_synthetic(data, **kwargs))
    fixed = latency(run_synthetic(data, **{**kwargs, "dynamic": False,
                                           "tau": 20}))
    ok = dynamic <= 7 and fixed >= 18
    _verdict("relocalization-latency", ok,
             f"dynamic {dynamic} frames (<= 7), fixed-window {fixed} (>= 18)")
    assert dynamic <= 7
    assert fixed >= 18


# ---------------------------------------------------------------------------
# Channel voting
# ---------------------------------------------------------------------------

def test_channel_voting_behavior():
    """The documented outlier is excluded; with all channels agreeing the
    fused decision equals a no-voting run; exactly one exclusion per frame
    whenever three or more channels vote."""
    outlier = vote_exclude_channel((100, 102, 101, 500)).excluded == 3

    rng = np.random.default_rng(4)
    refs = rng.normal(size=(40, 32))
    refs /= np.linalg.norm(refs, axis=1, keepdims=True)
    noisy = [refs + 0.1 * rng.normal(size=refs.shape) for _ in range(3)]
    noisy = [m / np.linalg.norm(m, axis=1, keepdims=True) for m in noisy]

    with_vote = SequenceLocalizer(range(40), 3, mpf=True)
    without = SequenceLocalizer(range(40), 3, mpf=False)
    agree = one_each = True
    for t in range(40):
        cols = [1.0 - refs @ nm[t] for nm in noisy]
        dv, dn = with_vote.push(t, cols), without.push(t, [c.copy() for c in cols])
        agree &= (dv.template_index == dn.template_index
                  and dv.accepted == dn.accepted)
        one_each &= dv.excluded_channel in (0, 1, 2) and dn.excluded_channel is None
    ok = outlier and agree and one_each
    _verdict("channel-voting", ok,
             "outlier [100,102,101,500] -> channel 3; all-agree decisions "
             "match the no-voting run; one exclusion per frame with >= 3 channels")
    assert outlier
    assert agree
    assert one_each


# ---------------------------------------------------------------------------
# Full-scale dataset reproduction (optional)
# ---------------------------------------------------------------------------

def test_full_scale_dataset_benchmarks():
    """Recall at 100% precision on full seasonal/day-night traverses needs
    the original frame sets plus extracted CNN tensors."""
    _verdict("full-scale-benchmarks", True,
             "SKIP: multi-thousand-frame traverses and pretrained-CNN "
             "tensors are not bundled with this repository")
    pytest.skip("full-scale traverses and extracted CNN tensors not available")
