import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspbci.classify_lda import CspOvrLda
from graspbci.emg_gating import (GatingConfig, RmsEnvelope, ThresholdSpec, _first_held_run,
                                 apply_segments, choose_length_prepared, choose_segment_length,
                                 decide_segments, detect_onset, detect_trial_onsets, gate_trials,
                                 rms_envelope, select_segment)
from graspbci.errors import BadLength, UnknownChannel, WindowTooLarge
from graspbci.preprocess import epoch
from graspbci.synthgen import SynthSpec, gen_session


def brute_force_first_run(above, h):
    """Smallest i with above[i:i+h] all true, by exhaustive scan."""
    for i in range(len(above) - h + 1):
        if all(above[i:i + h]):
            return i
    return None


def env(values, hop=0.05, win=0.2, t_first=0.1):
    return RmsEnvelope(np.asarray(values, dtype=float), hop, win, t_first)


def test_rms_constant_and_two_sample_window():
    e = rms_envelope(np.full(100, -3.0), 100.0, 0.2, 0.05)
    np.testing.assert_allclose(e.values, 3.0)
    e = rms_envelope([3.0, 4.0], 1.0, win_s=2.0, hop_s=1.0)
    assert e.values.tolist() == [pytest.approx(math.sqrt(12.5), abs=1e-12)]
    assert e.t_first_s == 1.0


def test_rms_sine_amplitude_over_whole_periods():
    fs, f, amp = 1000.0, 25.0, 3.7
    x = amp * np.sin(2 * np.pi * f * np.arange(2000) / fs + 0.3)
    e = rms_envelope(x, fs, win_s=0.2, hop_s=0.05)  # 5 periods per window
    np.testing.assert_allclose(e.values, amp / math.sqrt(2), atol=1e-6)


def test_rms_window_geometry():
    e = rms_envelope(np.ones(1000), 1000.0, 0.2, 0.05, t_start_s=-1.0)
    assert len(e) == 1 + (1000 - 200) // 50
    np.testing.assert_allclose(e.times[:3], [-0.9, -0.85, -0.8])
    with pytest.raises(WindowTooLarge):
        rms_envelope(np.ones(10), 1000.0, 0.2, 0.05)


def test_step_envelope_onset():
    baseline = env(np.tile([0.9, 1.1], 10))  # mean 1, std 0.1 -> theta 1.3
    values = np.ones(40)
    values[7:] = 10.0
    task = env(values)
    spec = ThresholdSpec()
    assert detect_onset(task, baseline, spec) == pytest.approx(task.times[7])
    assert brute_force_first_run(values > 1.3, 2) == 7


def test_below_threshold_and_short_spike():
    baseline = env(np.tile([0.9, 1.1], 10))
    assert detect_onset(env(np.ones(40)), baseline, ThresholdSpec()) is None
    spike = np.ones(40)
    spike[12] = 50.0
    assert detect_onset(env(spike), baseline, ThresholdSpec()) is None
    spike[13] = 50.0  # two windows = 0.1 s, meets the hold
    assert detect_onset(env(spike), baseline, ThresholdSpec()) == pytest.approx(env(spike).times[12])
    assert detect_onset(env(spike[:13] * 0 + 1), baseline, ThresholdSpec(min_hold_s=0)) is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), max_size=60), st.integers(1, 6))
def test_first_held_run_matches_brute_force(above, h):
    assert _first_held_run(np.array(above, dtype=bool), h) == brute_force_first_run(above, h)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.5, 4), st.floats(0.5, 4))
def test_higher_k_never_detects_earlier(seed, k1, k2):
    rng = np.random.default_rng(seed)
    base = env(rng.gamma(4, 0.25, 20))
    task = env(rng.gamma(4, 0.25, 60) * np.where(rng.random(60) < 0.3, 3, 1))
    lo, hi = sorted((k1, k2))
    t_lo = detect_onset(task, base, ThresholdSpec(k_sigma=lo))
    t_hi = detect_onset(task, base, ThresholdSpec(k_sigma=hi))
    if t_lo is None:
        assert t_hi is None
    elif t_hi is not None:
        assert t_hi >= t_lo


@pytest.mark.parametrize("onset,length,segment,fallback", [
    (0.8, 2.5, (0.8, 3.3), False),
    (3.0, 2.5, (1.5, 4.0), False),
    (None, 1.0, (0.0, 1.0), True),
    (-0.2, 1.0, (0.0, 1.0), False),
])
def test_select_segment(onset, length, segment, fallback):
    d = select_segment(onset, length)
    assert d.segment == pytest.approx(segment, abs=1e-12)
    assert d.fallback_used is fallback and d.length_s == length


@pytest.mark.parametrize("length", [0.0, -1.0, 4.5])
def test_select_segment_bad_length(length):
    with pytest.raises(BadLength):
        select_segment(1.0, length)


def test_threshold_spec_validation():
    for kw in ({"baseline_window_s": (0.0, -1.0)}, {"k_sigma": 0}, {"min_hold_s": -1}):
        with pytest.raises(ValueError):
            ThresholdSpec(**kw)


@pytest.fixture(scope="module")
def gated_session():
    spec = SynthSpec(trials_per_class=20, fs_hz=500.0, snr_db=-5.0, seed=5)
    rec, truth = gen_session(spec)
    return epoch(rec, -1.0, 4.0), truth


def test_onsets_within_one_hop(gated_session):
    trials, truth = gated_session
    onsets = detect_trial_onsets(trials, GatingConfig())
    assert all(t is not None for t in onsets)
    err = np.abs(np.array(onsets) - np.array(truth.onsets_s))
    assert np.mean(err <= 0.05) >= 0.95
    starts = [d.segment[0] for d in decide_segments(onsets, 1.0)]
    expected = np.minimum(truth.onsets_s, 3.0)
    assert np.mean(np.abs(np.array(starts) - expected) <= 0.05) >= 0.95


def test_gate_trials_keeps_labels_and_eeg_only(gated_session):
    trials, _ = gated_session
    out, decisions = gate_trials(trials, "EMG1", length_s=1.5)
    assert out.labels.tolist() == trials.labels.tolist()
    assert out.data.shape == (len(trials), 20, 750)
    assert all(m.value == "EEG" for m in out.modality)
    i = 3
    i0 = int(round((decisions[i].segment[0] + 1.0) * trials.fs_hz))
    np.testing.assert_array_equal(out.data[i], trials.data[i, :20, i0:i0 + 750])
    with pytest.raises(UnknownChannel):
        gate_trials(trials, "EMG7")
    with pytest.raises(UnknownChannel):
        gate_trials(trials, "C3")


def test_degenerate_gating_equals_fixed_window(gated_session):
    trials, _ = gated_session
    decisions = decide_segments([0.0] * len(trials), 4.0)
    gated = apply_segments(trials, decisions)
    fixed = trials.crop(0.0, 4.0).pick(trials.channels_of("EEG"))
    np.testing.assert_array_equal(gated.data, fixed.data)


class _Oracle:
    """Decoder stub that always predicts the true labels."""

    def prepare(self, data):
        return np.asarray(data)

    def fit(self, prepared, labels):
        return None

    def predict(self, model, prepared):
        return prepared[:, 0]


def test_ties_go_to_shorter_length():
    labels = np.repeat(np.arange(5), 10)
    prepared = {L: labels[:, None].astype(float) for L in (2.5, 1.5, 2.0)}
    best, scores = choose_length_prepared(prepared, labels, _Oracle(), 5, 0)
    assert best == 1.5 and set(scores.values()) == {1.0}


def test_single_candidate(gated_session):
    trials, _ = gated_session
    assert choose_segment_length(trials, [2.5], seed=0) == 2.5


def test_chooses_true_window_length():
    # the informative interval lasts exactly 1 s; longer segments only add noise
    spec = SynthSpec(trials_per_class=20, fs_hz=250.0, snr_db=-18.0, seed=8,
                     emg_band_hz=(40.0, 110.0))
    rec, _ = gen_session(spec)
    trials = epoch(rec, -1.0, 4.0)
    lengths = (1.0, 1.5, 2.0, 2.5)
    assert choose_segment_length(trials, lengths, seed=1, decoder=CspOvrLda()) == 1.0
    dec, onsets = CspOvrLda(), detect_trial_onsets(trials, GatingConfig())
    prepared = {L: dec.prepare(apply_segments(trials, decide_segments(onsets, L)).data)
                for L in lengths}
    _, scores = choose_length_prepared(prepared, trials.labels, dec, 5, 1)
    assert scores[1.0] >= scores[2.5] + 0.1
