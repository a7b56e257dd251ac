"""EMG-gated selection of a fixed-length decoding segment per trial.

Muscle onset is detected on the RMS envelope of one EMG channel against a
threshold learned from pre-cue baseline windows. The decoding
segment is then anchored at that onset and clipped into the trial span.
The segment length is chosen per subject by inner cross-validation on
training trials only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadLength, EmptyBaseline, UnknownChannel, WindowOutOfRange, WindowTooLarge
from .io_formats import Modality
from .preprocess import TrialSet

__all__ = [
    "RmsEnvelope", "ThresholdSpec", "GatingDecision", "GatingConfig",
    "rms_envelope", "onset_threshold", "detect_onset", "select_segment",
    "TrialEnvelopes", "compute_envelopes", "fit_thresholds", "onsets_from_envelopes",
    "detect_trial_onsets", "decide_segments", "apply_segments", "gate_trials",
    "choose_segment_length", "choose_length_prepared",
]

TRIAL_SPAN = (0.0, 4.0)
DEFAULT_LENGTHS = (1.0, 1.5, 2.0, 2.5)


@dataclass(frozen=True)
class RmsEnvelope:
    values: np.ndarray
    hop_s: float
    win_s: float
    t_first_s: float  # center of the first window

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return self.t_first_s + self.hop_s * np.arange(len(self.values))


@dataclass(frozen=True)
class ThresholdSpec:
    baseline_window_s: tuple[float, float] = (-1.0, 0.0)
    k_sigma: float = 3.0
    min_hold_s: float = 0.1

    def __post_init__(self):
        lo, hi = self.baseline_window_s
        if not lo < hi <= 0:
            raise ValueError(f"baseline window must satisfy start < end <= 0, got {(lo, hi)}")
        if not self.k_sigma > 0:
            raise ValueError(f"k_sigma must be positive, got {self.k_sigma}")
        if self.min_hold_s < 0:
            raise ValueError(f"min_hold_s must be >= 0, got {self.min_hold_s}")


@dataclass(frozen=True)
class GatingDecision:
    onset_s: float | None
    segment: tuple[float, float]
    length_s: float
    fallback_used: bool

    def to_dict(self) -> dict:
        return {"onset_s": self.onset_s, "start_s": self.segment[0], "end_s": self.segment[1],
                "length_s": self.length_s, "fallback_used": self.fallback_used}


@dataclass(frozen=True)
class GatingConfig:
    """Everything needed to gate a set of trials except the segment length.

    ``onset_anchor`` controls how a detected envelope window is turned into
    a time: ``"entry"`` reports the midpoint of the hop interval in which
    the burst entered the window (window end minus half a hop), which is an
    unbiased estimate of the burst start for a sharp rise; ``"center"``
    reports the window center.

    ``baseline_pooling`` selects one threshold from the pooled baseline
    windows of all (training) trials, or one threshold per trial from its
    own baseline.

    ``fixed_onset_s`` bypasses detection and uses the same onset for every
    trial (e.g. a subject's median execution onset reused for imagery).
    """

    emg_channel: str = "EMG1"
    rms_win_s: float = 0.2
    rms_hop_s: float = 0.05
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    segment_lengths: tuple[float, ...] = DEFAULT_LENGTHS
    inner_folds: int = 5
    onset_anchor: str = "entry"
    fixed_onset_s: float | None = None
    baseline_pooling: str = "pooled"
    trial_span: tuple[float, float] = TRIAL_SPAN

    def __post_init__(self):
        if self.onset_anchor not in ("entry", "center"):
            raise ValueError(f"onset_anchor must be 'entry' or 'center', got {self.onset_anchor!r}")
        if self.baseline_pooling not in ("pooled", "trial"):
            raise ValueError(f"baseline_pooling must be 'pooled' or 'trial', "
                             f"got {self.baseline_pooling!r}")
        if not self.segment_lengths:
            raise ValueError("segment_lengths must not be empty")


def rms_envelope(x: Sequence[float], fs_hz: float, win_s: float = 0.2, hop_s: float = 0.05,
                 t_start_s: float = 0.0) -> RmsEnvelope:
    """Sliding-window RMS. Sample 0 of `x` sits at time `t_start_s`."""
    x = np.asarray(x, dtype=np.float64)
    win = int(round(win_s * fs_hz))
    hop = int(round(hop_s * fs_hz))
    if win < 1 or hop < 1:
        raise WindowTooLarge(f"window ({win_s} s) and hop ({hop_s} s) must each span "
                             f">= 1 sample at {fs_hz} Hz")
    if win > len(x):
        raise WindowTooLarge(f"window of {win} samples exceeds signal length {len(x)}")
    frames = np.lib.stride_tricks.sliding_window_view(x * x, win)[::hop]
    values = np.sqrt(frames.mean(axis=1))
    return RmsEnvelope(values, hop / fs_hz, win / fs_hz, t_start_s + win / (2 * fs_hz))


def onset_threshold(baseline: RmsEnvelope, spec: ThresholdSpec) -> float:
    if len(baseline.values) == 0:
        raise EmptyBaseline("baseline envelope has no windows")
    return float(np.mean(baseline.values) + spec.k_sigma * np.std(baseline.values))


def _first_held_run(above: np.ndarray, min_windows: int) -> int | None:
    run = 0
    for i, flag in enumerate(above):
        run = run + 1 if flag else 0
        if run >= min_windows:
            return i - run + 1
    return None


def detect_onset(env: RmsEnvelope, baseline: RmsEnvelope, spec: ThresholdSpec) -> float | None:
    """Center time of the first envelope window opening a supra-threshold run.

    The threshold is ``mean + k_sigma * std`` of the baseline envelope; a
    run of n windows lasts ``n * hop`` and must reach ``spec.min_hold_s``.
    """
    idx = _detect_index(env, baseline, spec)
    return None if idx is None else float(env.times[idx])


def _detect_index(env: RmsEnvelope, baseline: RmsEnvelope, spec: ThresholdSpec) -> int | None:
    theta = onset_threshold(baseline, spec)
    min_windows = max(1, math.ceil(spec.min_hold_s / env.hop_s - 1e-9))
    return _first_held_run(np.asarray(env.values) > theta, min_windows)


def select_segment(onset_s: float | None, length_s: float,
                   trial_span: tuple[float, float] = TRIAL_SPAN) -> GatingDecision:
    """Segment of `length_s` starting at the onset, shifted left to fit the span.

    Without an onset the segment starts at the span start and the decision
    is flagged as a fallback.
    """
    lo, hi = trial_span
    if not 0 < length_s <= hi - lo + 1e-12:
        raise BadLength(f"segment length {length_s} outside (0, {hi - lo}]")
    length_s = min(length_s, hi - lo)
    if onset_s is None:
        return GatingDecision(None, (lo, lo + length_s), length_s, True)
    start = min(max(onset_s, lo), hi - length_s)
    return GatingDecision(onset_s, (start, start + length_s), length_s, False)


def _trial_window(trials: TrialSet, t_start: float, t_end: float) -> slice:
    i0 = int(round((t_start - trials.t0_offset_s) * trials.fs_hz))
    i1 = int(round((t_end - trials.t0_offset_s) * trials.fs_hz))
    if i0 < 0 or i1 > trials.n_samples:
        raise EmptyBaseline(
            f"window [{t_start}, {t_end}) s not covered by epochs starting at "
            f"{trials.t0_offset_s} s with {trials.n_samples / trials.fs_hz} s length")
    return slice(i0, i1)


def _emg_row(trials: TrialSet, name: str) -> int:
    try:
        row = trials.channel_labels.index(name)
    except ValueError:
        raise UnknownChannel(f"EMG channel {name!r} not in trial set", channels=[name]) from None
    if trials.modality[row] is not Modality.EMG:
        raise UnknownChannel(f"channel {name!r} is not tagged EMG", channels=[name])
    return row


@dataclass(frozen=True)
class TrialEnvelopes:
    """RMS envelopes of one EMG channel for every trial.

    ``baseline`` and ``task`` are (trials, windows) arrays; the task
    envelope covers the trial span and its window centers are ``times``.
    """

    baseline: np.ndarray
    task: np.ndarray
    times: np.ndarray
    win_s: float
    hop_s: float

    def __len__(self):
        return len(self.task)


def compute_envelopes(trials: TrialSet, cfg: GatingConfig) -> TrialEnvelopes:
    row = _emg_row(trials, cfg.emg_channel)
    b0, b1 = cfg.threshold.baseline_window_s
    lo, hi = cfg.trial_span
    base_sl = _trial_window(trials, b0, b1)
    task_sl = _trial_window(trials, lo, hi)
    base, task = [], []
    env = None
    for emg in trials.data[:, row]:
        base.append(rms_envelope(emg[base_sl], trials.fs_hz, cfg.rms_win_s, cfg.rms_hop_s,
                                 b0).values)
        env = rms_envelope(emg[task_sl], trials.fs_hz, cfg.rms_win_s, cfg.rms_hop_s, lo)
        task.append(env.values)
    if env is None:
        env = rms_envelope(np.zeros(task_sl.stop - task_sl.start), trials.fs_hz,
                           cfg.rms_win_s, cfg.rms_hop_s, lo)
    n_base = len(rms_envelope(np.zeros(base_sl.stop - base_sl.start), trials.fs_hz,
                              cfg.rms_win_s, cfg.rms_hop_s).values)
    return TrialEnvelopes(np.asarray(base).reshape(len(trials), n_base),
                          np.asarray(task).reshape(len(trials), len(env.times)),
                          env.times, env.win_s, env.hop_s)


def fit_thresholds(envs: TrialEnvelopes, cfg: GatingConfig, train_index=None) -> np.ndarray:
    """Per-trial detection thresholds.

    With ``cfg.baseline_pooling == "pooled"`` the baseline windows of the
    trials in `train_index` (all trials if None) are pooled into one
    threshold shared by every trial; with ``"trial"`` each trial uses its
    own baseline.
    """
    spec = cfg.threshold
    if envs.baseline.shape[1] == 0:
        raise EmptyBaseline("baseline envelope has no windows")
    if cfg.baseline_pooling == "trial":
        return envs.baseline.mean(axis=1) + spec.k_sigma * envs.baseline.std(axis=1)
    pool = envs.baseline if train_index is None else envs.baseline[np.asarray(train_index)]
    if pool.size == 0:
        raise EmptyBaseline("no baseline windows to pool")
    theta = float(pool.mean() + spec.k_sigma * pool.std())
    return np.full(len(envs), theta)


def onsets_from_envelopes(envs: TrialEnvelopes, thresholds, cfg: GatingConfig) -> list[float | None]:
    lo, hi = cfg.trial_span
    min_windows = max(1, math.ceil(cfg.threshold.min_hold_s / envs.hop_s - 1e-9))
    shift = envs.win_s / 2 - envs.hop_s / 2 if cfg.onset_anchor == "entry" else 0.0
    onsets: list[float | None] = []
    for values, theta in zip(envs.task, thresholds):
        idx = _first_held_run(values > theta, min_windows)
        if idx is None:
            onsets.append(None)
        else:
            onsets.append(min(max(float(envs.times[idx]) + shift, lo), hi))
    return onsets


def detect_trial_onsets(trials: TrialSet, cfg: GatingConfig,
                        train_index=None) -> list[float | None]:
    """Per-trial onset times in seconds after the cue.

    Threshold statistics come from the trials in `train_index` when
    pooling (all trials if None).
    """
    if cfg.fixed_onset_s is not None:
        return [float(cfg.fixed_onset_s)] * len(trials)
    envs = compute_envelopes(trials, cfg)
    return onsets_from_envelopes(envs, fit_thresholds(envs, cfg, train_index), cfg)


def decide_segments(onsets: Sequence[float | None], length_s: float,
                    trial_span: tuple[float, float] = TRIAL_SPAN) -> list[GatingDecision]:
    return [select_segment(t, length_s, trial_span) for t in onsets]


def apply_segments(trials: TrialSet, decisions: Sequence[GatingDecision],
                   modality: Modality | str | None = Modality.EEG) -> TrialSet:
    """Slice each trial to its decided segment, keeping one modality.

    The output is segment-aligned: its ``t0_offset_s`` is 0 and sample 0 of
    trial i is the start of ``decisions[i].segment``.
    """
    if len(decisions) != len(trials):
        raise ValueError(f"{len(decisions)} decisions for {len(trials)} trials")
    rows = list(range(len(trials.channel_labels))) if modality is None \
        else trials.channels_of(modality)
    if not decisions:
        return TrialSet(np.empty((0, len(rows), 0)), [], trials.fs_hz, 0.0,
                        [trials.channel_labels[r] for r in rows],
                        [trials.modality[r] for r in rows])
    n = int(round(decisions[0].length_s * trials.fs_hz))
    out = np.empty((len(trials), len(rows), n))
    for i, d in enumerate(decisions):
        i0 = int(round((d.segment[0] - trials.t0_offset_s) * trials.fs_hz))
        if i0 < 0 or i0 + n > trials.n_samples:
            raise WindowOutOfRange(f"segment {d.segment} outside trial {i}")
        out[i] = trials.data[i][rows, i0:i0 + n]
    return TrialSet(out, trials.labels, trials.fs_hz, 0.0,
                    [trials.channel_labels[r] for r in rows],
                    [trials.modality[r] for r in rows])


def gate_trials(trials: TrialSet, emg_channel: str, spec: ThresholdSpec | None = None,
                length_s: float = 2.5, **cfg_overrides) -> tuple[TrialSet, list[GatingDecision]]:
    """Detect onsets on `emg_channel` and cut EEG-only segments of `length_s`."""
    cfg = GatingConfig(emg_channel=emg_channel, threshold=spec or ThresholdSpec(),
                       **cfg_overrides)
    if cfg.fixed_onset_s is None:
        _emg_row(trials, emg_channel)
    decisions = decide_segments(detect_trial_onsets(trials, cfg), length_s, cfg.trial_span)
    return apply_segments(trials, decisions), decisions


def choose_length_prepared(prepared: dict, labels, decoder, inner_folds: int,
                           seed: int) -> tuple[float, dict]:
    """Pick the length whose prepared trials give the best inner-CV accuracy.

    `prepared` maps candidate length to the decoder's per-trial
    representation of the gated training trials. Ties go to the shorter
    length. Returns ``(best_length, {length: mean accuracy})``.
    """
    from .evaluate import stratified_folds

    lengths = sorted(prepared)
    if len(lengths) == 1:
        return lengths[0], {lengths[0]: float("nan")}
    labels = np.asarray(labels)
    plan = stratified_folds(labels, inner_folds, 1, seed)
    scores = {}
    for length in lengths:
        reps = prepared[length]
        accs = []
        for fold in range(inner_folds):
            test = plan.test_index(0, fold)
            train = plan.train_index(0, fold)
            model = decoder.fit(reps[train], labels[train])
            accs.append(float(np.mean(decoder.predict(model, reps[test]) == labels[test])))
        scores[length] = float(np.mean(accs))
    best = lengths[0]
    for length in lengths[1:]:
        if scores[length] > scores[best]:
            best = length
    return best, scores


def choose_segment_length(train: TrialSet, candidates: Sequence[float] = DEFAULT_LENGTHS,
                          inner_folds: int = 5, seed: int = 0,
                          cfg: GatingConfig | None = None, decoder=None) -> float:
    """Choose a subject's segment length by inner CV on training trials.

    `train` must carry the EMG channel named in `cfg` and cover the
    baseline window. The default decoder is CSP + one-vs-rest LDA.
    """
    from .classify_lda import CspOvrLda

    if not candidates:
        raise BadLength("no candidate segment lengths")
    cfg = cfg or GatingConfig()
    decoder = decoder or CspOvrLda()
    onsets = detect_trial_onsets(train, cfg)
    prepared = {}
    for length in sorted(set(float(c) for c in candidates)):
        gated = apply_segments(train, decide_segments(onsets, length, cfg.trial_span))
        prepared[length] = decoder.prepare(gated.data)
    best, _ = choose_length_prepared(prepared, train.labels, decoder, inner_folds, seed)
    return best
