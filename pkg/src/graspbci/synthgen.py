"""Seeded synthetic EEG+EMG sessions with known ground truth.

Each trial carries a class-specific spatial pattern driven by an
amplitude-modulated 8-24 Hz noise source. The source is only active inside
``[onset, onset + active_window_s]``, where the onset is jittered per trial,
and an EMG burst starts at exactly the same sample. White Gaussian noise
covers every EEG channel at all times.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import signal

from .errors import InvalidSpec
from .io_formats import Marker, MarkerKind, Modality, Recording
from .preprocess import MOTOR_CHANNELS

__all__ = ["SynthSpec", "GroundTruth", "gen_session", "gen_label_shuffle", "class_patterns"]

EMG_LABEL = "EMG1"


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 5
    trials_per_class: int = 50
    fs_hz: float = 1000.0
    trial_len_s: float = 4.0
    n_eeg_channels: int = 20
    mixing: tuple[tuple[float, ...], ...] | None = None  # None: random unit vectors
    active_window_s: float = 1.0
    onset_jitter_s: tuple[float, float] = (0.3, 2.5)
    snr_db: float = 0.0  # source power over noise power per EEG channel
    noise_uv: float = 10.0
    source_band_hz: tuple[float, float] = (8.0, 24.0)
    emg_snr_db: float = 10.0
    emg_noise_uv: float = 5.0
    emg_burst_s: float | None = None  # None: same as active_window_s
    emg_band_hz: tuple[float, float] = (60.0, 200.0)
    pre_cue_s: float = 1.5
    post_trial_s: float = 0.5
    seed: int | None = 0

    def validate(self) -> None:
        lo, hi = self.onset_jitter_s
        problems = []
        if self.seed is None:
            problems.append("seed is required")
        if self.n_classes != 5:
            problems.append("n_classes must be 5")
        if self.trials_per_class < 1:
            problems.append("trials_per_class must be >= 1")
        if not 0 <= lo <= hi:
            problems.append(f"onset jitter {self.onset_jitter_s} must satisfy 0 <= lo <= hi")
        if hi + self.active_window_s > self.trial_len_s + 1e-9:
            problems.append("onset + active window exceeds trial length")
        if self.active_window_s <= 0 or self.trial_len_s <= 0:
            problems.append("active window and trial length must be positive")
        for name in ("snr_db", "emg_snr_db"):
            v = getattr(self, name)
            if math.isnan(v) or v == -math.inf:
                problems.append(f"{name} must be a number (+inf switches noise off)")
        if not (self.noise_uv > 0 and self.emg_noise_uv > 0):
            problems.append("noise_uv and emg_noise_uv must be positive")
        if self.emg_band_hz[1] >= self.fs_hz / 2 or self.source_band_hz[1] >= self.fs_hz / 2:
            problems.append("source/EMG band must lie below Nyquist")
        if self.pre_cue_s < 1.0:
            problems.append("pre_cue_s must leave room for a 1 s baseline")
        if self.mixing is not None:
            m = np.asarray(self.mixing, dtype=float)
            if m.shape != (self.n_classes, self.n_eeg_channels):
                problems.append(f"mixing must be {self.n_classes} x {self.n_eeg_channels}")
            elif not np.allclose(np.linalg.norm(m, axis=1), 1.0, atol=1e-9):
                problems.append("mixing vectors must be unit-norm")
        if problems:
            raise InvalidSpec("; ".join(problems))

    @property
    def n_trials(self) -> int:
        return self.n_classes * self.trials_per_class

    @property
    def eeg_labels(self) -> tuple[str, ...]:
        if self.n_eeg_channels == len(MOTOR_CHANNELS):
            return MOTOR_CHANNELS
        return tuple(f"E{i + 1}" for i in range(self.n_eeg_channels))


@dataclass(frozen=True)
class GroundTruth:
    labels: tuple[int, ...]
    onsets_s: tuple[float, ...]  # relative to cue, exact sample times
    cue_samples: tuple[int, ...]
    patterns: tuple[tuple[float, ...], ...]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        d = json.loads(text)
        return cls(tuple(d["labels"]), tuple(d["onsets_s"]), tuple(d["cue_samples"]),
                   tuple(tuple(p) for p in d["patterns"]))


def class_patterns(spec: SynthSpec) -> np.ndarray:
    if spec.mixing is not None:
        return np.asarray(spec.mixing, dtype=float)
    rng = np.random.default_rng([spec.seed, 0x5EED])
    a = rng.standard_normal((spec.n_classes, spec.n_eeg_channels))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def _band_noise(rng, n, band, fs, sos_cache={}):
    key = (band, fs)
    if key not in sos_cache:
        sos_cache[key] = signal.butter(4, band, btype="bandpass", fs=fs, output="sos")
    pad = int(fs)  # discard the filter start-up
    x = signal.sosfilt(sos_cache[key], rng.standard_normal(n + pad))[pad:]
    return x / x.std()


def gen_session(spec: SynthSpec | None = None) -> tuple[Recording, GroundTruth]:
    """Synthesize a continuous session and its ground truth.

    Trial i draws from its own generator seeded by ``(seed, i)``, so the
    output is a pure function of the spec.
    """
    spec = spec or SynthSpec()
    spec.validate()
    fs = spec.fs_hz
    patterns = class_patterns(spec)
    c = spec.n_eeg_channels
    order_rng = np.random.default_rng([spec.seed, 0])
    labels = order_rng.permutation(np.repeat(np.arange(spec.n_classes), spec.trials_per_class))

    pre = int(round(spec.pre_cue_s * fs))
    trial_n = int(round(spec.trial_len_s * fs))
    post = int(round(spec.post_trial_s * fs))
    period = pre + trial_n + post
    total = period * spec.n_trials + pre
    active_n = int(round(spec.active_window_s * fs))
    burst_n = int(round((spec.emg_burst_s or spec.active_window_s) * fs))

    noise_sd = 0.0 if spec.snr_db == math.inf else spec.noise_uv
    # per-channel source power = amp^2 * mean(taper^2) / C = snr * noise power
    taper = signal.windows.tukey(active_n, alpha=0.2)
    if noise_sd == 0.0:
        amp = spec.noise_uv * math.sqrt(c / np.mean(taper ** 2))
    else:
        amp = noise_sd * math.sqrt(10 ** (spec.snr_db / 10) * c / np.mean(taper ** 2))
    # same convention for EMG: +inf switches its noise off
    emg_noise_sd = 0.0 if spec.emg_snr_db == math.inf else spec.emg_noise_uv
    if emg_noise_sd == 0.0:
        emg_amp = spec.emg_noise_uv
    else:
        emg_amp = emg_noise_sd * math.sqrt(10 ** (spec.emg_snr_db / 10))

    eeg = np.zeros((c, total))
    emg = np.zeros(total)
    markers = []
    cues, onsets = [], []
    for i, k in enumerate(labels):
        rng = np.random.default_rng([spec.seed, 1, i])
        start = i * period
        cue = start + pre
        onset_idx = int(round(rng.uniform(*spec.onset_jitter_s) * fs))
        seg = slice(cue + onset_idx, cue + onset_idx + active_n)
        src = amp * taper * _band_noise(rng, active_n, spec.source_band_hz, fs)
        eeg[:, seg] += np.outer(patterns[k], src)
        burst = slice(cue + onset_idx, cue + onset_idx + burst_n)
        emg[burst] += emg_amp * _band_noise(rng, burst_n, spec.emg_band_hz, fs)
        cues.append(cue)
        onsets.append(onset_idx / fs)
        markers.append(Marker(MarkerKind.CUE_ONSET, cue, int(k), f"S  {k + 1}"))
        markers.append(Marker(MarkerKind.REST_ONSET, cue + trial_n, None, "S 99"))

    noise_rng = np.random.default_rng([spec.seed, 2])
    if noise_sd > 0:
        eeg += noise_sd * noise_rng.standard_normal(eeg.shape)
    if emg_noise_sd > 0:
        emg += emg_noise_sd * noise_rng.standard_normal(total)

    data = np.vstack([eeg, emg[None]])
    data.setflags(write=False)
    rec = Recording(data, fs, spec.eeg_labels + (EMG_LABEL,),
                    [Modality.EEG] * c + [Modality.EMG], tuple(markers))
    truth = GroundTruth(tuple(int(k) for k in labels), tuple(onsets), tuple(cues),
                        tuple(tuple(float(v) for v in p) for p in patterns))
    return rec, truth


def gen_label_shuffle(rec: Recording, seed: int) -> Recording:
    """Permute the class ids of the cue markers; signals are untouched."""
    cue_pos = [i for i, m in enumerate(rec.markers) if m.kind is MarkerKind.CUE_ONSET]
    ids = np.array([rec.markers[i].class_id for i in cue_pos])
    perm = np.random.default_rng(seed).permutation(len(ids))
    markers = list(rec.markers)
    for j, pos in enumerate(cue_pos):
        markers[pos] = replace(markers[pos], class_id=int(ids[perm[j]]))
    return rec.replace(markers=tuple(markers))


def spec_from_mapping(section) -> SynthSpec:
    section = dict(section or {})
    known = {f for f in SynthSpec.__dataclass_fields__}
    unknown = sorted(set(section) - known)
    if unknown:
        raise InvalidSpec(f"unknown synth key(s): {', '.join(unknown)}")
    for key in ("onset_jitter_s", "source_band_hz", "emg_band_hz"):
        if key in section:
            section[key] = tuple(float(v) for v in section[key])
    if "mixing" in section and section["mixing"] is not None:
        section["mixing"] = tuple(tuple(float(v) for v in row) for row in section["mixing"])
    for key in ("snr_db", "emg_snr_db"):
        if isinstance(section.get(key), str):
            section[key] = float(section[key])
    return SynthSpec(**section)
