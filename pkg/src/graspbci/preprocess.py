"""Filtering, channel selection, decimation and epoching."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy import signal

from .errors import InvalidBand, InvalidFactor, UnknownChannel, WindowOutOfRange
from .io_formats import Marker, MarkerKind, Modality, Recording

__all__ = [
    "MOTOR_CHANNELS", "TrialEpoch", "TrialSet", "bandpass", "notch", "zero_phase",
    "select_channels", "downsample", "epoch",
]

# 20-channel motor montage. The source list names CP5 twice; the second
# occurrence is read as CP6 to keep the montage symmetric.
MOTOR_CHANNELS = (
    "FC5", "FC3", "FC1", "FC2", "FC4", "FC6",
    "C5", "C3", "C1", "Cz", "C2", "C4", "C6",
    "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6",
)


def _pad_odd(x: np.ndarray, n: int) -> np.ndarray:
    left = 2 * x[:, :1] - x[:, n:0:-1]
    right = 2 * x[:, -1:] - x[:, -2:-n - 2:-1]
    return np.concatenate([left, x, right], axis=1)


def zero_phase(sos: np.ndarray, x: np.ndarray, padlen: int) -> np.ndarray:
    """Forward-backward filter each row of `x` with the cascade `sos`.

    Rows are odd-reflection padded by `padlen` samples and each pass starts
    from the steady state for its first sample. The forward-backward and
    backward-forward results are averaged, which makes the operator commute
    exactly with time reversal.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[1]
    if n == 0:
        return x.copy()
    padlen = min(padlen, n - 1)
    ext = _pad_odd(x, padlen) if padlen > 0 else x
    zi = signal.sosfilt_zi(sos)[:, None, :]

    def run(y):
        out, _ = signal.sosfilt(sos, y, axis=-1, zi=zi * y[None, :, :1])
        return out

    fb = run(run(ext)[:, ::-1])[:, ::-1]
    bf = run(run(ext[:, ::-1])[:, ::-1])
    y = 0.5 * (fb + bf)
    return y[:, padlen:padlen + n] if padlen > 0 else y


def _apply_rows(rec: Recording, sos: np.ndarray, padlen: int, only) -> Recording:
    rows = range(rec.n_channels) if only is None else rec.channels_of(only)
    data = np.array(rec.data)
    for r in rows:
        data[r] = zero_phase(sos, data[r:r + 1], padlen)[0]
    data.setflags(write=False)
    return rec.replace(data=data)


def bandpass(rec: Recording, lo_hz: float, hi_hz: float, order: int = 4,
             only: Modality | str | None = None) -> Recording:
    """Zero-phase Butterworth bandpass.

    `order` is the prototype order; the realized bandpass has order
    ``2 * order`` as ``order`` second-order sections. `only` restricts
    filtering to channels of one modality.
    """
    nyq = rec.fs_hz / 2
    if not 0 < lo_hz < hi_hz < nyq:
        raise InvalidBand(f"need 0 < lo < hi < fs/2, got lo={lo_hz}, hi={hi_hz}, fs={rec.fs_hz}")
    if order <= 0 or order % 2:
        raise InvalidBand(f"filter order must be a positive even integer, got {order}")
    sos = signal.butter(order, [lo_hz, hi_hz], btype="bandpass", fs=rec.fs_hz, output="sos")
    return _apply_rows(rec, sos, 3 * 2 * order, only)


def notch(rec: Recording, f0_hz: float = 60.0, bandwidth_hz: float = 2.0,
          only: Modality | str | None = None) -> Recording:
    """Zero-phase second-order notch with Q = f0 / bandwidth."""
    if not 0 < f0_hz < rec.fs_hz / 2:
        raise InvalidBand(f"notch frequency {f0_hz} outside (0, {rec.fs_hz / 2})")
    if not bandwidth_hz > 0:
        raise InvalidBand(f"notch bandwidth must be positive, got {bandwidth_hz}")
    b, a = signal.iirnotch(f0_hz, f0_hz / bandwidth_hz, fs=rec.fs_hz)
    return _apply_rows(rec, signal.tf2sos(b, a), 3 * 2, only)


def select_channels(rec: Recording, names: Sequence[str]) -> Recording:
    index = {lb: i for i, lb in enumerate(rec.labels)}
    missing = [n for n in names if n not in index]
    if missing:
        raise UnknownChannel(f"unknown channel(s): {', '.join(missing)}", channels=missing)
    rows = [index[n] for n in names]
    return rec.replace(data=rec.data[rows], labels=[rec.labels[i] for i in rows],
                       modality=[rec.modality[i] for i in rows])


def downsample(rec: Recording, factor: int) -> Recording:
    """Keep every `factor`-th sample; the caller is responsible for anti-aliasing."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise InvalidFactor(f"decimation factor must be a positive integer, got {factor!r}")
    if factor == 1:
        return rec
    n_out = rec.n_samples // factor
    markers = tuple(Marker(m.kind, m.sample_index // factor, m.class_id, m.description)
                    for m in rec.markers if m.sample_index // factor < n_out)
    return rec.replace(data=rec.data[:, :n_out * factor:factor], fs_hz=rec.fs_hz / factor,
                       markers=markers)


@dataclass(frozen=True)
class TrialEpoch:
    class_id: int
    data: np.ndarray
    fs_hz: float
    t0_offset_s: float


@dataclass(frozen=True)
class TrialSet:
    """Equal-shape trial windows stacked as (trials, channels, samples)."""

    data: np.ndarray
    labels: np.ndarray
    fs_hz: float
    t0_offset_s: float
    channel_labels: tuple[str, ...]
    modality: tuple[Modality, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            data = data.reshape(0, len(self.channel_labels), 0)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))
        object.__setattr__(self, "modality", tuple(Modality(m) for m in self.modality))

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def epochs(self) -> list[TrialEpoch]:
        return list(iter(self))

    def __iter__(self) -> Iterator[TrialEpoch]:
        for x, y in zip(self.data, self.labels):
            yield TrialEpoch(int(y), x, self.fs_hz, self.t0_offset_s)

    def channels_of(self, modality) -> list[int]:
        modality = Modality(modality)
        return [i for i, m in enumerate(self.modality) if m is modality]

    def subset(self, idx) -> "TrialSet":
        idx = np.asarray(idx)
        return TrialSet(self.data[idx], self.labels[idx], self.fs_hz, self.t0_offset_s,
                        self.channel_labels, self.modality)

    def pick(self, rows: Sequence[int]) -> "TrialSet":
        rows = list(rows)
        return TrialSet(self.data[:, rows], self.labels, self.fs_hz, self.t0_offset_s,
                        [self.channel_labels[i] for i in rows],
                        [self.modality[i] for i in rows])

    def crop(self, t_start_s: float, t_end_s: float) -> "TrialSet":
        """Same window for every trial, in seconds relative to the cue."""
        i0 = int(round((t_start_s - self.t0_offset_s) * self.fs_hz))
        n = int(round((t_end_s - t_start_s) * self.fs_hz))
        if i0 < 0 or i0 + n > self.n_samples:
            raise WindowOutOfRange(
                f"crop [{t_start_s}, {t_end_s}) outside epoch starting at {self.t0_offset_s} s")
        return TrialSet(self.data[:, :, i0:i0 + n], self.labels, self.fs_hz, t_start_s,
                        self.channel_labels, self.modality)


def epoch(rec: Recording, t0_s: float, t1_s: float) -> TrialSet:
    """Cut ``[cue + t0, cue + t1)`` around every cue marker."""
    if not t1_s > t0_s:
        raise WindowOutOfRange(f"empty epoch window [{t0_s}, {t1_s})")
    cues = [m for m in rec.markers if m.kind is MarkerKind.CUE_ONSET]
    offset = int(round(t0_s * rec.fs_hz))
    n = int(round((t1_s - t0_s) * rec.fs_hz))
    data = np.empty((len(cues), rec.n_channels, n))
    for i, mk in enumerate(cues):
        start = mk.sample_index + offset
        if start < 0 or start + n > rec.n_samples:
            raise WindowOutOfRange(
                f"window [{t0_s}, {t1_s}) s around cue at sample {mk.sample_index} "
                f"leaves the recording ({rec.n_samples} samples)", sample=mk.sample_index)
        data[i] = rec.data[:, start:start + n]
    return TrialSet(data, [m.class_id for m in cues], rec.fs_hz, t0_s, rec.labels, rec.modality)
