"""Pipeline configuration and the Recording -> trials front end.

A pipeline is preprocessing + (optional) EMG gating + a decoder. The
conventional pipeline decodes the fixed epoch window; the proposed one
decodes EMG-gated segments.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Mapping

from .classify_lda import CspOvrLda
from .emg_gating import GatingConfig, ThresholdSpec
from .errors import ConfigError
from .io_formats import Modality, Recording
from .preprocess import TrialSet, bandpass, downsample, epoch, notch, select_channels

__all__ = ["PreprocessConfig", "DecoderConfig", "PipelineConfig", "DatasetTrials",
           "prepare_dataset", "gating_from_mapping", "pipeline_from_mapping"]


@dataclass(frozen=True)
class PreprocessConfig:
    band_lo_hz: float = 0.3
    band_hi_hz: float = 30.0
    filter_order: int = 4
    notch_hz: float | None = 60.0
    notch_bw_hz: float = 2.0
    channels: tuple[str, ...] | None = None  # EEG channels kept; None keeps all
    epoch_t0_s: float = 0.0
    epoch_t1_s: float = 4.0
    downsample_factor: int = 1


@dataclass(frozen=True)
class DecoderConfig:
    csp_pairs: int = 3
    csp_shrinkage: float = 0.05
    lda_shrinkage: float = 0.0
    log_epsilon: float = 1e-12

    def build(self) -> CspOvrLda:
        if self.log_epsilon != 1e-12:
            raise ConfigError("log_epsilon is fixed at 1e-12 in this build", key="log_epsilon")
        return CspOvrLda(self.csp_pairs, self.csp_shrinkage, self.lda_shrinkage)


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "conventional"  # or "proposed"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    gating: GatingConfig = field(default_factory=GatingConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        if self.mode not in ("conventional", "proposed"):
            raise ConfigError(f"pipeline mode must be conventional or proposed, got {self.mode!r}",
                              key="mode")

    @property
    def trial_span(self) -> tuple[float, float]:
        return (self.preprocess.epoch_t0_s, self.preprocess.epoch_t1_s)

    def as_proposed(self, **gating_changes) -> "PipelineConfig":
        return replace(self, mode="proposed", gating=replace(self.gating, **gating_changes))

    def as_conventional(self) -> "PipelineConfig":
        return replace(self, mode="conventional")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DatasetTrials:
    """Preprocessed trials ready for decoding.

    ``eeg`` holds EEG channels (possibly decimated) and ``emg`` the
    full-rate EMG channels; both are epoched from the same cues and cover
    the baseline window as well as the trial span.
    """

    eeg: TrialSet
    emg: TrialSet | None

    @property
    def labels(self):
        return self.eeg.labels

    def __len__(self):
        return len(self.eeg)


def prepare_dataset(rec: Recording, cfg: PipelineConfig) -> DatasetTrials:
    pre = cfg.preprocess
    if pre.notch_hz:
        rec = notch(rec, pre.notch_hz, pre.notch_bw_hz)
    rec = bandpass(rec, pre.band_lo_hz, pre.band_hi_hz, pre.filter_order, only=Modality.EEG)
    eeg_names = [rec.labels[i] for i in rec.channels_of(Modality.EEG)]
    if pre.channels is not None:
        eeg_names = list(pre.channels)
    emg_names = [rec.labels[i] for i in rec.channels_of(Modality.EMG)]

    t0 = min(pre.epoch_t0_s, cfg.gating.threshold.baseline_window_s[0])
    t1 = pre.epoch_t1_s
    eeg_rec = downsample(select_channels(rec, eeg_names), pre.downsample_factor)
    if any(m is not Modality.EEG for m in eeg_rec.modality):
        raise ConfigError("preprocess.channels must name EEG channels only", key="channels")
    eeg = epoch(eeg_rec, t0, t1)
    emg = epoch(select_channels(rec, emg_names), t0, t1) if emg_names else None
    return DatasetTrials(eeg, emg)


# ---------------------------------------------------------------------------
# mapping (config file) -> dataclasses

def _take(cls, section: Mapping[str, Any] | None, path: str, **conv):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{path}]: {', '.join(unknown)}", key=unknown[0])
    for key, fn in conv.items():
        if key in section and section[key] is not None:
            try:
                section[key] = fn(section[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {path}.{key}: {exc}", key=key) from None
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{path}]: {exc}") from None


def gating_from_mapping(section: Mapping[str, Any] | None) -> GatingConfig:
    section = dict(section or {})
    thr = {}
    for key in ("baseline_window_s", "k_sigma", "min_hold_s"):
        if key in section:
            thr[key] = section.pop(key)
    if "baseline_window_s" in thr:
        thr["baseline_window_s"] = tuple(float(v) for v in thr["baseline_window_s"])
    try:
        spec = ThresholdSpec(**thr)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid gating threshold: {exc}") from None
    section["threshold"] = spec
    return _take(GatingConfig, section, "gating",
                 segment_lengths=lambda v: tuple(float(x) for x in v),
                 trial_span=lambda v: tuple(float(x) for x in v))


def pipeline_from_mapping(cfg: Mapping[str, Any], mode: str = "conventional") -> PipelineConfig:
    pre = _take(PreprocessConfig, cfg.get("preprocess"), "preprocess",
                channels=lambda v: tuple(str(x) for x in v))
    gating = gating_from_mapping(cfg.get("gating"))
    if gating.trial_span != (pre.epoch_t0_s, pre.epoch_t1_s):
        gating = replace(gating, trial_span=(pre.epoch_t0_s, pre.epoch_t1_s))
    dec = _take(DecoderConfig, cfg.get("decoder"), "decoder")
    return PipelineConfig(mode, pre, gating, dec)
