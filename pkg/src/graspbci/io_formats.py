"""Recording containers and file formats.

Two on-disk formats are understood:

* a BrainVision triplet (``.vhdr`` header, ``.vmrk`` markers, ``.eeg``
  binary), restricted to MULTIPLEXED orientation with INT_16 or
  IEEE_FLOAT_32 samples, little-endian;
* a *session bundle*: a UTF-8 JSON manifest plus a ``.f32`` payload holding
  the channels x samples matrix as row-major little-endian float32.

All samples are converted to microvolts at load time.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (LengthMismatch, MalformedLine, MissingKey, SchemaError,
                     UnsupportedFormat)

__all__ = [
    "BinaryFormat", "HeaderInfo", "Marker", "MarkerKind", "Modality", "Recording",
    "parse_vhdr", "parse_vmrk", "read_brainvision", "load_brainvision",
    "write_brainvision", "read_session_bundle", "write_session_bundle",
    "load_session_bundle", "save_session_bundle", "load_recording",
]

BUNDLE_FORMAT = "graspbci-session"
BUNDLE_VERSION = 1


class BinaryFormat(str, enum.Enum):
    INT_16 = "INT_16"
    IEEE_FLOAT_32 = "IEEE_FLOAT_32"

    @property
    def dtype(self):
        return np.dtype("<i2") if self is BinaryFormat.INT_16 else np.dtype("<f4")


class MarkerKind(str, enum.Enum):
    CUE_ONSET = "CueOnset"
    REST_ONSET = "RestOnset"
    OTHER = "Other"


class Modality(str, enum.Enum):
    EEG = "EEG"
    EMG = "EMG"


# scale factor to microvolts
_UNIT_SCALE = {"": 1.0, "µv": 1.0, "μv": 1.0, "uv": 1.0, "âµv": 1.0,
               "mv": 1e3, "v": 1e6, "nv": 1e-3}


@dataclass(frozen=True)
class ChannelMeta:
    label: str
    resolution: float = 1.0
    unit: str = "µV"


@dataclass(frozen=True)
class HeaderInfo:
    n_channels: int
    sampling_rate_hz: float
    binary_format: BinaryFormat
    channel_meta: tuple[ChannelMeta, ...]
    orientation: str = "MULTIPLEXED"
    data_file: str | None = None
    marker_file: str | None = None

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.channel_meta]


@dataclass(frozen=True)
class Marker:
    kind: MarkerKind
    sample_index: int
    class_id: int | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", MarkerKind(self.kind))
        if self.sample_index < 0:
            raise SchemaError(f"negative marker position {self.sample_index}")
        if self.kind is MarkerKind.CUE_ONSET:
            if self.class_id is None or not 0 <= self.class_id <= 4:
                raise SchemaError(f"cue marker needs class_id in [0, 4], got {self.class_id}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "class_id": self.class_id,
                "sample": int(self.sample_index), "description": self.description}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Marker":
        try:
            return cls(kind=MarkerKind(d["kind"]), sample_index=int(d["sample"]),
                       class_id=None if d.get("class_id") is None else int(d["class_id"]),
                       description=str(d.get("description", "")))
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad marker entry {d!r}: {exc}") from None


@dataclass(frozen=True)
class Recording:
    """Continuous multichannel signal in microvolts.

    ``data`` is stored as a read-only float64 array of shape
    (channels, samples).
    """

    data: np.ndarray
    fs_hz: float
    labels: tuple[str, ...]
    modality: tuple[Modality, ...]
    markers: tuple[Marker, ...] = field(default=())

    def __post_init__(self):
        data = self.data
        # read-only float64 arrays are taken as-is (internal hand-offs);
        # anything else is copied so the recording cannot change under us
        if not (isinstance(data, np.ndarray) and data.dtype == np.float64
                and not data.flags.writeable):
            data = np.array(data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise SchemaError(f"data must be 2-D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        object.__setattr__(self, "modality", tuple(Modality(m) for m in self.modality))
        object.__setattr__(self, "markers", tuple(self.markers))
        if not (np.isfinite(self.fs_hz) and self.fs_hz > 0):
            raise SchemaError(f"sampling rate must be positive, got {self.fs_hz}")
        if not data.shape[0] == len(self.labels) == len(self.modality):
            raise SchemaError(
                f"{data.shape[0]} data rows, {len(self.labels)} labels, "
                f"{len(self.modality)} modality tags")
        for mk in self.markers:
            if mk.sample_index >= data.shape[1]:
                raise SchemaError(
                    f"marker at sample {mk.sample_index} beyond recording length {data.shape[1]}")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs_hz

    def channels_of(self, modality) -> list[int]:
        modality = Modality(modality)
        return [i for i, m in enumerate(self.modality) if m is modality]

    def cue_markers(self) -> list[Marker]:
        return [m for m in self.markers if m.kind is MarkerKind.CUE_ONSET]

    def class_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for mk in self.cue_markers():
            hist[mk.class_id] = hist.get(mk.class_id, 0) + 1
        return dict(sorted(hist.items()))

    def replace(self, **changes) -> "Recording":
        kw = dict(data=self.data, fs_hz=self.fs_hz, labels=self.labels,
                  modality=self.modality, markers=self.markers)
        kw.update(changes)
        return Recording(**kw)


# ---------------------------------------------------------------------------
# BrainVision

def _ini_sections(text: str) -> dict[str, list[tuple[int, str, str]]]:
    """Split INI-ish text into {section: [(line_no, key, value), ...]}."""
    sections: dict[str, list[tuple[int, str, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, [])
            continue
        if current is None:
            # banner line ("Brain Vision Data Exchange Header File ...")
            continue
        if "=" not in line:
            sections[current].append((lineno, line, None))
            continue
        key, value = line.split("=", 1)
        # values keep inner whitespace (marker descriptions like "S  1")
        sections[current].append((lineno, key.strip(), value.rstrip("\r\n")))
    return sections


def _lookup(section: list[tuple[int, str, str]], key: str) -> str | None:
    for _, k, v in section:
        if k == key:
            return v
    return None


def _require(sections, section: str, key: str) -> str:
    value = _lookup(sections.get(section, []), key)
    if value is None or value.strip() == "":
        raise MissingKey(f"required key {key!r} missing from [{section}]",
                         key=key, section=section)
    return value.strip()


def parse_vhdr(text: str) -> HeaderInfo:
    """Parse BrainVision header text.

    Only ``DataOrientation=MULTIPLEXED`` and ``BinaryFormat`` INT_16 or
    IEEE_FLOAT_32 are accepted. Unknown keys are ignored.
    """
    sections = _ini_sections(text)
    n_text = _require(sections, "Common Infos", "NumberOfChannels")
    si_text = _require(sections, "Common Infos", "SamplingInterval")
    try:
        n_channels = int(n_text)
        interval_us = float(si_text)
    except ValueError:
        raise MissingKey(f"non-numeric NumberOfChannels/SamplingInterval: "
                         f"{n_text!r}, {si_text!r}", key="SamplingInterval") from None
    if n_channels <= 0 or not interval_us > 0:
        raise UnsupportedFormat(
            f"NumberOfChannels={n_channels}, SamplingInterval={interval_us} not positive")

    data_format = (_lookup(sections.get("Common Infos", []), "DataFormat") or "BINARY").strip()
    if data_format.upper() != "BINARY":
        raise UnsupportedFormat(f"DataFormat {data_format!r} not supported", key="DataFormat")
    orientation = (_lookup(sections.get("Common Infos", []), "DataOrientation")
                   or "MULTIPLEXED").strip().upper()
    if orientation != "MULTIPLEXED":
        raise UnsupportedFormat(f"DataOrientation {orientation!r} not supported",
                                key="DataOrientation")
    fmt_text = _require(sections, "Binary Infos", "BinaryFormat").upper()
    try:
        binary_format = BinaryFormat(fmt_text)
    except ValueError:
        raise UnsupportedFormat(f"BinaryFormat {fmt_text!r} not supported",
                                key="BinaryFormat") from None

    chans = sections.get("Channel Infos", [])
    meta = []
    for i in range(1, n_channels + 1):
        entry = _lookup(chans, f"Ch{i}")
        if entry is None:
            raise MissingKey(f"channel entry Ch{i} missing from [Channel Infos]",
                             key=f"Ch{i}", section="Channel Infos")
        # name,reference,resolution,unit ; "\1" encodes a literal comma
        parts = [p.replace(r"\1", ",") for p in entry.split(",")]
        label = parts[0].strip()
        res_text = parts[2].strip() if len(parts) > 2 else ""
        unit = parts[3].strip() if len(parts) > 3 else "µV"
        try:
            resolution = float(res_text) if res_text else 1.0
        except ValueError:
            raise MalformedLine(f"bad resolution in Ch{i}={entry!r}", key=f"Ch{i}") from None
        if not resolution > 0:
            raise UnsupportedFormat(f"Ch{i} resolution must be positive, got {resolution}",
                                    key=f"Ch{i}")
        if unit.lower() not in _UNIT_SCALE:
            raise UnsupportedFormat(f"Ch{i} unit {unit!r} not supported", key=f"Ch{i}")
        meta.append(ChannelMeta(label, resolution, unit or "µV"))

    common = sections.get("Common Infos", [])
    return HeaderInfo(
        n_channels=n_channels,
        sampling_rate_hz=1e6 / interval_us,
        binary_format=binary_format,
        channel_meta=tuple(meta),
        orientation=orientation,
        data_file=(_lookup(common, "DataFile") or "").strip() or None,
        marker_file=(_lookup(common, "MarkerFile") or "").strip() or None,
    )


_MK_KEY = re.compile(r"^Mk(\d+)$")


def parse_vmrk(text: str, class_map: Mapping[str, int],
               rest_descriptions: Sequence[str] = ()) -> list[Marker]:
    """Parse ``Mk<n>=<type>,<description>,<position>,...`` marker lines.

    Descriptions found in `class_map` become cue markers of that class,
    those in `rest_descriptions` rest markers, anything else ``Other``.
    Positions are taken verbatim as sample indices.
    """
    markers = []
    for lineno, key, value in _ini_sections(text).get("Marker Infos", []):
        if not _MK_KEY.match(key):
            if value is None and key.startswith("Mk"):
                raise MalformedLine(f"line {lineno}: unparseable marker {key!r}", line=lineno)
            continue
        parts = (value or "").split(",")
        if len(parts) < 3:
            raise MalformedLine(f"line {lineno}: unparseable marker {key}={value}",
                                line=lineno)
        desc = parts[1].replace(r"\1", ",")
        try:
            pos = int(parts[2].strip())
        except ValueError:
            raise MalformedLine(f"line {lineno}: bad position {parts[2]!r}",
                                line=lineno) from None
        if pos < 0:
            raise MalformedLine(f"line {lineno}: negative position {pos}", line=lineno)
        if desc in class_map:
            markers.append(Marker(MarkerKind.CUE_ONSET, pos, int(class_map[desc]), desc))
        elif desc in rest_descriptions:
            markers.append(Marker(MarkerKind.REST_ONSET, pos, None, desc))
        else:
            markers.append(Marker(MarkerKind.OTHER, pos, None, desc))
    return markers


def _default_modality(label: str) -> Modality:
    return Modality.EMG if label.upper().startswith("EMG") else Modality.EEG


def read_brainvision(header: HeaderInfo, raw: bytes, markers: Sequence[Marker] = (),
                     emg_labels: Sequence[str] | None = None) -> Recording:
    """Decode a multiplexed binary payload into a :class:`Recording`.

    Channels named in `emg_labels` (default: labels starting with "EMG")
    are tagged EMG, the rest EEG.
    """
    dtype = header.binary_format.dtype
    frame = header.n_channels * dtype.itemsize
    if len(raw) % frame:
        raise LengthMismatch(
            f"payload of {len(raw)} bytes is not a whole number of "
            f"{header.n_channels}-channel {header.binary_format.value} frames")
    samples = np.frombuffer(raw, dtype=dtype).reshape(-1, header.n_channels)
    scale = np.array([c.resolution * _UNIT_SCALE[c.unit.lower()]
                      for c in header.channel_meta])
    data = samples.T.astype(np.float64) * scale[:, None]
    labels = header.labels
    if emg_labels is None:
        modality = [_default_modality(lb) for lb in labels]
    else:
        emg = set(emg_labels)
        modality = [Modality.EMG if lb in emg else Modality.EEG for lb in labels]
    return Recording(data, header.sampling_rate_hz, labels, modality, tuple(markers))


def _read_text(path: Path) -> str:
    blob = path.read_bytes()
    try:
        return blob.decode("utf-8")
    except UnicodeDecodeError:
        return blob.decode("latin-1")


def load_brainvision(vhdr_path, class_map: Mapping[str, int],
                     rest_descriptions: Sequence[str] = (),
                     emg_labels: Sequence[str] | None = None) -> Recording:
    vhdr_path = Path(vhdr_path)
    header = parse_vhdr(_read_text(vhdr_path))
    data_path = vhdr_path.parent / (header.data_file or vhdr_path.with_suffix(".eeg").name)
    markers: list[Marker] = []
    marker_name = header.marker_file or vhdr_path.with_suffix(".vmrk").name
    marker_path = vhdr_path.parent / marker_name
    if marker_path.exists():
        markers = parse_vmrk(_read_text(marker_path), class_map, rest_descriptions)
    return read_brainvision(header, data_path.read_bytes(), markers, emg_labels)


def write_brainvision(rec: Recording, vhdr_path, class_names: Mapping[int, str],
                      binary_format: BinaryFormat = BinaryFormat.IEEE_FLOAT_32,
                      resolution: float = 1.0) -> None:
    """Write `rec` as a BrainVision triplet next to `vhdr_path`.

    `class_names` maps class ids to marker descriptions (the inverse of
    the class map used when reading back).
    """
    vhdr_path = Path(vhdr_path)
    stem = vhdr_path.stem
    binary_format = BinaryFormat(binary_format)
    values = rec.data / resolution
    if binary_format is BinaryFormat.INT_16:
        values = np.clip(np.round(values), -32768, 32767)
    payload = values.T.astype(binary_format.dtype).tobytes()
    chan_lines = "\n".join(f"Ch{i + 1}={lb},,{resolution!r},µV"
                           for i, lb in enumerate(rec.labels))
    vhdr_path.write_text(
        "Brain Vision Data Exchange Header File Version 1.0\n\n"
        "[Common Infos]\nCodepage=UTF-8\n"
        f"DataFile={stem}.eeg\nMarkerFile={stem}.vmrk\n"
        "DataFormat=BINARY\nDataOrientation=MULTIPLEXED\n"
        f"NumberOfChannels={rec.n_channels}\n"
        f"SamplingInterval={1e6 / rec.fs_hz!r}\n\n"
        f"[Binary Infos]\nBinaryFormat={binary_format.value}\n\n"
        f"[Channel Infos]\n{chan_lines}\n", encoding="utf-8")
    mk_lines = ["Mk1=New Segment,,0,1,0"]
    for mk in rec.markers:
        if mk.kind is MarkerKind.CUE_ONSET:
            desc = class_names[mk.class_id]
        else:
            desc = mk.description
        mk_lines.append(f"Mk{len(mk_lines) + 1}=Stimulus,{desc},{mk.sample_index},1,0")
    vhdr_path.with_suffix(".vmrk").write_text(
        "Brain Vision Data Exchange Marker File, Version 1.0\n\n"
        f"[Common Infos]\nCodepage=UTF-8\nDataFile={stem}.eeg\n\n"
        "[Marker Infos]\n" + "\n".join(mk_lines) + "\n", encoding="utf-8")
    vhdr_path.with_suffix(".eeg").write_bytes(payload)


# ---------------------------------------------------------------------------
# session bundle

def write_session_bundle(rec: Recording, payload_file: str = "session.f32") -> tuple[str, bytes]:
    """Serialize `rec` to (manifest text, payload bytes).

    Samples are stored as float32, so the round trip is bit-exact for
    recordings whose values are float32-representable (everything read
    from a bundle is).
    """
    manifest = {
        "format": BUNDLE_FORMAT,
        "version": BUNDLE_VERSION,
        "fs_hz": float(rec.fs_hz),
        "n_channels": rec.n_channels,
        "n_samples": rec.n_samples,
        "labels": list(rec.labels),
        "modality": [m.value for m in rec.modality],
        "payload": {"file": payload_file, "dtype": "float32", "byteorder": "little",
                    "layout": "row-major channels x samples"},
        "markers": [mk.to_dict() for mk in rec.markers],
    }
    payload = np.ascontiguousarray(rec.data, dtype="<f4").tobytes()
    return json.dumps(manifest, indent=1, ensure_ascii=False) + "\n", payload


def _field(manifest, key, kind):
    if key not in manifest:
        raise SchemaError(f"manifest missing field {key!r}", key=key)
    value = manifest[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"manifest field {key!r} has type {type(value).__name__}", key=key)
    return value


def read_session_bundle(manifest: str, payload: bytes) -> Recording:
    try:
        meta = json.loads(manifest)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(meta, dict):
        raise SchemaError("manifest must be a JSON object")
    if meta.get("format") != BUNDLE_FORMAT:
        raise SchemaError(f"unknown bundle format {meta.get('format')!r}", key="format")
    fs = float(_field(meta, "fs_hz", (int, float)))
    labels = _field(meta, "labels", list)
    modality = _field(meta, "modality", list)
    markers = _field(meta, "markers", list)
    n_ch = len(labels)
    if len(modality) != n_ch:
        raise SchemaError(f"{n_ch} labels but {len(modality)} modality tags", key="modality")
    if "n_channels" in meta and _field(meta, "n_channels", int) != n_ch:
        raise SchemaError("n_channels disagrees with labels", key="n_channels")
    if n_ch == 0 or len(payload) % (4 * n_ch):
        raise SchemaError(f"payload of {len(payload)} bytes does not fit {n_ch} float32 channels",
                          key="payload")
    n_samples = len(payload) // (4 * n_ch)
    if "n_samples" in meta and _field(meta, "n_samples", int) != n_samples:
        raise SchemaError(f"payload holds {n_samples} samples, manifest says {meta['n_samples']}",
                          key="n_samples")
    try:
        mods = [Modality(m) for m in modality]
    except ValueError as exc:
        raise SchemaError(str(exc), key="modality") from None
    data = np.frombuffer(payload, dtype="<f4").reshape(n_ch, n_samples)
    return Recording(data, fs, labels, mods, tuple(Marker.from_dict(m) for m in markers))


def save_session_bundle(rec: Recording, manifest_path) -> Path:
    """Write ``<stem>.json`` and ``<stem>.f32``; returns the manifest path."""
    manifest_path = Path(manifest_path)
    payload_path = manifest_path.with_suffix(".f32")
    text, payload = write_session_bundle(rec, payload_path.name)
    payload_path.write_bytes(payload)
    manifest_path.write_text(text, encoding="utf-8")
    return manifest_path


def load_session_bundle(manifest_path) -> Recording:
    manifest_path = Path(manifest_path)
    text = manifest_path.read_text(encoding="utf-8")
    try:
        name = json.loads(text).get("payload", {}).get("file")
    except (json.JSONDecodeError, AttributeError):
        name = None
    payload_path = manifest_path.parent / (name or manifest_path.with_suffix(".f32").name)
    return read_session_bundle(text, payload_path.read_bytes())


def load_recording(path, class_map: Mapping[str, int] | None = None,
                   rest_descriptions: Sequence[str] = (),
                   emg_labels: Sequence[str] | None = None) -> Recording:
    """Load a ``.vhdr`` triplet or a bundle manifest, by file extension."""
    path = Path(path)
    if path.suffix.lower() == ".vhdr":
        return load_brainvision(path, class_map or {}, rest_descriptions, emg_labels)
    return load_session_bundle(path)
