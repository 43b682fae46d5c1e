"""2f band-level features from multichannel acquisitions.

Each acquisition event is a :class:`SpectralFrame`. Waveform channels are
reduced to the RMS inside a narrow band around twice the compressor
fundamental and expressed in dB; temperature channels reduce to their
window mean; microphone levels are averaged (in dB) into the label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import EmptyBandError, InputValidationError, SpectralRangeError

CHANNEL_KINDS = ("acceleration", "microphone", "temperature")
WAVEFORM_KINDS = ("acceleration", "microphone")

# 1 um/s^2 for vibration, 20 uPa for sound pressure
DEFAULT_DB_REFS = {"acceleration": 1e-6, "microphone": 2e-5}
DEFAULT_FLOOR_DB = -120.0
DEFAULT_HALF_BAND = 3.0
FRAME_SCHEMA_VERSION = "1.0"


def _window(name, n):
    if name in ("rect", "rectangular", None):
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown window {name!r}")


def band_rms(samples, sample_rate, f_center, half_band, window="rect", segment_duration=None):
    """RMS of the signal content in ``[f_center - half_band, f_center + half_band]``.

    Band edges are inclusive. Power is folded to one side, so a pure in-band
    sine of amplitude ``A`` gives ``A / sqrt(2)``. With ``segment_duration``
    the record is cut into non-overlapping segments of that length whose band
    powers are averaged; any remainder shorter than a segment is dropped.
    """
    x = np.asarray(samples, dtype=float).ravel()
    fs = float(sample_rate)
    nyq = fs / 2.0
    lo, hi = f_center - half_band, f_center + half_band
    if half_band < 0 or lo < 0 or hi > nyq:
        raise SpectralRangeError(
            f"band [{lo:g}, {hi:g}] Hz outside [0, {nyq:g}] Hz (fs={fs:g})"
        )
    if x.size < 2:
        raise InputValidationError("need at least 2 samples")

    seg_len = x.size
    if segment_duration is not None:
        seg_len = min(x.size, int(round(segment_duration * fs)))
    n_seg = x.size // seg_len
    segs = x[: n_seg * seg_len].reshape(n_seg, seg_len)

    freqs = np.fft.rfftfreq(seg_len, d=1.0 / fs)
    tol = 1e-9 * fs
    mask = (freqs >= lo - tol) & (freqs <= hi + tol)
    if not mask.any():
        raise EmptyBandError(f"no FFT bin in [{lo:g}, {hi:g}] Hz at resolution {fs / seg_len:g} Hz")

    w = _window(window, seg_len)
    spec = np.fft.rfft(segs * w, axis=1)
    power = np.abs(spec) ** 2 / (seg_len * np.sum(w ** 2))
    fold = np.full(freqs.size, 2.0)
    fold[0] = 1.0
    if seg_len % 2 == 0:
        fold[-1] = 1.0
    band_power = (power[:, mask] * fold[mask]).sum(axis=1).mean()
    return float(np.sqrt(band_power))


def to_db(value, reference):
    """Amplitude ratio in dB, ``20 log10(value / reference)``."""
    if reference <= 0:
        raise ValueError(f"dB reference must be positive, got {reference}")
    if not value > 0:
        raise ValueError(f"cannot take dB of non-positive value {value}")
    return 20.0 * np.log10(value / reference)


def level_db(value, reference, floor_db=DEFAULT_FLOOR_DB):
    """:func:`to_db` clipped at ``floor_db``; dead channels map to the floor."""
    if not value > 0:
        return float(floor_db)
    return float(max(to_db(value, reference), floor_db))


def label_from_mics(mic_levels_db):
    """Arithmetic mean of the microphone dB levels (not an energy average)."""
    levels = np.asarray(mic_levels_db, dtype=float).ravel()
    if levels.size == 0:
        raise InputValidationError("no microphone levels to average")
    return float(levels.mean())


@dataclass(frozen=True)
class Channel:
    channel_id: str
    kind: str
    samples: np.ndarray
    unit: str = ""

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise InputValidationError(f"channel {self.channel_id!r}: unknown kind {self.kind!r}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float).ravel())


@dataclass(frozen=True)
class SpectralFrame:
    """One acquisition event.

    Waveform channels (acceleration, microphone) share ``sample_rate`` and
    have ``round(sample_rate * duration)`` samples; temperature channels are
    quasi-static logs of any length.
    """

    channels: tuple
    sample_rate: float
    duration: float
    fundamental_f: float
    sample_id: str = ""
    condition_id: str = ""
    timestamp: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.fundamental_f > 0:
            raise InputValidationError("fundamental_f must be positive")
        if not self.sample_rate > 0 or not self.duration > 0:
            raise InputValidationError("sample_rate and duration must be positive")
        n_expected = int(round(self.sample_rate * self.duration))
        seen = set()
        for ch in self.channels:
            if ch.channel_id in seen:
                raise InputValidationError(f"duplicate channel id {ch.channel_id!r}")
            seen.add(ch.channel_id)
            if ch.kind in WAVEFORM_KINDS and ch.samples.size != n_expected:
                raise InputValidationError(
                    f"channel {ch.channel_id!r} has {ch.samples.size} samples, "
                    f"expected {n_expected} (mixed sample rates?)"
                )

    @property
    def n_samples(self) -> int:
        return int(round(self.sample_rate * self.duration))

    def check_band(self, half_band):
        top = 2.0 * self.fundamental_f + half_band
        if top >= self.sample_rate / 2.0:
            raise SpectralRangeError(
                f"2f + half band = {top:g} Hz is not below Nyquist {self.sample_rate / 2:g} Hz"
            )


@dataclass(frozen=True)
class FeatureRow:
    features: np.ndarray
    feature_names: tuple
    feature_kinds: tuple
    label_db: Optional[float]
    condition_id: str
    timestamp: str
    sample_id: str = ""


def extract_features(frame: SpectralFrame, half_band=DEFAULT_HALF_BAND,
                     db_refs: Optional[Mapping[str, float]] = None, *, window="rect",
                     segment_duration: Optional[float] = 1.0, floor_db=DEFAULT_FLOOR_DB,
                     feature_order: Optional[Sequence[str]] = None) -> FeatureRow:
    """Reduce a frame to its 2f feature vector and mic-averaged label.

    Feature order follows the frame's channel order unless ``feature_order``
    (a manifest list of channel ids) is given. Temperature channels become
    ``thermodynamic`` features.
    """
    refs = dict(DEFAULT_DB_REFS if db_refs is None else db_refs)
    frame.check_band(half_band)
    f2 = 2.0 * frame.fundamental_f

    values, names, kinds, mic_db = {}, [], [], []
    for ch in frame.channels:
        if ch.kind in WAVEFORM_KINDS and ch.kind not in refs:
            raise InputValidationError(f"no dB reference for channel kind {ch.kind!r}")
        if ch.kind == "temperature":
            if ch.samples.size == 0:
                raise InputValidationError(f"temperature channel {ch.channel_id!r} is empty")
            values[ch.channel_id] = float(ch.samples.mean())
            names.append(ch.channel_id)
            kinds.append("thermodynamic")
            continue
        rms = band_rms(ch.samples, frame.sample_rate, f2, half_band, window=window,
                       segment_duration=segment_duration)
        level = level_db(rms, refs[ch.kind], floor_db)
        if ch.kind == "microphone":
            mic_db.append(level)
        else:
            values[ch.channel_id] = level
            names.append(ch.channel_id)
            kinds.append("acceleration")

    if feature_order is not None:
        missing = [c for c in feature_order if c not in values]
        if missing:
            raise InputValidationError(f"frame {frame.sample_id!r} lacks channels {missing}")
        kind_of = dict(zip(names, kinds))
        names = list(feature_order)
        kinds = [kind_of[c] for c in names]

    return FeatureRow(
        features=np.array([values[c] for c in names], dtype=float),
        feature_names=tuple(names),
        feature_kinds=tuple(kinds),
        label_db=label_from_mics(mic_db) if mic_db else None,
        condition_id=frame.condition_id,
        timestamp=frame.timestamp,
        sample_id=frame.sample_id,
    )


# -- waveform container ---------------------------------------------------------
# <stem>.json header + <stem>.bin (little-endian float64, channel-major) or
# <stem>.csv (one line per channel).

def write_frame(directory, frame: SpectralFrame, encoding="f64le") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = frame.sample_id or "frame"
    if encoding == "f64le":
        data_name = f"{stem}.bin"
        block = np.concatenate([ch.samples for ch in frame.channels]).astype("<f8")
        (directory / data_name).write_bytes(block.tobytes())
    elif encoding == "csv":
        data_name = f"{stem}.csv"
        lines = [",".join(repr(float(v)) for v in ch.samples) for ch in frame.channels]
        (directory / data_name).write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    header = {
        "schema_version": FRAME_SCHEMA_VERSION,
        "sample_id": frame.sample_id,
        "condition_id": frame.condition_id,
        "timestamp": frame.timestamp,
        "sample_rate": frame.sample_rate,
        "duration": frame.duration,
        "fundamental_f": frame.fundamental_f,
        "encoding": encoding,
        "data_file": data_name,
        "channels": [
            {"id": ch.channel_id, "kind": ch.kind, "unit": ch.unit, "n_samples": int(ch.samples.size)}
            for ch in frame.channels
        ],
    }
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(header, sort_keys=True, indent=2) + "\n")
    return path


def read_frame(header_path) -> SpectralFrame:
    """Load a frame container; malformed input raises InputValidationError naming the file."""
    header_path = Path(header_path)
    try:
        header = json.loads(header_path.read_text())
        encoding = header["encoding"]
        counts = [int(c["n_samples"]) for c in header["channels"]]
        data_path = header_path.parent / header["data_file"]
        if encoding == "f64le":
            block = np.frombuffer(data_path.read_bytes(), dtype="<f8")
            if block.size != sum(counts):
                raise ValueError(f"data block holds {block.size} values, header declares {sum(counts)}")
            pieces = np.split(block, np.cumsum(counts)[:-1])
        elif encoding == "csv":
            lines = data_path.read_text().splitlines()
            pieces = [np.array([float(v) for v in ln.split(",")]) if ln else np.zeros(0) for ln in lines]
            if [p.size for p in pieces] != counts:
                raise ValueError("CSV channel lengths do not match header")
        else:
            raise ValueError(f"unknown encoding {encoding!r}")
        channels = [Channel(c["id"], c["kind"], s, c.get("unit", ""))
                    for c, s in zip(header["channels"], pieces)]
        return SpectralFrame(
            channels=channels,
            sample_rate=float(header["sample_rate"]),
            duration=float(header["duration"]),
            fundamental_f=float(header["fundamental_f"]),
            sample_id=header.get("sample_id", header_path.stem),
            condition_id=header.get("condition_id", ""),
            timestamp=header.get("timestamp", ""),
        )
    except InputValidationError as exc:
        raise InputValidationError(f"{header_path}: {exc}") from None
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InputValidationError(f"{header_path}: malformed frame container ({exc})") from None
