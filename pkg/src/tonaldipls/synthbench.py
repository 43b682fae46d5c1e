"""Synthetic multi-condition benchmark with controlled covariate shift.

Causal chain per sample::

    (valve opening, ambient temperature) -> thermodynamic state
        -> thermocouple readings
        -> 2f excitation sources -> structural vibration (accelerometers)
                                         -> radiated 2f noise (label)

Structure (transfer matrices, radiation weights, thermal maps) depends only on
``SuiteSpec.seed`` and the channel counts, so conditions can be added or
removed without changing any other condition's data. The maps are arbitrary
but fixed; they are not a model of real refrigerant-cycle physics.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .datasets import DomainDataset
from .exceptions import InputValidationError
from .spectral import DEFAULT_DB_REFS, DEFAULT_HALF_BAND, Channel, SpectralFrame

VALVE_MODES = ("fixed", "auto", "closed")
N_SOURCES = 3  # compression pulsation, injection pulsation, mechanical imbalance
N_DISTURBANCES = 2
# ambient values are normalized against this reference range so that the
# structure does not depend on any single condition's drawn range
_AMBIENT_REF = (-1.0, 5.0)


def sub_seed(*parts) -> int:
    """Stable 64-bit seed from ``parts`` (blake2b over their repr)."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class ConditionSpec:
    condition_id: str
    valve_mode: str = "fixed"
    opening: float = 80.0
    opening_range: tuple = (90.0, 105.0)
    ambient_range: tuple = (-1.0, 5.0)
    n_samples: int = 80
    mechanism_shift: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "opening_range", tuple(float(v) for v in self.opening_range))
        object.__setattr__(self, "ambient_range", tuple(float(v) for v in self.ambient_range))
        where = f"condition {self.condition_id!r}"
        if not isinstance(self.condition_id, str) or not self.condition_id:
            raise InputValidationError("condition_id must be a non-empty string")
        if self.valve_mode not in VALVE_MODES:
            raise InputValidationError(f"{where}: valve_mode must be one of {VALVE_MODES}")
        lo, hi = self.ambient_range
        if lo > hi:
            raise InputValidationError(f"{where}: ambient_range low > high")
        if self.valve_mode == "auto":
            olo, ohi = self.opening_range
            if not olo < ohi:
                raise InputValidationError(f"{where}: auto mode needs a non-empty opening_range")
        if not 0.0 <= self.mechanism_shift <= 1.0:
            raise InputValidationError(f"{where}: mechanism_shift must lie in [0, 1]")
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise InputValidationError(f"{where}: n_samples must be an integer >= 2")


@dataclass(frozen=True)
class SuiteSpec:
    conditions: tuple
    n_accel_channels: int = 39
    n_thermo_channels: int = 66
    n_mics: int = 8
    label_range_target: tuple = (40.0, 55.0)
    seed: int = 20240611
    sample_count_range: tuple = (40, 120)
    feature_noise_db: float = 1.0
    thermo_noise: float = 0.3
    label_noise_db: float = 0.5
    fundamental_f: float = 60.0
    sample_rate: float = 20000.0
    duration: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "label_range_target", tuple(self.label_range_target))
        object.__setattr__(self, "sample_count_range", tuple(self.sample_count_range))
        if len(self.conditions) < 3:
            raise InputValidationError("a suite needs at least 3 conditions")
        ids = [c.condition_id for c in self.conditions]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise InputValidationError(f"duplicate condition_id(s): {', '.join(dupes)}")
        for name in ("n_accel_channels", "n_thermo_channels", "n_mics"):
            if getattr(self, name) < 1:
                raise InputValidationError(f"{name} must be >= 1")
        if self.n_accel_channels < 6:
            raise InputValidationError("n_accel_channels must be >= 6 (shell/pipe/panel groups)")
        lo, hi = self.sample_count_range
        for c in self.conditions:
            if not lo <= c.n_samples <= hi:
                raise InputValidationError(
                    f"condition {c.condition_id!r}: n_samples={c.n_samples} outside [{lo}, {hi}]"
                )
        a, b = self.label_range_target
        if not a < b:
            raise InputValidationError("label_range_target must be increasing")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputValidationError("seed must fit in an unsigned 64-bit integer")

    @property
    def accel_names(self):
        return tuple(f"acc{j + 1:02d}" for j in range(self.n_accel_channels))

    @property
    def thermo_names(self):
        return tuple(f"tc{j + 1:02d}" for j in range(self.n_thermo_channels))

    @property
    def mic_names(self):
        return tuple(f"mic{j + 1}" for j in range(self.n_mics))

    @property
    def feature_names(self):
        return self.accel_names + self.thermo_names

    @property
    def feature_kinds(self):
        return ("acceleration",) * self.n_accel_channels + ("thermodynamic",) * self.n_thermo_channels

    def condition(self, condition_id) -> ConditionSpec:
        for c in self.conditions:
            if c.condition_id == condition_id:
                return c
        raise KeyError(condition_id)

    def to_dict(self):
        doc = asdict(self)
        doc["conditions"] = [asdict(c) for c in self.conditions]
        return doc


def default_suite(n_conditions=6, seed=20240611) -> SuiteSpec:
    """Default benchmark: fixed openings plus one auto and one valve-closed case.

    ``n_conditions`` may range from 6 to 19; extra conditions are fixed
    openings spread over the valve range.
    """
    if not 6 <= n_conditions <= 19:
        raise InputValidationError("n_conditions must lie in [6, 19]")
    n_fixed = n_conditions - 2
    openings = np.linspace(40.0, 120.0, n_fixed)
    counts = [60, 80, 100, 70, 110, 50, 90, 120, 40, 75, 85, 95, 65, 55, 105, 45, 115]
    conds = []
    for j, op in enumerate(openings):
        conds.append(ConditionSpec(f"case{len(conds) + 1:02d}", "fixed", float(round(op, 1)),
                                   n_samples=counts[j], mechanism_shift=0.0))
        if len(conds) == 3:
            conds.append(ConditionSpec(f"case{len(conds) + 1:02d}", "auto", 97.5,
                                       opening_range=(90.0, 105.0), n_samples=90,
                                       mechanism_shift=0.4))
            conds.append(ConditionSpec(f"case{len(conds) + 1:02d}", "closed", 0.0,
                                       n_samples=70, mechanism_shift=1.0))
    return SuiteSpec(conditions=tuple(conds), seed=seed)


# -- JSON I/O -------------------------------------------------------------------

def suite_from_dict(doc) -> SuiteSpec:
    if not isinstance(doc, dict):
        raise InputValidationError("suite spec must be a JSON object")
    known = {f.name for f in fields(SuiteSpec)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise InputValidationError(f"unknown suite field(s): {', '.join(unknown)}")
    if "conditions" not in doc or not isinstance(doc["conditions"], list):
        raise InputValidationError("field 'conditions' must be a list")
    cfields = {f.name for f in fields(ConditionSpec)}
    conds = []
    for i, c in enumerate(doc["conditions"]):
        if not isinstance(c, dict):
            raise InputValidationError(f"conditions[{i}] must be an object")
        bad = sorted(set(c) - cfields)
        if bad:
            raise InputValidationError(f"conditions[{i}]: unknown field(s) {', '.join(bad)}")
        try:
            conds.append(ConditionSpec(**c))
        except TypeError as exc:
            raise InputValidationError(f"conditions[{i}]: {exc}") from None
        except InputValidationError as exc:
            raise InputValidationError(f"conditions[{i}]: {exc}") from None
    rest = {k: v for k, v in doc.items() if k != "conditions"}
    try:
        return SuiteSpec(conditions=tuple(conds), **rest)
    except TypeError as exc:
        raise InputValidationError(str(exc)) from None


def load_suite(path) -> SuiteSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputValidationError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise InputValidationError(f"{path}: {exc}") from None
    try:
        return suite_from_dict(doc)
    except InputValidationError as exc:
        raise InputValidationError(f"{path}: {exc}") from None


# -- structure ----------------------------------------------------------------

@dataclass(frozen=True)
class _Structure:
    shell: np.ndarray        # boolean masks over accel channels
    pipe: np.ndarray
    H: np.ndarray            # (n_acc, N_SOURCES) source-to-channel transfer, dB/dB
    gain: np.ndarray         # (n_acc,) channel offsets, dB
    radiation: np.ndarray    # (n_acc,) weights, zero on pipes
    exc_open: np.ndarray     # (N_SOURCES, 5) excitation map for open valve
    exc_closed: np.ndarray   # (N_SOURCES, 5) excitation map for closed valve
    th_base: np.ndarray      # (n_th,)
    th_lin: np.ndarray       # (n_th, 5)
    th_quad: np.ndarray      # (n_th,)
    th_inj: np.ndarray       # (n_th,) injection-line sensitivity
    mic_offsets: np.ndarray  # (n_mics,) zero-sum directivity offsets
    label_scale: float
    label_offset: float


def _state(opening, ambient, closed):
    """Thermodynamic state features ``[ambient, u, u^2, ambient*u, closed]``."""
    lo, hi = _AMBIENT_REF
    a = (np.asarray(ambient, float) - (lo + hi) / 2) / ((hi - lo) / 2)
    u = np.where(closed, 0.0, np.asarray(opening, float) / 100.0)
    c = np.broadcast_to(np.asarray(closed, float), a.shape)
    return np.column_stack([a, u, u ** 2, a * u, c])


_EXC_BASE = np.array([72.0, 66.0, 64.0])


def _excitation(st, S, closed):
    exc = _EXC_BASE + st @ S.exc_open.T
    exc_c = _EXC_BASE + st @ S.exc_closed.T
    return np.where(np.asarray(closed)[:, None], exc_c, exc)


@lru_cache(maxsize=32)
def _structure(seed, n_acc, n_th, n_mics, label_lo, label_hi) -> _Structure:
    rng = np.random.default_rng(sub_seed(seed, "structure", n_acc, n_th, n_mics))
    n_shell = max(1, n_acc // 5)
    n_pipe = max(1, n_acc // 3)
    shell = np.zeros(n_acc, bool)
    shell[:n_shell] = True
    pipe = np.zeros(n_acc, bool)
    pipe[n_shell:n_shell + n_pipe] = True

    H = rng.dirichlet(np.full(N_SOURCES, 1.5), size=n_acc)
    H[shell] = 0.5 * H[shell] + 0.5 * rng.dirichlet([4.0, 2.0, 4.0], size=shell.sum())
    gain = rng.uniform(18.0, 32.0, n_acc)
    radiation = np.where(pipe, 0.0, rng.uniform(0.2, 1.0, n_acc))
    radiation /= radiation.sum()

    # columns act on [ambient, u, u^2, ambient*u, closed]
    exc_open = np.array([
        [4.0, 1.5, -0.5, 0.5, 0.0],
        [2.5, 4.0, -2.0, 1.0, 0.0],
        [3.0, 0.5, 0.0, 0.5, 0.0],
    ])
    # single-suction cycle: injection pulsation gone, compression pulsation up
    exc_closed = np.array([
        [-4.0, 0.0, 0.0, 0.0, 6.5],
        [1.0, 0.0, 0.0, 0.0, -5.0],
        [-3.0, 0.0, 0.0, 0.0, 4.5],
    ])

    th_base = rng.uniform(10.0, 70.0, n_th)
    th_lin = rng.normal(0.0, 1.0, (n_th, 5)) * np.array([2.5, 3.0, 1.0, 1.0, 0.0])
    th_quad = rng.normal(0.0, 1.0, n_th)
    th_inj = np.zeros(n_th)
    n_inj = max(1, n_th // 6)
    th_inj[:n_inj] = rng.uniform(6.0, 12.0, n_inj) * rng.choice([-1.0, 1.0], n_inj)

    mic_offsets = rng.normal(0.0, 1.5, n_mics)
    mic_offsets -= mic_offsets.mean()

    S = _Structure(shell, pipe, H, gain, radiation, exc_open, exc_closed, th_base, th_lin,
                   th_quad, th_inj, mic_offsets, 1.0, 0.0)
    # label calibration over a fixed reference grid of operating points
    g_open, g_amb = np.meshgrid(np.linspace(30.0, 120.0, 10), np.linspace(*_AMBIENT_REF, 7))
    amb = np.concatenate([g_amb.ravel(), np.linspace(*_AMBIENT_REF, 7)])
    opn = np.concatenate([g_open.ravel(), np.zeros(7)])
    closed = np.concatenate([np.zeros(g_amb.size, bool), np.ones(7, bool)])
    raw = (gain + _excitation(_state(opn, amb, closed), S, closed) @ H.T) @ radiation
    # the closed unit radiates at the open grid's mean level, so the valve
    # state changes how noise is produced rather than how loud it is
    lift = np.zeros(N_SOURCES)
    lift[[0, 2]] = 1.0
    per_unit = lift @ H.T @ radiation
    delta = (raw[~closed].mean() - raw[closed].mean()) / per_unit
    exc_closed = exc_closed.copy()
    exc_closed[:, 4] += delta * lift
    S = replace(S, exc_closed=exc_closed)
    raw = (gain + _excitation(_state(opn, amb, closed), S, closed) @ H.T) @ radiation
    scale = (label_hi - label_lo - 2.0) / (raw.max() - raw.min())
    offset = label_lo + 1.0 - scale * raw.min()
    return replace(S, label_scale=float(scale), label_offset=float(offset))


def structure_for(suite: SuiteSpec) -> _Structure:
    return _structure(int(suite.seed), suite.n_accel_channels, suite.n_thermo_channels,
                      suite.n_mics, *map(float, suite.label_range_target))


# -- generation ---------------------------------------------------------------

@dataclass(frozen=True)
class _Draw:
    opening: np.ndarray
    ambient: np.ndarray
    excitation: np.ndarray   # (n, N_SOURCES) dB
    accel_clean: np.ndarray  # structural vibration without disturbance/noise
    accel: np.ndarray
    thermo: np.ndarray
    labels: np.ndarray
    mic_levels: np.ndarray   # (n, n_mics)


def _condition_seed(suite: SuiteSpec, spec: ConditionSpec, seed: Optional[int]):
    return sub_seed(int(suite.seed if seed is None else seed), spec.condition_id)


def _draw(spec: ConditionSpec, suite: SuiteSpec, seed: Optional[int] = None) -> _Draw:
    S = structure_for(suite)
    n = int(spec.n_samples)
    cseed = _condition_seed(suite, spec, seed)
    rng = np.random.default_rng(cseed)
    # path perturbation and disturbance coupling are fixed per condition
    prng = np.random.default_rng(sub_seed(cseed, "path"))
    n_acc, n_th = suite.n_accel_channels, suite.n_thermo_channels

    lo, hi = spec.ambient_range
    ambient = rng.uniform(lo, hi, n)
    closed = np.full(n, spec.valve_mode == "closed")
    if spec.valve_mode == "auto":
        opening = rng.uniform(*spec.opening_range, n)
    elif spec.valve_mode == "closed":
        opening = np.zeros(n)
    else:
        opening = np.full(n, float(spec.opening))
    st = _state(opening, ambient, closed)

    exc = _excitation(st, S, closed)

    m = float(spec.mechanism_shift)
    H_c = S.H + m * prng.normal(0.0, 0.25, S.H.shape)
    # flow-induced pipe vibration: partly along the injection-source pattern,
    # so it mimics excitation on the pipes without radiating
    G = np.zeros((n_acc, N_DISTURBANCES))
    pattern = np.where(S.pipe, S.H[:, 1], 0.0)
    G[:, 0] = 3.0 * pattern / np.linalg.norm(pattern)
    G[S.pipe, 1] = prng.normal(0.0, 1.0, S.pipe.sum())
    G[~S.pipe, 1] = prng.normal(0.0, 0.15, (~S.pipe).sum())
    dist = rng.normal(0.0, 6.0, (n, N_DISTURBANCES))
    noise_sd = suite.feature_noise_db * np.where(S.pipe, 0.4, 1.0)
    # path perturbation acts on excitation swings, not on absolute levels
    accel_clean = S.gain + _EXC_BASE @ S.H.T + (exc - _EXC_BASE) @ H_c.T
    accel = accel_clean + m * dist @ G.T + rng.normal(0.0, 1.0, (n, n_acc)) * noise_sd

    injection = np.where(closed, 0.0, st[:, 1])
    thermo = (S.th_base + st @ S.th_lin.T + np.outer(np.tanh(st[:, 0] * st[:, 1]), S.th_quad)
              + np.outer(injection - 0.8, S.th_inj)
              + rng.normal(0.0, suite.thermo_noise, (n, n_th)))

    labels = (S.label_offset + S.label_scale * (accel_clean @ S.radiation)
              + rng.normal(0.0, suite.label_noise_db, n))
    mic_levels = labels[:, None] + S.mic_offsets
    return _Draw(opening, ambient, exc, accel_clean, accel, thermo, labels, mic_levels)


def generate_condition(spec: ConditionSpec, suite: SuiteSpec,
                       seed: Optional[int] = None) -> DomainDataset:
    """Labeled dataset for one condition: acceleration then thermocouple columns."""
    if spec.valve_mode == "auto" and not spec.opening_range[0] < spec.opening_range[1]:
        raise InputValidationError(f"condition {spec.condition_id!r}: empty opening_range")
    d = _draw(spec, suite, seed)
    return DomainDataset(
        features=np.hstack([d.accel, d.thermo]),
        labels=d.labels,
        condition_id=spec.condition_id,
        sample_ids=tuple(f"{spec.condition_id}-{i:04d}" for i in range(spec.n_samples)),
        feature_names=suite.feature_names,
        feature_kinds=suite.feature_kinds,
        meta={"valve_mode": spec.valve_mode, "mechanism_shift": spec.mechanism_shift,
              "opening": d.opening, "ambient": d.ambient},
    )


def generate_suite(suite: SuiteSpec) -> list[DomainDataset]:
    """One dataset per condition, each from its own ``(seed, condition_id)`` sub-seed."""
    ids = [c.condition_id for c in suite.conditions]
    if len(set(ids)) != len(ids):
        raise InputValidationError("duplicate condition ids in suite")
    return [generate_condition(c, suite) for c in suite.conditions]


def _notched_noise(rng, n_total, fs, f2, guard, rms):
    """Periodic (1 s) broadband noise with no energy within ``guard`` Hz of ``f2``.

    Components sit on integer-Hz frequencies, so 1 s analysis segments see
    them bin-exactly and none of their power reaches the analysis band.
    """
    period = int(round(fs))
    freqs = np.fft.rfftfreq(period, d=1.0 / fs)
    spec = rng.normal(size=freqs.size) + 1j * rng.normal(size=freqs.size)
    spec[0] = 0.0
    spec[np.abs(freqs - f2) <= guard] = 0.0
    one = np.fft.irfft(spec, n=period)
    one *= rms / max(np.sqrt(np.mean(one ** 2)), np.finfo(float).tiny)
    reps = -(-n_total // period)
    return np.tile(one, reps)[:n_total]


def render_waveforms(spec: ConditionSpec, suite: SuiteSpec, sample_index: int, *,
                     excitation_scale=1.0, db_refs=None, half_band=DEFAULT_HALF_BAND,
                     background_rms_ratio=0.5) -> SpectralFrame:
    """Time-domain frame whose 2f band levels reproduce the generated features.

    Accelerometer and microphone channels carry a 2f tone at the generated
    level plus background noise kept out of the analysis band; thermocouple
    channels log ten 1 Hz readings averaging to the generated temperature.
    ``excitation_scale=0`` silences every tone.
    """
    if not 0 <= sample_index < spec.n_samples:
        raise IndexError(f"sample_index {sample_index} out of range [0, {spec.n_samples})")
    refs = dict(DEFAULT_DB_REFS if db_refs is None else db_refs)
    d = _draw(spec, suite)
    fs, dur = float(suite.sample_rate), float(suite.duration)
    f2 = 2.0 * suite.fundamental_f
    if f2 + half_band >= fs / 2:
        raise InputValidationError("2f band above Nyquist for the suite's sample rate")
    n = int(round(fs * dur))
    t = np.arange(n) / fs
    rng = np.random.default_rng(sub_seed(_condition_seed(suite, spec, None), "render", sample_index))
    guard = half_band + 2.0

    def tone_channel(level_db, ref):
        amp = excitation_scale * np.sqrt(2.0) * ref * 10.0 ** (level_db / 20.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        noise_rms = background_rms_ratio * np.sqrt(2.0) * ref * 10.0 ** (level_db / 20.0)
        return amp * np.sin(2 * np.pi * f2 * t + phase) + _notched_noise(rng, n, fs, f2, guard,
                                                                         noise_rms)

    channels = []
    for name, level in zip(suite.accel_names, d.accel[sample_index]):
        channels.append(Channel(name, "acceleration", tone_channel(level, refs["acceleration"]), "m/s^2"))
    for name, level in zip(suite.mic_names, d.mic_levels[sample_index]):
        channels.append(Channel(name, "microphone", tone_channel(level, refs["microphone"]), "Pa"))
    for name, temp in zip(suite.thermo_names, d.thermo[sample_index]):
        jitter = rng.normal(0.0, 0.05, 10)
        channels.append(Channel(name, "temperature", temp + jitter - jitter.mean(), "degC"))
    return SpectralFrame(
        channels=channels,
        sample_rate=fs,
        duration=dur,
        fundamental_f=float(suite.fundamental_f),
        sample_id=f"{spec.condition_id}-{sample_index:04d}",
        condition_id=spec.condition_id,
        timestamp=f"PT{sample_index}M",
    )
