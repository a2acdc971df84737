"""Synthetic ocular-event streams, windowing, the DTR1 file format and the
biased window sampler.

Label process
-------------
A semi-Markov chain over segments: a fixation is followed by a saccade or,
with probability ``p_blink``, a blink; saccades and blinks are always followed
by a fixation. A fraction ``micro_rate`` of fixations are "micro" fixations
(a few steps long), giving bursts of short saccade/fixation alternations.

Durations are ``min_len + LogNormal`` rounded to whole steps, with the
log-normal shifted so the mean and std match the class targets. Saccade and
blink targets are fixed; ``p_blink`` and the fixation mean are solved from the
target class-time distribution, so the long-run label frequencies match it.

Signal model
------------
Each channel is a fixed linear mix of a 2-D gaze position and a blink
component, plus white noise. Gaze holds still (with slow AR(1) drift) during
fixations, ramps to a new random target during saccades and freezes during
blinks. Blinks add a half-sine bump on a frontal channel subset, which the
vertical gaze axis also loads on, so vertical saccades and blinks look alike
apart from duration and shape.

DTR1 layout (little-endian)
---------------------------
``b"DTR1"``, u32 version, u32 C, u32 T, u32 count, then per record: u32
source_id, u32 window_index, f64 signal[C*T] (row-major), u8 labels[T], u32
CRC32 of everything in the record before the checksum.
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, EmptyDataset, FormatError

FIXATION, SACCADE, BLINK = 0, 1, 2
CLASS_NAMES = ("fixation", "saccade", "blink")

# Large Grid label distribution, fixation / saccade / blink
TARGET_DISTRIBUTION = (0.9226, 0.0659, 0.0115)
# mean/std event lengths in samples (fixation, saccade, blink), scaled by 1/5 below
REFERENCE_DURATIONS = ((421.0, 359.0), (30.0, 35.0), (56.0, 63.0))
DESK_SCALE = 5.0


@dataclass(frozen=True)
class ClassProfile:
    mean: float
    std: float
    min_len: int

    def __post_init__(self):
        if not (self.mean > 0 and self.std > 0):
            raise ConfigError(f"duration mean/std must be positive: {self}")
        if self.min_len < 2:
            raise ConfigError(f"minimum duration must be >= 2 steps: {self}")
        if self.mean <= self.min_len:
            raise ConfigError(f"duration mean must exceed min_len: {self}")

    def sample(self, rng: np.random.Generator, size=None):
        m = self.mean - self.min_len
        s2 = math.log1p((self.std / m) ** 2)
        x = rng.lognormal(math.log(m) - s2 / 2, math.sqrt(s2), size)
        return np.maximum(np.rint(x), 0).astype(np.int64) + self.min_len


@dataclass
class GenConfig:
    channels: int = 8
    window: int = 100
    num_classes: int = 3
    class_distribution: tuple = TARGET_DISTRIBUTION
    saccade_mean: float = REFERENCE_DURATIONS[1][0] / DESK_SCALE
    saccade_std: float = REFERENCE_DURATIONS[1][1] / DESK_SCALE
    blink_mean: float = REFERENCE_DURATIONS[2][0] / DESK_SCALE
    blink_std: float = REFERENCE_DURATIONS[2][1] / DESK_SCALE
    fixation_cv: float = REFERENCE_DURATIONS[0][1] / REFERENCE_DURATIONS[0][0]
    min_len: tuple = (4, 2, 4)
    micro_rate: float = 0.05
    micro_fixation_mean: float = 5.0
    noise_sigma: float = 0.1
    drift_sigma: float = 0.01
    saccade_min_amplitude: float = 0.5
    blink_amplitude: tuple = (1.5, 3.0)
    frontal_fraction: float = 0.25
    montage_seed: int = 1234
    seed: int = 0

    def __post_init__(self):
        self.class_distribution = tuple(float(x) for x in self.class_distribution)
        self.min_len = tuple(int(x) for x in self.min_len)
        self.blink_amplitude = tuple(float(x) for x in self.blink_amplitude)
        self.validate()

    def validate(self):
        d = np.asarray(self.class_distribution)
        if self.num_classes != 3 or d.shape != (3,):
            raise ConfigError("the ocular generator has exactly 3 classes")
        if (d < 0).any() or not math.isclose(d.sum(), 1.0, abs_tol=1e-9):
            raise ConfigError(f"class distribution must be non-negative and sum to 1, got {tuple(d)}")
        if d[FIXATION] == 0:
            raise ConfigError("fixations must have positive probability (they separate all other events)")
        if not 0 <= self.micro_rate < 1:
            raise ConfigError("micro_rate must be in [0, 1)")
        if self.channels < 1 or self.window < 1:
            raise ConfigError("channels and window must be positive")
        if self.noise_sigma < 0 or self.drift_sigma < 0:
            raise ConfigError("noise levels must be non-negative")

    # --- derived process parameters ---
    @property
    def single_class(self) -> bool:
        return self.class_distribution[SACCADE] + self.class_distribution[BLINK] == 0

    @property
    def p_blink(self) -> float:
        pf, ps, pb = self.class_distribution
        if pb == 0:
            return 0.0
        if ps == 0:
            return 1.0
        return 1.0 / (1.0 + ps * self.blink_mean / (pb * self.saccade_mean))

    @property
    def fixation_mean(self) -> float:
        """Mean fixation length (micro fixations included) that hits the target split."""
        pf, ps, pb = self.class_distribution
        p = self.p_blink
        return pf * ((1 - p) * self.saccade_mean + p * self.blink_mean) / (ps + pb)

    def profiles(self) -> dict:
        fm = self.fixation_mean
        long_mean = (fm - self.micro_rate * self.micro_fixation_mean) / (1 - self.micro_rate)
        return {
            "fixation": ClassProfile(long_mean, self.fixation_cv * long_mean, self.min_len[FIXATION]),
            "micro_fixation": ClassProfile(self.micro_fixation_mean, self.micro_fixation_mean / 2, 3),
            "saccade": ClassProfile(self.saccade_mean, self.saccade_std, self.min_len[SACCADE]),
            "blink": ClassProfile(self.blink_mean, self.blink_std, self.min_len[BLINK]),
        }

    def expected_mean_duration(self, k: int) -> float:
        return (self.fixation_mean, self.saccade_mean, self.blink_mean)[k]

    # --- serialization ---
    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "GenConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def montage(cfg: GenConfig):
    """Channel mixing weights for gaze (C, 2) and blink (C,), fixed by montage_seed."""
    rng = np.random.default_rng(cfg.montage_seed)
    C = cfg.channels
    n_front = max(1, int(round(cfg.frontal_fraction * C)))
    gaze = rng.normal(0.0, 1.0, (C, 2))
    gaze[:n_front, 1] = np.abs(gaze[:n_front, 1]) + 0.5
    blink = np.zeros(C)
    blink[:n_front] = rng.uniform(0.5, 1.0, n_front)
    return gaze, blink


def sample_segments(cfg: GenConfig, total_len: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """(class, duration) segments covering at least ``total_len`` steps."""
    if cfg.single_class:
        return [(FIXATION, total_len)]
    prof = cfg.profiles()
    p_blink = cfg.p_blink
    segs = []
    t = 0
    state = FIXATION if rng.random() < cfg.class_distribution[FIXATION] else SACCADE
    while t < total_len:
        if state == FIXATION:
            micro = rng.random() < cfg.micro_rate
            d = int(prof["micro_fixation" if micro else "fixation"].sample(rng))
            nxt = BLINK if rng.random() < p_blink else SACCADE
        elif state == SACCADE:
            d = int(prof["saccade"].sample(rng))
            nxt = FIXATION
        else:
            d = int(prof["blink"].sample(rng))
            nxt = FIXATION
        segs.append((state, d))
        t += d
        state = nxt
    return segs


def render(cfg: GenConfig, segs, total_len: int, rng: np.random.Generator):
    gaze_mix, blink_mix = montage(cfg)
    gaze = np.zeros((total_len, 2))
    blink = np.zeros(total_len)
    labels = np.zeros(total_len, dtype=np.uint8)
    pos = rng.uniform(-1, 1, 2)
    t = 0
    for k, d in segs:
        if t >= total_len:
            break
        e = min(t + d, total_len)
        n = e - t
        labels[t:e] = k
        if k == FIXATION:
            steps = rng.normal(0.0, cfg.drift_sigma, (n, 2))
            gaze[t:e] = pos + np.cumsum(steps, axis=0)
            pos = gaze[e - 1].copy()
        elif k == SACCADE:
            while True:
                target = rng.uniform(-1, 1, 2)
                if np.linalg.norm(target - pos) >= cfg.saccade_min_amplitude:
                    break
            frac = (np.arange(1, d + 1) / d)[:n, None]
            gaze[t:e] = pos + frac * (target - pos)
            pos = gaze[e - 1].copy()
        else:
            gaze[t:e] = pos
            amp = rng.uniform(*cfg.blink_amplitude)
            blink[t:e] = amp * np.sin(np.pi * (np.arange(n) + 0.5) / d)
        t = e
    signal = gaze @ gaze_mix.T + blink[:, None] * blink_mix[None, :]
    if cfg.noise_sigma > 0:
        signal = signal + rng.normal(0.0, cfg.noise_sigma, signal.shape)
    return np.ascontiguousarray(signal.T), labels


def generate_stream(cfg: GenConfig, total_len: int, return_segments: bool = False):
    """Signal (C, total_len) and labels (total_len,), reproducible from cfg.seed."""
    cfg.validate()
    if total_len < cfg.window:
        raise ConfigError(f"total_len {total_len} shorter than one window ({cfg.window})")
    rng = np.random.default_rng(cfg.seed)
    segs = sample_segments(cfg, total_len, rng)
    signal, labels = render(cfg, segs, total_len, rng)
    if return_segments:
        return signal, labels, segs
    return signal, labels


@dataclass
class WindowRecord:
    signal: np.ndarray  # (C, T) float64
    labels: np.ndarray  # (T,) uint8
    source_id: int = 0
    window_index: int = 0

    def __eq__(self, other):
        return (isinstance(other, WindowRecord)
                and self.source_id == other.source_id
                and self.window_index == other.window_index
                and np.array_equal(self.signal, other.signal)
                and np.array_equal(self.labels, other.labels))


def cut_windows(signal, labels, T: int, stride: int | None = None, source_id: int = 0) -> list[WindowRecord]:
    stride = stride or T
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = labels.shape[0]
    return [
        WindowRecord(np.ascontiguousarray(signal[:, s:s + T], dtype=np.float64),
                     np.asarray(labels[s:s + T], dtype=np.uint8).copy(), source_id, i)
        for i, s in enumerate(range(0, n - T + 1, stride))
    ]


def make_split(cfg: GenConfig, n_windows: int, source_id: int) -> list[WindowRecord]:
    """``n_windows`` non-overlapping windows from one stream seeded by cfg.seed."""
    sig, lab = generate_stream(cfg, n_windows * cfg.window)
    return cut_windows(sig, lab, cfg.window, cfg.window, source_id)


# --- DTR1 files ---

MAGIC = b"DTR1"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")
_REC_HEAD = struct.Struct("<II")


def write_dataset(path, records: Sequence[WindowRecord], channels: int | None = None, window: int | None = None):
    if records:
        channels, window = records[0].signal.shape
    if channels is None or window is None:
        channels, window = channels or 0, window or 0
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, channels, window, len(records)))
        for r in records:
            if r.signal.shape != (channels, window) or r.labels.shape != (window,):
                raise ValueError(f"record {r.window_index} has shape {r.signal.shape}, expected {(channels, window)}")
            payload = (_REC_HEAD.pack(r.source_id, r.window_index)
                       + np.asarray(r.signal, dtype="<f8").tobytes(order="C")
                       + np.asarray(r.labels, dtype=np.uint8).tobytes())
            f.write(payload)
            f.write(struct.pack("<I", zlib.crc32(payload)))


def read_dataset(path) -> list[WindowRecord]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a DTR1 header")
    magic, version, C, T, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    rec_size = _REC_HEAD.size + 8 * C * T + T
    need = _HEADER.size + count * (rec_size + 4)
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes for {count} records, found {len(data)}")
    out = []
    off = _HEADER.size
    for i in range(count):
        payload = data[off:off + rec_size]
        (crc,) = struct.unpack_from("<I", data, off + rec_size)
        if zlib.crc32(payload) != crc:
            raise FormatError(f"{path}: checksum mismatch in record {i}")
        sid, widx = _REC_HEAD.unpack_from(payload, 0)
        sig = np.frombuffer(payload, dtype="<f8", count=C * T, offset=_REC_HEAD.size).reshape(C, T)
        lab = np.frombuffer(payload, dtype=np.uint8, count=T, offset=_REC_HEAD.size + 8 * C * T)
        out.append(WindowRecord(sig.astype(np.float64), lab.copy(), sid, widx))
        off += rec_size + 4
    return out


# --- biased sampling ---

def sampling_probabilities(records: Sequence[WindowRecord], class_boost) -> np.ndarray:
    """Per-window draw probability: max boost over the classes present, normalized."""
    if not records:
        raise EmptyDataset("cannot sample from an empty dataset")
    boost = np.asarray(class_boost, dtype=np.float64)
    if (boost < 1).any():
        raise ValueError("class boosts must be >= 1")
    K = boost.size
    w = np.empty(len(records))
    for i, r in enumerate(records):
        present = np.bincount(r.labels, minlength=K)[:K] > 0
        w[i] = boost[present].max() if present.any() else 1.0
    return w / w.sum()


def biased_sampler(records: Sequence[WindowRecord], class_boost, seed: int, chunk: int = 4096) -> Iterator[int]:
    """Infinite i.i.d. stream of window indices under ``sampling_probabilities``."""
    p = sampling_probabilities(records, class_boost)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    while True:
        for i in np.searchsorted(cdf, rng.random(chunk), side="right"):
            yield int(i)


# --- dataset statistics ---

def class_time_distribution(records_or_labels, num_classes: int = 3) -> np.ndarray:
    labs = [r.labels if isinstance(r, WindowRecord) else r for r in records_or_labels]
    counts = np.bincount(np.concatenate(labs).astype(np.int64), minlength=num_classes)[:num_classes]
    return counts / max(counts.sum(), 1)


def event_durations(records_or_labels, num_classes: int = 3) -> dict[int, list[int]]:
    """Run lengths per class, counted within each window."""
    from .events import run_lengths

    out = {k: [] for k in range(num_classes)}
    for r in records_or_labels:
        labels = r.labels if isinstance(r, WindowRecord) else r
        for k, s, e in run_lengths(labels):
            out[k].append(e - s)
    return out


def max_events_per_window(records: Sequence[WindowRecord]) -> int:
    from .events import run_lengths

    return max((len(run_lengths(r.labels)) for r in records), default=0)
