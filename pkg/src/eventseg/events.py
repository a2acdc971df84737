"""Event and dense-labeling types, and conversions between the two.

An event is stored as (class_id, center, length) with center and length given
as fractions of the window. Rasterization onto integer timesteps uses the
half-open range ``[round(T*(c - l/2)), round(T*(c + l/2)))`` with round-half-up,
which makes ``events_to_dense(dense_to_events(d)) == d`` exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import OverlapError


@dataclass(frozen=True)
class Event:
    class_id: int
    center: float
    length: float

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        if not self.length > 0:
            raise ValueError(f"event length must be positive, got {self.length}")

    @property
    def start(self) -> float:
        return min(max(self.center - self.length / 2, 0.0), 1.0)

    @property
    def end(self) -> float:
        return min(max(self.center + self.length / 2, 0.0), 1.0)


@dataclass(frozen=True)
class EventSet:
    events: tuple[Event, ...]
    window_len: int

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def classes(self) -> np.ndarray:
        return np.array([e.class_id for e in self.events], dtype=np.int64)

    def boxes(self) -> np.ndarray:
        """(M, 2) array of (center, length)."""
        if not self.events:
            return np.zeros((0, 2))
        return np.array([[e.center, e.length] for e in self.events], dtype=np.float64)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def raster_range(center: float, length: float, T: int) -> tuple[int, int]:
    """Integer half-open timestep range covered by a (center, length) box."""
    lo = round_half_up(T * (center - length / 2))
    hi = round_half_up(T * (center + length / 2))
    return min(max(lo, 0), T), min(max(hi, 0), T)


def run_lengths(labels: Sequence[int]) -> list[tuple[int, int, int]]:
    """Maximal runs of equal labels as (label, start, end) with end exclusive."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    cuts = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], cuts))
    ends = np.concatenate((cuts, [labels.size]))
    return [(int(labels[s]), int(s), int(e)) for s, e in zip(starts, ends)]


def dense_to_events(labels: Sequence[int]) -> EventSet:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("dense labeling must be a non-empty 1-D sequence")
    T = labels.size
    events = [Event(k, (s + e) / 2 / T, (e - s) / T) for k, s, e in run_lengths(labels)]
    return EventSet(tuple(events), T)


def events_to_dense(events: EventSet | Iterable[Event], majority: int, T: int | None = None) -> np.ndarray:
    """Rasterize non-overlapping events; gaps take ``majority``."""
    if T is None:
        T = events.window_len
    out = np.full(T, majority, dtype=np.int64)
    covered = np.zeros(T, dtype=bool)
    for ev in events:
        lo, hi = raster_range(ev.center, ev.length, T)
        if covered[lo:hi].any():
            t = lo + int(np.argmax(covered[lo:hi]))
            raise OverlapError(f"event {ev} overlaps an earlier event at timestep {t}")
        covered[lo:hi] = True
        out[lo:hi] = ev.class_id
    return out
