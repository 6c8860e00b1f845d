"""Monthly/weekly series containers and the panel the state-space model consumes.

Missing observations are stored as ``NaN`` inside float arrays; every array held
by these containers is marked read-only so values can be shared freely.
"""
from __future__ import annotations

import calendar
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CoverageError, DemeanError, SplitError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, order=True)
class MonthStamp:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must lie in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> "MonthStamp":
        text = text.strip()
        parts = text.split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise ValueError(f"expected YYYY-MM, got {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    @classmethod
    def from_date(cls, day: dt.date) -> "MonthStamp":
        return cls(day.year, day.month)

    @property
    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    @classmethod
    def from_ordinal(cls, n: int) -> "MonthStamp":
        return cls(n // 12, n % 12 + 1)

    def shift(self, n: int) -> "MonthStamp":
        return MonthStamp.from_ordinal(self.ordinal + n)

    def __sub__(self, other: "MonthStamp") -> int:
        return self.ordinal - other.ordinal

    def days(self) -> int:
        return calendar.monthrange(self.year, self.month)[1]

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(first: MonthStamp, last: MonthStamp) -> list[MonthStamp]:
    return [first.shift(i) for i in range(last - first + 1)]


def month_indicator(t: MonthStamp) -> np.ndarray:
    """Unit 12-vector selecting the calendar month of ``t``."""
    out = np.zeros(12)
    out[t.month - 1] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class MonthlySeries:
    start: MonthStamp
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a monthly series needs at least one value")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, MonthlySeries):
            return NotImplemented
        return self.start == other.start and np.array_equal(
            self.values, other.values, equal_nan=True
        )

    __hash__ = None

    @property
    def end(self) -> MonthStamp:
        return self.start.shift(len(self) - 1)

    @property
    def months(self) -> list[MonthStamp]:
        return month_range(self.start, self.end)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    def window(self, first: MonthStamp, last: MonthStamp) -> "MonthlySeries":
        i, j = first - self.start, last - self.start
        if i < 0 or j >= len(self) or j < i:
            raise IndexError(f"window {first}..{last} outside {self.start}..{self.end}")
        return MonthlySeries(first, self.values[i : j + 1])

    def reindex(self, first: MonthStamp, last: MonthStamp) -> "MonthlySeries":
        """Same data on a new month range; months outside the series become missing."""
        out = np.full(last - first + 1, np.nan)
        for k, month in enumerate(month_range(first, last)):
            i = month - self.start
            if 0 <= i < len(self):
                out[k] = self.values[i]
        return MonthlySeries(first, out)


def month_numbers(start: MonthStamp, length: int) -> np.ndarray:
    """Calendar month (1..12) of each of ``length`` consecutive months."""
    return (start.month - 1 + np.arange(length)) % 12 + 1


@dataclass(frozen=True, eq=False)
class WeeklySeries:
    week_start: tuple
    values: np.ndarray

    def __post_init__(self):
        starts = tuple(self.week_start)
        values = _frozen(self.values)
        if len(starts) != values.size:
            raise ValueError("week_start and values differ in length")
        for a, b in zip(starts, starts[1:]):
            if (b - a).days != 7:
                raise ValueError(f"weeks {a} and {b} are not 7 days apart")
        finite = values[~np.isnan(values)]
        if finite.size and (finite.min() < 0 or finite.max() > 100):
            raise ValueError("weekly values must lie in [0, 100]")
        object.__setattr__(self, "week_start", starts)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.week_start)

    @property
    def first_day(self) -> dt.date:
        return self.week_start[0]

    @property
    def last_day(self) -> dt.date:
        return self.week_start[-1] + dt.timedelta(days=6)


def aggregate_weekly_to_monthly(
    weekly: WeeklySeries, first: MonthStamp, last: MonthStamp
) -> MonthlySeries:
    """Day-weighted monthly means of 7-day windows.

    Every day of a window carries the window's value, so a month's value is the
    mean over the days of that month covered by some window.
    """
    if len(weekly) == 0:
        raise ValueError("weekly series is empty")
    weights = defaultdict(float)
    totals = defaultdict(float)
    for start, value in zip(weekly.week_start, weekly.values):
        if np.isnan(value):
            continue
        for offset in range(7):
            key = MonthStamp.from_date(start + dt.timedelta(days=offset))
            weights[key] += 1.0
            totals[key] += value

    months = month_range(first, last)
    lo, hi = MonthStamp.from_date(weekly.first_day), MonthStamp.from_date(weekly.last_day)
    uncovered = [m for m in months if m < lo or m > hi]
    if uncovered:
        raise CoverageError(uncovered)
    out = np.array(
        [totals[m] / weights[m] if weights[m] > 0 else np.nan for m in months]
    )
    return MonthlySeries(first, out)


@dataclass(frozen=True, eq=False)
class ObservationPanel:
    """Target series plus ``a`` replicated search-volume series on one month grid."""

    target: MonthlySeries
    replicates: tuple
    demean_offsets: Optional[tuple] = None
    names: tuple = field(default=())

    def __post_init__(self):
        reps = tuple(self.replicates)
        if len(reps) < 1:
            raise ValueError("a panel needs at least one replicate series")
        for r in reps:
            if r.start != self.target.start or len(r) != len(self.target):
                raise ValueError("all panel series must share start and length")
        object.__setattr__(self, "replicates", reps)
        if self.demean_offsets is not None:
            offsets = tuple(float(v) for v in self.demean_offsets)
            if len(offsets) != len(reps) + 1:
                raise ValueError("demean_offsets needs a+1 entries")
            object.__setattr__(self, "demean_offsets", offsets)
        names = tuple(self.names) or tuple(f"sqv_{i + 1}" for i in range(len(reps)))
        if len(names) != len(reps):
            raise ValueError("one name per replicate required")
        object.__setattr__(self, "names", names)

    @classmethod
    def from_array(cls, start: MonthStamp, data, offsets=None, names=()) -> "ObservationPanel":
        """Build from a (T, a+1) array whose first column is the target."""
        data = np.asarray(data, dtype=float)
        target = MonthlySeries(start, data[:, 0])
        reps = tuple(MonthlySeries(start, data[:, j]) for j in range(1, data.shape[1]))
        return cls(target, reps, offsets, names)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationPanel):
            return NotImplemented
        return (
            self.target == other.target
            and self.replicates == other.replicates
            and self.demean_offsets == other.demean_offsets
        )

    __hash__ = None

    def __len__(self) -> int:
        return len(self.target)

    @property
    def start(self) -> MonthStamp:
        return self.target.start

    @property
    def end(self) -> MonthStamp:
        return self.target.end

    @property
    def a(self) -> int:
        return len(self.replicates)

    @property
    def months(self) -> np.ndarray:
        return month_numbers(self.start, len(self))

    def as_array(self) -> np.ndarray:
        """Observations as a (T, a+1) array, target first."""
        return np.column_stack([self.target.values] + [r.values for r in self.replicates])

    def select_replicates(self, indices: Sequence[int]) -> "ObservationPanel":
        indices = list(indices)
        offsets = None
        if self.demean_offsets is not None:
            offsets = (self.demean_offsets[0],) + tuple(self.demean_offsets[i + 1] for i in indices)
        return ObservationPanel(
            self.target,
            tuple(self.replicates[i] for i in indices),
            offsets,
            tuple(self.names[i] for i in indices),
        )

    def window(self, first: MonthStamp, last: MonthStamp) -> "ObservationPanel":
        return ObservationPanel(
            self.target.window(first, last),
            tuple(r.window(first, last) for r in self.replicates),
            self.demean_offsets,
            self.names,
        )


def demean(panel: ObservationPanel, training_cutoff: MonthStamp) -> ObservationPanel:
    """Subtract each series' training-window mean from the whole series."""
    if not panel.start <= training_cutoff <= panel.end:
        raise DemeanError(f"cutoff {training_cutoff} outside {panel.start}..{panel.end}")
    n_train = training_cutoff - panel.start + 1
    data = panel.as_array()
    labels = ("target",) + panel.names
    offsets = []
    for j, label in enumerate(labels):
        window = data[:n_train, j]
        window = window[~np.isnan(window)]
        if window.size == 0:
            raise DemeanError(f"series {label!r} is entirely missing in the training window")
        offsets.append(float(window.mean()))
    offsets = np.array(offsets)
    previous = np.zeros(len(labels)) if panel.demean_offsets is None else np.array(panel.demean_offsets)
    return ObservationPanel.from_array(
        panel.start, data - offsets, tuple(previous + offsets), panel.names
    )


def restore_offsets(panel: ObservationPanel) -> ObservationPanel:
    """Add stored demeaning offsets back; inverse of :func:`demean`."""
    if panel.demean_offsets is None:
        return panel
    data = panel.as_array() + np.array(panel.demean_offsets)
    return ObservationPanel.from_array(panel.start, data, None, panel.names)


def split(panel: ObservationPanel, cutoff: MonthStamp):
    """Split into ``start..cutoff`` and the remaining months."""
    if cutoff < panel.start:
        raise SplitError(f"cutoff {cutoff} precedes panel start {panel.start}")
    if cutoff >= panel.end:
        raise SplitError(f"cutoff {cutoff} leaves an empty test window (panel ends {panel.end})")
    train = panel.window(panel.start, cutoff)
    test = panel.window(cutoff.shift(1), panel.end)
    return train, test


def concat(first: ObservationPanel, second: ObservationPanel) -> ObservationPanel:
    if second.start != first.end.shift(1):
        raise ValueError("panels are not contiguous")
    if first.a != second.a or first.demean_offsets != second.demean_offsets:
        raise ValueError("panels differ in replicate count or offsets")
    data = np.vstack([first.as_array(), second.as_array()])
    return ObservationPanel.from_array(first.start, data, first.demean_offsets, first.names)

