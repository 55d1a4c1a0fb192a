"""Sensor event ingestion, 15-minute resampling, calendar features and
chronological splits."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

INTERVAL = timedelta(minutes=15)
STEPS_PER_DAY = 96
STEPS_PER_WEEK = 672
MAX_REJECT_FRACTION = 0.10

FREE = "free"
OCCUPIED = "occupied"


class EventLogError(ValueError):
    """The event log is unusable (too many malformed rows, bad header)."""


class MissingStateError(ValueError):
    """A lot has no known status at the start of the resampling range."""


# -- registry ---------------------------------------------------------------


@dataclass(frozen=True)
class Lot:
    lot_id: str
    latitude: float
    longitude: float
    street_label: str


class LotRegistry:
    """Ordered set of parking lots; the order fixes frame column order."""

    def __init__(self, lots: Iterable[Lot]):
        self.lots: tuple[Lot, ...] = tuple(lots)
        self.index: dict[str, int] = {}
        for i, lot in enumerate(self.lots):
            if lot.lot_id in self.index:
                raise ValueError(f"duplicate lot_id {lot.lot_id!r}")
            if not -90.0 <= lot.latitude <= 90.0:
                raise ValueError(f"lot {lot.lot_id}: latitude {lot.latitude} out of range")
            if not -180.0 <= lot.longitude <= 180.0:
                raise ValueError(f"lot {lot.lot_id}: longitude {lot.longitude} out of range")
            if not lot.street_label:
                raise ValueError(f"lot {lot.lot_id}: empty street label")
            self.index[lot.lot_id] = i

    def __len__(self) -> int:
        return len(self.lots)

    def __contains__(self, lot_id: str) -> bool:
        return lot_id in self.index

    @property
    def lot_ids(self) -> list[str]:
        return [lot.lot_id for lot in self.lots]

    @classmethod
    def read_csv(cls, source) -> LotRegistry:
        """Read ``lot_id,lat,lon,street`` rows from a path or text stream."""
        with _open_text(source) as fh:
            reader = csv.DictReader(fh)
            _require_header(reader.fieldnames, ["lot_id", "lat", "lon", "street"])
            return cls(
                Lot(row["lot_id"], float(row["lat"]), float(row["lon"]), row["street"])
                for row in reader
            )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lot_id", "lat", "lon", "street"])
            for lot in self.lots:
                writer.writerow([lot.lot_id, repr(float(lot.latitude)), repr(float(lot.longitude)), lot.street_label])


# -- events -----------------------------------------------------------------


@dataclass(frozen=True, order=True)
class ParkingEvent:
    # field order gives the (timestamp, lot_id) sort key
    timestamp: datetime
    lot_id: str
    status: str

    @property
    def available(self) -> bool:
        return self.status == FREE


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC 3339 timestamp and convert it to aware UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError(f"timestamp {text!r} lacks a UTC offset")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_event_rows(source, registry: LotRegistry) -> tuple[list[ParkingEvent], list[str]]:
    """Parse an event-log CSV, returning sorted events and one diagnostic per rejected row."""
    events: list[ParkingEvent] = []
    rejected: list[str] = []
    with _open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], []
        _require_header([h.strip() for h in header], ["lot_id", "timestamp", "status"])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                rejected.append(f"line {lineno}: expected 3 fields, got {len(row)}")
                continue
            lot_id, stamp, status = (field.strip() for field in row)
            if lot_id not in registry:
                rejected.append(f"line {lineno}: unknown lot_id {lot_id!r}")
                continue
            try:
                ts = parse_timestamp(stamp)
            except ValueError:
                rejected.append(f"line {lineno}: unparsable timestamp {stamp!r}")
                continue
            if status not in (FREE, OCCUPIED):
                rejected.append(f"line {lineno}: unknown status {status!r}")
                continue
            events.append(ParkingEvent(ts, lot_id, status))
    events.sort()
    return events, rejected


def parse_event_log(source, registry: LotRegistry) -> list[ParkingEvent]:
    """Parse ``lot_id,timestamp,status`` rows sorted by (timestamp, lot_id).

    Rejected rows are logged; more than 10% rejected rows is an error.
    """
    events, rejected = parse_event_rows(source, registry)
    total = len(events) + len(rejected)
    for msg in rejected[:20]:
        log.warning("rejected event row: %s", msg)
    if rejected:
        log.warning("rejected %d of %d event rows", len(rejected), total)
    if total and len(rejected) / total > MAX_REJECT_FRACTION:
        raise EventLogError(
            f"{len(rejected)} of {total} event rows rejected (limit {MAX_REJECT_FRACTION:.0%}); first: {rejected[0]}"
        )
    return events


def write_event_log(events: Sequence[ParkingEvent], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lot_id", "timestamp", "status"])
        for ev in events:
            writer.writerow([ev.lot_id, format_timestamp(ev.timestamp), ev.status])


# -- frames -----------------------------------------------------------------


@dataclass
class FrameSeries:
    """Consecutive availability frames (1 = free) on a fixed 15-minute grid.

    ``values[i]`` is the frame at ``epoch + (first_step + i) * interval``.
    """

    epoch: datetime
    lot_ids: list[str]
    values: np.ndarray  # (T, L) uint8
    first_step: int = 0
    interval: timedelta = INTERVAL

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def step_indices(self) -> np.ndarray:
        return np.arange(self.first_step, self.first_step + len(self))

    def timestamp(self, step: int) -> datetime:
        return self.epoch + step * self.interval

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step_index", *self.lot_ids])
            for step, row in zip(self.step_indices, self.values):
                writer.writerow([int(step), *map(int, row)])

    @classmethod
    def read_csv(cls, source, epoch: datetime, interval: timedelta = INTERVAL) -> FrameSeries:
        with _open_text(source) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "step_index":
                raise ValueError("frame dump must start with a step_index column")
            steps, rows = [], []
            for row in reader:
                if row:
                    steps.append(int(row[0]))
                    rows.append([int(v) for v in row[1:]])
        values = np.asarray(rows, dtype=np.uint8).reshape(len(rows), len(header) - 1)
        if values.size and not np.isin(values, (0, 1)).all():
            raise ValueError("frame cells must be 0 or 1")
        first = steps[0] if steps else 0
        if steps != list(range(first, first + len(steps))):
            raise ValueError("frame step indices must be contiguous")
        return cls(epoch, header[1:], values, first, interval)


def align_up(ts: datetime, interval: timedelta = INTERVAL) -> datetime:
    """First interval boundary (counted from the Unix epoch, UTC) at or after ``ts``."""
    ts = ts.astimezone(timezone.utc)
    unix = datetime(1970, 1, 1, tzinfo=timezone.utc)
    ticks = -((unix - ts) // interval)  # ceil division
    return unix + ticks * interval


def resample(events: Sequence[ParkingEvent], registry: LotRegistry, start: datetime, end: datetime,
             interval: timedelta = INTERVAL) -> FrameSeries:
    """Forward-fill per-lot status onto the tick grid ``[align_up(start), end)``.

    Each lot needs an event at or before the first tick.
    """
    epoch = align_up(start, interval)
    count = max(0, (end - epoch) // interval)
    values = np.zeros((count, len(registry)), dtype=np.uint8)
    if count == 0:
        return FrameSeries(epoch, registry.lot_ids, values, 0, interval)
    step_s = interval.total_seconds()
    base = epoch.timestamp()
    per_lot: list[list[tuple[float, int]]] = [[] for _ in range(len(registry))]
    for ev in events:
        per_lot[registry.index[ev.lot_id]].append(((ev.timestamp.timestamp() - base) / step_s, ev.available))
    ticks = np.arange(count, dtype=np.float64)
    for col, history in enumerate(per_lot):
        if not history or history[0][0] > 0:
            raise MissingStateError(
                f"lot {registry.lots[col].lot_id!r} has no status at or before {format_timestamp(epoch)}"
            )
        times = np.array([t for t, _ in history])
        states = np.array([s for _, s in history], dtype=np.uint8)
        # events are sorted by timestamp; equal stamps keep log order
        idx = np.searchsorted(times, ticks, side="right") - 1
        values[:, col] = states[idx]
    return FrameSeries(epoch, registry.lot_ids, values, 0, interval)


# -- calendar ---------------------------------------------------------------


@dataclass(frozen=True)
class CalendarFeature:
    time_of_day: float
    day_of_month: float
    month: float
    weekday: float

    def as_array(self) -> np.ndarray:
        return np.array([self.time_of_day, self.day_of_month, self.month, self.weekday])


def calendar_features(ts: datetime) -> CalendarFeature:
    """Min-max scaled (quarter-hour, day, month, weekday); Monday is 0."""
    ts = ts.astimezone(timezone.utc)
    quarter = ts.hour * 4 + ts.minute // 15
    return CalendarFeature(quarter / 95.0, (ts.day - 1) / 30.0, (ts.month - 1) / 11.0, ts.weekday() / 6.0)


def calendar_matrix(epoch: datetime, steps: Iterable[int], interval: timedelta = INTERVAL) -> np.ndarray:
    """Stack calendar features for ``epoch + step * interval`` into an ``(n, 4)`` array."""
    return np.array([calendar_features(epoch + int(s) * interval).as_array() for s in steps]).reshape(-1, 4)


# -- splits -----------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    """Half-open frame index ranges ``[start, stop)``."""

    train: tuple[int, int]
    validation: tuple[int, int]
    test: tuple[int, int]


def split_dataset(epoch: datetime, n_frames: int, boundaries: Sequence[datetime],
                  interval: timedelta = INTERVAL) -> DatasetSplit:
    """Cut frames at two instants into train / validation / test ranges.

    A boundary belongs to the later range (the first frame at or after it).
    """
    if len(boundaries) != 2:
        raise ValueError("split_dataset needs exactly two boundaries")
    end = epoch + n_frames * interval
    first, second = boundaries
    if not epoch < first < second < end:
        raise ValueError(
            f"boundaries {format_timestamp(first)}, {format_timestamp(second)} must be ordered and lie "
            f"strictly inside [{format_timestamp(epoch)}, {format_timestamp(end)})"
        )
    cut1 = -((epoch - first) // interval)
    cut2 = -((epoch - second) // interval)
    return DatasetSplit((0, cut1), (cut1, cut2), (cut2, n_frames))


def split_by_fraction(n_frames: int, train: float = 0.6, validation: float = 0.2) -> DatasetSplit:
    if not 0 < train < train + validation < 1:
        raise ValueError("fractions must satisfy 0 < train < train + validation < 1")
    cut1 = int(round(n_frames * train))
    cut2 = int(round(n_frames * (train + validation)))
    return DatasetSplit((0, cut1), (cut1, cut2), (cut2, n_frames))


# -- helpers ----------------------------------------------------------------


class _open_text:
    """Context manager accepting a path, text stream, bytes or byte stream."""

    def __init__(self, source):
        self.source = source
        self.owned: IO[str] | None = None

    def __enter__(self) -> IO[str]:
        src = self.source
        if isinstance(src, (bytes, bytearray)):
            return io.StringIO(src.decode("utf-8"))
        if hasattr(src, "read"):
            data = src.read()
            return io.StringIO(data.decode("utf-8") if isinstance(data, bytes) else data)
        self.owned = open(src, newline="")
        return self.owned

    def __exit__(self, *exc) -> None:
        if self.owned is not None:
            self.owned.close()


def _require_header(found, expected: list[str]) -> None:
    if list(found or []) != expected:
        raise EventLogError(f"expected CSV header {','.join(expected)}, got {','.join(found or [])}")
