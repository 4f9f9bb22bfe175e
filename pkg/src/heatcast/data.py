"""Core data model: hourly building records, site metadata, calendar logic.

Timestamps are timezone-aware UTC datetimes aligned to exact hour
boundaries. Local-time calendar decisions (business day, hour of day) use a
fixed integer UTC offset per site; DST is deliberately not modeled.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

HOUR = timedelta(hours=1)

#: Months belonging to the heating season (September through May).
HEATING_MONTHS = frozenset({9, 10, 11, 12, 1, 2, 3, 4, 5})

CSV_HEADER = ["timestamp", "t_in", "t_sup", "t_out", "ghi"]


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO 8601 UTC timestamp like ``2021-10-01T00:00:00Z``."""
    try:
        ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"bad timestamp {text!r}: {exc}") from None
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def hour_number(ts: datetime) -> int:
    """Whole hours since the epoch; requires an hour-aligned timestamp."""
    if ts.minute or ts.second or ts.microsecond:
        raise DataError(f"timestamp {ts.isoformat()} not hour-aligned")
    return int(ts.timestamp()) // 3600


@dataclass(frozen=True)
class HourlyRecord:
    """One hour of building measurements.

    t_in: indoor temperature [degC]; t_sup: space-heating supply water
    temperature [degC]; t_out: outdoor temperature [degC]; ghi: global
    horizontal irradiation [W/m^2].
    """

    timestamp: datetime
    t_in: float
    t_sup: float
    t_out: float
    ghi: float

    def __post_init__(self) -> None:
        hour_number(self.timestamp)  # validates alignment
        for name in ("t_in", "t_sup", "t_out", "ghi"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise DataError(f"{name} not finite at {self.timestamp.isoformat()}")
        if self.ghi < 0:
            raise DataError(f"ghi < 0 at {self.timestamp.isoformat()}")


@dataclass(frozen=True)
class SiteMeta:
    """Site location plus the local calendar used for business-day logic."""

    latitude: float
    longitude: float
    utc_offset_hours: int = 0
    holidays: frozenset[date] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if not -90.0 <= self.latitude <= 90.0:
            raise ConfigError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ConfigError(f"longitude {self.longitude} outside [-180, 180]")
        object.__setattr__(self, "holidays", frozenset(self.holidays))

    def local_datetime(self, ts: datetime) -> datetime:
        return ts + timedelta(hours=self.utc_offset_hours)

    def is_business_day(self, ts: datetime) -> bool:
        local = self.local_datetime(ts)
        return local.weekday() < 5 and local.date() not in self.holidays


def hour_of_week_index(ts: datetime, site: SiteMeta) -> int:
    """Map a timestamp to the 48-slot weekly profile index.

    Slots 1-24 cover non-business-day hours (Saturday, Sunday, configured
    holidays, local time), slots 25-48 cover business-day hours. Total
    function: every hour-aligned timestamp maps to exactly one slot.
    """
    hour_number(ts)
    local_hour = site.local_datetime(ts).hour
    if site.is_business_day(ts):
        return local_hour + 25
    return local_hour + 1


class BuildingDataset:
    """Ordered hourly records for one building, heating season only.

    Construction validates strict timestamp ordering, applies the
    September-May heating-season filter (local months), and records the
    positions of any gaps. Instances are immutable after construction and
    safe to share across threads.
    """

    def __init__(self, site: SiteMeta, records: list[HourlyRecord] | tuple[HourlyRecord, ...]):
        records = [r for r in records
                   if site.local_datetime(r.timestamp).month in HEATING_MONTHS]
        if not records:
            raise DataError("no heating-season records")
        hours = np.array([hour_number(r.timestamp) for r in records], dtype=np.int64)
        if np.any(np.diff(hours) <= 0):
            bad = int(np.argmax(np.diff(hours) <= 0))
            raise DataError(
                f"records not strictly increasing at row {bad + 1} "
                f"({records[bad + 1].timestamp.isoformat()})")
        self.site = site
        self.records: tuple[HourlyRecord, ...] = tuple(records)
        self.hours = hours
        self.t_in = np.array([r.t_in for r in records])
        self.t_sup = np.array([r.t_sup for r in records])
        self.t_out = np.array([r.t_out for r in records])
        self.ghi = np.array([r.ghi for r in records])
        # gap i sits between records i and i+1
        self.gap_indices: tuple[int, ...] = tuple(
            int(i) for i in np.nonzero(np.diff(hours) != 1)[0])
        self._hour_to_row = {int(h): i for i, h in enumerate(hours)}

    def __len__(self) -> int:
        return len(self.records)

    @property
    def start(self) -> datetime:
        return self.records[0].timestamp

    @property
    def end(self) -> datetime:
        return self.records[-1].timestamp

    def row_at(self, ts: datetime) -> int | None:
        """Row index of the record at ``ts``, or None if absent."""
        return self._hour_to_row.get(hour_number(ts))

    def contiguous_span(self, ts: datetime, before: int, after: int) -> bool:
        """True if records exist at every hour in [ts - before h, ts + after h]."""
        h = hour_number(ts)
        first = self._hour_to_row.get(h - before)
        last = self._hour_to_row.get(h + after)
        if first is None or last is None:
            return False
        return last - first == before + after

    def slice_rows(self, start_row: int, stop_row: int) -> "BuildingDataset":
        return BuildingDataset(self.site, list(self.records[start_row:stop_row]))


def load_site(path: str | Path) -> SiteMeta:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read site file {path}: {exc}") from None
    try:
        holidays = frozenset(date.fromisoformat(d) for d in raw.get("holidays", []))
        return SiteMeta(
            latitude=float(raw["latitude"]),
            longitude=float(raw["longitude"]),
            utc_offset_hours=int(raw.get("utc_offset_hours", 0)),
            holidays=holidays,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad site file {path}: {exc}") from None


def dump_site(site: SiteMeta, path: str | Path) -> None:
    payload = {
        "latitude": site.latitude,
        "longitude": site.longitude,
        "utc_offset_hours": site.utc_offset_hours,
        "holidays": sorted(d.isoformat() for d in site.holidays),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_records_csv(path: str | Path) -> list[HourlyRecord]:
    """Read hourly records from CSV with header ``timestamp,t_in,t_sup,t_out,ghi``.

    Raises DataError with a line number on any malformed content.
    """
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: line 1: empty file") from None
    if [h.strip() for h in header] != CSV_HEADER:
        raise DataError(
            f"{path}: line 1: bad header {header!r}, expected {','.join(CSV_HEADER)}")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise DataError(f"{path}: line {lineno}: expected 5 fields, got {len(row)}")
        try:
            records.append(HourlyRecord(
                timestamp=parse_timestamp(row[0]),
                t_in=float(row[1]),
                t_sup=float(row[2]),
                t_out=float(row[3]),
                ghi=float(row[4]),
            ))
        except (ValueError, DataError) as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    return records


def write_records_csv(records: tuple[HourlyRecord, ...] | list[HourlyRecord],
                      path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in records:
            writer.writerow([format_timestamp(r.timestamp),
                             repr(r.t_in), repr(r.t_sup), repr(r.t_out), repr(r.ghi)])


def load_dataset(csv_path: str | Path, site_path: str | Path) -> BuildingDataset:
    return BuildingDataset(load_site(site_path), read_records_csv(csv_path))
