"""Solar geometry from a declination / hour-angle formulation.

Accuracy target is about one degree against almanac values, which is
plenty for feature engineering and irradiance simulation: declination uses
the 23.45 * sin(360 * (284 + n) / 365) approximation and the hour angle
includes an equation-of-time correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import ConfigError


@dataclass(frozen=True)
class SolarPosition:
    """Sun position in degrees: elevation in [-90, 90] (negative below the
    horizon), azimuth in [0, 360) measured clockwise from north."""

    elevation: float
    azimuth: float


def declination_deg(day_of_year: int) -> float:
    return 23.45 * math.sin(math.radians(360.0 * (284 + day_of_year) / 365.0))


def equation_of_time_minutes(day_of_year: int) -> float:
    b = math.radians(360.0 * (day_of_year - 81) / 364.0)
    return 9.87 * math.sin(2 * b) - 7.53 * math.cos(b) - 1.5 * math.sin(b)


def solar_position(ts: datetime, latitude: float, longitude: float) -> SolarPosition:
    """Sun elevation/azimuth at a UTC instant for the given coordinates."""
    if not -90.0 <= latitude <= 90.0:
        raise ConfigError(f"latitude {latitude} outside [-90, 90]")
    if not -180.0 <= longitude <= 180.0:
        raise ConfigError(f"longitude {longitude} outside [-180, 180]")
    utc = ts.astimezone(timezone.utc)
    n = utc.timetuple().tm_yday
    decl = math.radians(declination_deg(n))
    # true solar time in minutes: clock UTC + 4 min per degree east + EoT
    minutes = (utc.hour * 60.0 + utc.minute + utc.second / 60.0
               + 4.0 * longitude + equation_of_time_minutes(n))
    hour_angle = math.radians(minutes / 4.0 - 180.0)
    lat = math.radians(latitude)

    sin_elev = (math.sin(decl) * math.sin(lat)
                + math.cos(decl) * math.cos(lat) * math.cos(hour_angle))
    elevation = math.degrees(math.asin(max(-1.0, min(1.0, sin_elev))))

    # azimuth referenced to south, positive westward, then rotated to
    # north = 0 clockwise
    south_ref = math.atan2(
        math.sin(hour_angle),
        math.cos(hour_angle) * math.sin(lat) - math.tan(decl) * math.cos(lat))
    azimuth = (180.0 + math.degrees(south_ref)) % 360.0
    return SolarPosition(elevation=elevation, azimuth=azimuth)
