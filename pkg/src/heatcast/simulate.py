"""Synthetic building data generator.

Produces hourly datasets whose latent indoor-temperature state follows the
same first-order recurrence the gray-box model assumes, with optional
mismatch mechanisms (envelope thermal lag, orientation-dependent solar
gain) that the gray-box cannot represent. Driver signals (weather, supply
water temperature, irradiance) are synthetic but shaped to realistic
diurnal and seasonal structure.

All randomness comes from one ``numpy`` generator seeded from the config,
so equal configs give byte-identical datasets.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from datetime import timedelta

import numpy as np

from .data import BuildingDataset, HourlyRecord, SiteMeta, hour_of_week_index, parse_timestamp
from .errors import ConfigError
from .solar import solar_position

SOLAR_CONSTANT = 1361.0  # W/m^2 at top of atmosphere


def transition(x_prev: float, t_sup: float, t_out: float, ghi: float,
               internal_gain: float, supply_rate: float, outdoor_rate: float,
               solar_gain: float) -> float:
    """One noiseless step of the first-order indoor-temperature recurrence."""
    return ((1.0 - supply_rate - outdoor_rate) * x_prev
            + supply_rate * t_sup + outdoor_rate * t_out
            + solar_gain * ghi + internal_gain)


@dataclass(frozen=True)
class SimConfig:
    """True physical coefficients and driver-signal settings.

    ``supply_rate`` and ``outdoor_rate`` are heat-exchange rates [1/h],
    ``solar_gain`` converts irradiance to heating rate [degC m^2 / (W h)].
    ``internal_gain_profile`` holds 48 hourly internal-gain values
    [degC/h] indexed by the weekly profile slot; None draws them uniformly
    from [0, 0.05) using the seed.
    """

    supply_rate: float = 0.02
    outdoor_rate: float = 0.04
    solar_gain: float = 0.0005
    internal_gain_profile: tuple[float, ...] | None = None
    process_std: float = 0.05
    obs_std: float = 0.1
    envelope_capacitance_factor: float = 0.0
    orientation_deg: float = 180.0
    solar_gain_directionality: float = 0.0
    start_utc: str = "2021-09-01T00:00:00Z"
    seed: int = 0
    # outdoor temperature model
    t_out_mean: float = 4.0
    t_out_annual_amplitude: float = 10.0
    coldest_day_of_year: int = 15
    weather_std: float = 3.0
    weather_rho: float = 0.98
    # heating curve t_sup = clamp(offset - slope * t_out + wiggle, lo, hi)
    curve_offset: float = 63.0
    curve_slope: float = 2.0
    supply_min: float = 20.0
    supply_max: float = 80.0
    supply_noise_std: float = 2.0
    supply_noise_rho: float = 0.9
    # clear-sky and cloud model
    transmittance: float = 0.7
    cloud_mean: float = 0.7
    cloud_std: float = 0.25
    cloud_rho: float = 0.95
    init_t_in: float = 21.0

    def __post_init__(self) -> None:
        if self.supply_rate <= 0 or self.outdoor_rate <= 0:
            raise ConfigError("supply_rate and outdoor_rate must be > 0")
        if self.supply_rate + self.outdoor_rate >= 1.0:
            raise ConfigError("supply_rate + outdoor_rate must be < 1 for stability")
        if self.process_std < 0 or self.obs_std < 0:
            raise ConfigError("noise standard deviations must be >= 0")
        if self.envelope_capacitance_factor < 0:
            raise ConfigError("envelope_capacitance_factor must be >= 0")
        if self.internal_gain_profile is not None:
            prof = tuple(float(v) for v in self.internal_gain_profile)
            if len(prof) != 48:
                raise ConfigError("internal_gain_profile must have 48 entries")
            object.__setattr__(self, "internal_gain_profile", prof)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["internal_gain_profile"] is not None:
            d["internal_gain_profile"] = list(d["internal_gain_profile"])
        return d


def _ar1(rng: np.random.Generator, n: int, rho: float, stationary_std: float) -> np.ndarray:
    """Stationary AR(1) path with the requested marginal std."""
    eta = rng.standard_normal(n)
    out = np.empty(n)
    innov = stationary_std * math.sqrt(max(0.0, 1.0 - rho * rho))
    out[0] = stationary_std * eta[0]
    for i in range(1, n):
        out[i] = rho * out[i - 1] + innov * eta[i]
    return out


def resolved_profile(config: SimConfig) -> np.ndarray:
    """The 48-slot internal-gain profile, drawing defaults from the seed."""
    if config.internal_gain_profile is not None:
        return np.asarray(config.internal_gain_profile, dtype=float)
    rng = np.random.default_rng(config.seed)
    return rng.uniform(0.0, 0.05, size=48)


def simulate_building(config: SimConfig, site: SiteMeta, hours: int,
                      drivers: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
                      ) -> BuildingDataset:
    """Generate ``hours`` hourly records starting at ``config.start_utc``.

    ``drivers`` optionally pins (t_sup, t_out, ghi) arrays, e.g. to replay
    recorded or counterfactual weather; the latent recurrence and noise
    draws still follow the config. RNG draw order is fixed: profile,
    weather, supply wiggle, cloud factor, process noise, observation noise.
    """
    if hours < 1:
        raise ConfigError("hours must be >= 1")
    start = parse_timestamp(config.start_utc)
    rng = np.random.default_rng(config.seed)

    if config.internal_gain_profile is None:
        profile = rng.uniform(0.0, 0.05, size=48)
    else:
        profile = np.asarray(config.internal_gain_profile, dtype=float)

    timestamps = [start + timedelta(hours=i) for i in range(hours)]
    positions = [solar_position(ts, site.latitude, site.longitude) for ts in timestamps]
    elev = np.array([p.elevation for p in positions])
    azi = np.array([p.azimuth for p in positions])
    xi = np.array([hour_of_week_index(ts, site) for ts in timestamps], dtype=np.int64)

    if drivers is None:
        doy = np.array([ts.timetuple().tm_yday for ts in timestamps], dtype=float)
        seasonal = config.t_out_mean - config.t_out_annual_amplitude * np.cos(
            2.0 * math.pi * (doy - config.coldest_day_of_year) / 365.25)
        t_out = seasonal + _ar1(rng, hours, config.weather_rho, config.weather_std)
        wiggle = _ar1(rng, hours, config.supply_noise_rho, config.supply_noise_std)
        t_sup = np.clip(config.curve_offset - config.curve_slope * t_out + wiggle,
                        config.supply_min, config.supply_max)
        cloud = np.clip(config.cloud_mean + _ar1(rng, hours, config.cloud_rho,
                                                 config.cloud_std), 0.0, 1.0)
        clear_sky = SOLAR_CONSTANT * config.transmittance * np.maximum(
            0.0, np.sin(np.radians(elev)))
        ghi = clear_sky * cloud
    else:
        t_sup, t_out, ghi = (np.asarray(a, dtype=float) for a in drivers)
        if not (len(t_sup) == len(t_out) == len(ghi) == hours):
            raise ConfigError("driver arrays must have length == hours")
        if np.any(ghi < 0):
            raise ConfigError("driver ghi must be >= 0")

    process_noise = config.process_std * rng.standard_normal(hours)
    obs_noise = config.obs_std * rng.standard_normal(hours)

    # envelope state low-pass-filters the outdoor coupling when enabled
    kappa = 1.0 / (1.0 + config.envelope_capacitance_factor)
    # orientation-dependent solar pickup; neutral when directionality is 0
    direction = np.maximum(0.0, 1.0 + config.solar_gain_directionality
                           * np.cos(np.radians(azi - config.orientation_deg)))
    gain = ghi * direction

    x = config.init_t_in
    envelope = float(t_out[0])
    t_in = np.empty(hours)
    for i in range(hours):
        envelope = (1.0 - kappa) * envelope + kappa * float(t_out[i])
        x = transition(x, float(t_sup[i]), envelope, float(gain[i]),
                       float(profile[xi[i] - 1]), config.supply_rate,
                       config.outdoor_rate, config.solar_gain) + process_noise[i]
        t_in[i] = x + obs_noise[i]

    records = [HourlyRecord(timestamp=timestamps[i], t_in=float(t_in[i]),
                            t_sup=float(t_sup[i]), t_out=float(t_out[i]),
                            ghi=float(ghi[i]))
               for i in range(hours)]
    return BuildingDataset(site, records)
