from datetime import date, datetime, timedelta, timezone

import pytest

from heatcast.data import BuildingDataset, HourlyRecord, SiteMeta
from heatcast.simulate import SimConfig, simulate_building


@pytest.fixture(scope="session")
def site() -> SiteMeta:
    return SiteMeta(latitude=61.0, longitude=25.0, utc_offset_hours=2,
                    holidays=frozenset({date(2021, 12, 6)}))


@pytest.fixture(scope="session")
def small_dataset(site) -> BuildingDataset:
    """600 hours of well-specified synthetic data (no mismatch)."""
    return simulate_building(SimConfig(seed=11), site, 600)


@pytest.fixture(scope="session")
def medium_dataset(site) -> BuildingDataset:
    """A fit-sized well-specified dataset."""
    return simulate_building(SimConfig(seed=7), site, 2000)


def make_records(start: datetime, t_in, t_sup=50.0, t_out=0.0, ghi=0.0):
    """Constant-driver record sequence helper for handmade fixtures."""
    out = []
    for i, v in enumerate(t_in):
        out.append(HourlyRecord(timestamp=start + timedelta(hours=i), t_in=float(v),
                                t_sup=t_sup, t_out=t_out, ghi=ghi))
    return out


UTC_START = datetime(2021, 10, 4, 0, 0, tzinfo=timezone.utc)  # a Monday
