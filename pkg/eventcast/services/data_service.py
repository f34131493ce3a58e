import logging
import re
from datetime import date
from pathlib import Path
from typing import IO, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ..errors import AlignmentError, ConfigError, DataValidationError, ParseError, WeatherGapError
from ..models.series import (
    AlignmentReport,
    CovidSeries,
    DailyTemperature,
    EventSeries,
    FluSeries,
    Region,
    RegionId,
    WeatherSeries,
)

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[str]]

HOUR_ONLY = re.compile(r"^\d{4}-\d{2}-\d{2}[T ]\d{2}$")


def missing_runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Inclusive (first, last) positions of each run of True values."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return []
    padded = np.concatenate([[False], mask, [False]]).astype(int)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), stops.tolist()))


class DataService:
    """Reads the four raw sources and turns them into aligned regional series."""

    def __init__(self, max_interp_hours: int = 6, max_gap_hours: int = 24):
        self.max_interp_hours = max_interp_hours
        self.max_gap_hours = max_gap_hours

    # === CSV HELPERS ===

    @staticmethod
    def _read_table(source: Source, required: List[str], what: str) -> pd.DataFrame:
        try:
            df = pd.read_csv(source, dtype=str, keep_default_na=False, skipinitialspace=True)
        except (pd.errors.ParserError, UnicodeDecodeError) as exc:
            raise ParseError(f"{what}: {exc}") from exc
        except pd.errors.EmptyDataError as exc:
            raise DataValidationError(f"{what}: file is empty") from exc
        df.columns = [c.strip() for c in df.columns]
        missing = [c for c in required if c not in df.columns]
        if missing:
            raise ParseError(f"{what}: header lacks columns {missing}", line=1)
        return df

    @staticmethod
    def _parse_timestamps(values: pd.Series, what: str) -> pd.DatetimeIndex:
        text = values.str.strip()
        text = text.where(~text.str.match(HOUR_ONLY), text + ":00")
        parsed = pd.to_datetime(text, format="ISO8601", errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if bad.size:
            i = int(bad[0])
            raise ParseError(f"{what}: malformed timestamp {values.iloc[i]!r}", line=i + 2)
        index = pd.DatetimeIndex(parsed)
        if index.tz is not None:
            index = index.tz_localize(None)
        return index

    @staticmethod
    def _parse_numbers(values: pd.Series, what: str, column: str, allow_empty: bool = False) -> np.ndarray:
        text = values.str.strip()
        numbers = pd.to_numeric(text.replace("", np.nan), errors="coerce").to_numpy(dtype=float)
        bad = np.isnan(numbers) & (text != "").to_numpy() if allow_empty else np.isnan(numbers)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ParseError(f"{what}: {column} value {values.iloc[i]!r} is not a number", line=i + 2)
        return numbers

    # === REGIONS ===

    def load_regions(self, source: Source) -> Dict[RegionId, Region]:
        df = self._read_table(source, ["region", "province", "weight"], "regions")
        weights = self._parse_numbers(df["weight"], "regions", "weight")
        owners: Dict[str, str] = {}
        grouped: Dict[str, Dict[str, float]] = {}
        for i, (region, province) in enumerate(zip(df["region"].str.strip(), df["province"].str.strip())):
            if province in owners:
                raise DataValidationError(
                    f"province {province} is listed under both {owners[province]} and {region}"
                )
            owners[province] = region
            grouped.setdefault(region, {})[province] = float(weights[i])
        regions = {}
        for name, provinces in grouped.items():
            try:
                rid = RegionId(name)
                regions[rid] = Region(id=rid, provinces=provinces)
            except (ValueError, ValidationError) as exc:
                raise DataValidationError(f"region {name}: {exc}") from exc
        logger.info("loaded %d region(s) covering %d provinces", len(regions), len(owners))
        return regions

    # === EVENTS ===

    def _event_table(self, source: Source) -> pd.DataFrame:
        df = self._read_table(source, ["region", "timestamp", "count"], "events")
        stamps = self._parse_timestamps(df["timestamp"], "events")
        counts = self._parse_numbers(df["count"], "events", "count")
        fractional = counts != np.round(counts)
        if fractional.any():
            i = int(np.flatnonzero(fractional)[0])
            raise ParseError(f"events: count {df['count'].iloc[i]!r} is not an integer", line=i + 2)
        negative = counts < 0
        if negative.any():
            i = int(np.flatnonzero(negative)[0])
            raise DataValidationError(f"events line {i + 2}: negative count {int(counts[i])}")
        return pd.DataFrame(
            {"region": df["region"].str.strip().to_numpy(), "timestamp": stamps.floor("h"), "count": counts.astype(np.int64)}
        )

    @staticmethod
    def _to_series(name: str, rows: pd.DataFrame) -> EventSeries:
        try:
            region = RegionId(name)
        except ValueError as exc:
            raise DataValidationError(f"events: unknown region {name!r}") from exc
        hourly = rows.groupby("timestamp")["count"].sum().sort_index()
        full = pd.date_range(hourly.index[0], hourly.index[-1], freq="h")
        hourly = hourly.reindex(full, fill_value=0)
        return EventSeries(region=region, start=full[0], counts=hourly.to_numpy(dtype=np.int64))

    def ingest_events(self, source: Source, region: Optional[str] = None) -> EventSeries:
        table = self._event_table(source)
        if table.empty:
            raise DataValidationError("events: no rows")
        names = sorted(table["region"].unique())
        if region is None:
            if len(names) != 1:
                raise ConfigError(f"events file holds regions {names}; choose one")
            region = names[0]
        rows = table[table["region"] == region]
        if rows.empty:
            raise DataValidationError(f"events: no rows for region {region!r}")
        series = self._to_series(region, rows)
        logger.info(
            "ingested %d event rows for %s into %d hours", len(rows), region, len(series.counts)
        )
        return series

    def ingest_all_events(self, source: Source) -> Dict[RegionId, EventSeries]:
        table = self._event_table(source)
        if table.empty:
            raise DataValidationError("events: no rows")
        series = [self._to_series(name, rows) for name, rows in table.groupby("region", sort=True)]
        return {s.region: s for s in series}

    # === WEATHER ===

    def ingest_weather(self, source: Source) -> List[WeatherSeries]:
        df = self._read_table(source, ["station", "province", "timestamp", "temp_c", "rain_mm", "snow_mm"], "weather")
        stamps = self._parse_timestamps(df["timestamp"], "weather")
        values = {c: self._parse_numbers(df[c], "weather", c, allow_empty=True) for c in ("temp_c", "rain_mm", "snow_mm")}
        table = pd.DataFrame({"station": df["station"].str.strip(), "province": df["province"].str.strip(), "timestamp": stamps, **values})
        out = []
        for station, rows in table.groupby("station", sort=True):
            provinces = rows["province"].unique()
            if len(provinces) != 1:
                raise DataValidationError(f"weather station {station} is assigned to provinces {sorted(provinces)}")
            if rows["timestamp"].duplicated().any():
                dup = rows.loc[rows["timestamp"].duplicated(), "timestamp"].iloc[0]
                raise DataValidationError(f"weather station {station}: duplicate timestamp {dup}")
            rows = rows.sort_values("timestamp")
            arrays = {c: rows[c].to_numpy(dtype=float) for c in ("temp_c", "rain_mm", "snow_mm")}
            out.append(
                WeatherSeries(
                    station_id=str(station),
                    province=str(provinces[0]),
                    timestamps=pd.DatetimeIndex(rows["timestamp"]),
                    temp_c=arrays["temp_c"],
                    rain_mm=arrays["rain_mm"],
                    snow_mm=arrays["snow_mm"],
                    temp_missing=np.isnan(arrays["temp_c"]),
                    rain_missing=np.isnan(arrays["rain_mm"]),
                    snow_missing=np.isnan(arrays["snow_mm"]),
                )
            )
        logger.info("ingested %d weather station(s)", len(out))
        return out

    def _fill_short_gaps(self, s: pd.Series) -> pd.Series:
        filled = s.interpolate(method="linear", limit_area="inside")
        for first, last in missing_runs(s.isna().to_numpy()):
            if last - first + 1 > self.max_interp_hours:
                filled.iloc[first:last + 1] = np.nan
        return filled

    def aggregate_weather(self, stations: List[WeatherSeries], region: Region) -> DailyTemperature:
        """Call-share weighted hourly temperature, averaged within each day."""
        by_province: Dict[str, List[WeatherSeries]] = {}
        for st in stations:
            if st.province in region.provinces:
                by_province.setdefault(st.province, []).append(st)
        uncovered = [p for p, w in region.provinces.items() if w > 0 and p not in by_province]
        if uncovered:
            raise DataValidationError(f"region {region.id.value}: no weather station for provinces {uncovered}")
        starts = [st.timestamps.min().floor("h") for sts in by_province.values() for st in sts if len(st.timestamps)]
        ends = [st.timestamps.max().floor("h") for sts in by_province.values() for st in sts if len(st.timestamps)]
        if not starts:
            raise DataValidationError(f"region {region.id.value}: weather stations carry no rows")
        hours = pd.date_range(min(starts).normalize(), max(ends).normalize() + pd.Timedelta(hours=23), freq="h")

        numer = np.zeros(len(hours))
        denom = np.zeros(len(hours))
        for province, sts in sorted(by_province.items()):
            w = region.provinces[province]
            if w <= 0:
                continue
            station_values = []
            for st in sts:
                s = st.temperature()
                s = s.groupby(s.index.floor("h")).mean().reindex(hours)
                station_values.append(self._fill_short_gaps(s).to_numpy())
            with np.errstate(invalid="ignore"):
                prov = np.nanmean(np.vstack(station_values), axis=0) if len(station_values) > 1 else station_values[0]
            present = ~np.isnan(prov)
            numer[present] += w * prov[present]
            denom[present] += w
        with np.errstate(invalid="ignore", divide="ignore"):
            hourly = pd.Series(np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), np.nan), index=hours)

        gaps = [
            (hours[a], hours[b])
            for a, b in missing_runs(hourly.isna().to_numpy())
            if b - a + 1 > self.max_gap_hours
        ]
        if gaps:
            raise WeatherGapError(
                f"region {region.id.value}: no weather data from {gaps[0][0]} to {gaps[0][1]}"
                + (f" (+{len(gaps) - 1} more gaps)" if len(gaps) > 1 else ""),
                gaps=gaps,
            )
        daily = hourly.groupby(hourly.index.normalize()).mean()
        missing = [d.date() for d in daily.index[daily.isna()]]
        if missing:
            logger.warning("region %s: %d day(s) without temperature", region.id.value, len(missing))
        return DailyTemperature(values=daily.rename("temperature"), missing_days=missing)

    # === COVID / FLU ===

    def ingest_covid(self, source: Source) -> CovidSeries:
        df = self._read_table(source, ["date", "province", "total_positive"], "covid")
        dates = self._parse_timestamps(df["date"], "covid").normalize()
        totals = self._parse_numbers(df["total_positive"], "covid", "total_positive")
        negative = totals < 0
        if negative.any():
            i = int(np.flatnonzero(negative)[0])
            raise DataValidationError(f"covid line {i + 2}: negative total_positive")
        table = pd.DataFrame({"date": dates, "province": df["province"].str.strip(), "total_positive": totals})
        if table.duplicated(["date", "province"]).any():
            raise DataValidationError("covid: duplicate (date, province) rows")
        for province, rows in table.groupby("province"):
            d = rows["date"].sort_values()
            if len(d) != (d.iloc[-1] - d.iloc[0]).days + 1:
                raise DataValidationError(f"covid: dates for {province} are not contiguous")
        logger.info("ingested covid data for %d province(s)", table["province"].nunique())
        return CovidSeries(table=table.sort_values(["date", "province"]).reset_index(drop=True))

    def ingest_flu(self, source: Source) -> FluSeries:
        df = self._read_table(source, ["year", "week", "incidence"], "flu")
        years = self._parse_numbers(df["year"], "flu", "year").astype(int)
        weeks = self._parse_numbers(df["week"], "flu", "week").astype(int)
        incidence = self._parse_numbers(df["incidence"], "flu", "incidence")
        try:
            return FluSeries(weeks=list(zip(years.tolist(), weeks.tolist())), incidence=incidence)
        except ValidationError as exc:
            raise DataValidationError(f"flu: {exc.errors()[0]['msg']}") from exc

    @staticmethod
    def flu_season(year: int, week: int) -> int:
        return year if week >= 30 else year - 1

    def interpolate_flu(self, flu: FluSeries) -> pd.Series:
        """Daily flu incidence: linear between weekly midpoints, zero off-season."""
        if len(flu.weeks) < 2:
            raise DataValidationError("flu interpolation needs at least two weeks")
        seasons: Dict[int, List[Tuple[date, float]]] = {}
        for (year, week), value in zip(flu.weeks, flu.incidence):
            try:
                mid = date.fromisocalendar(year, week, 4)
            except ValueError as exc:
                raise DataValidationError(f"flu: invalid ISO week {year}-W{week:02d}") from exc
            seasons.setdefault(self.flu_season(year, week), []).append((mid, float(value)))

        pieces = []
        for season, points in sorted(seasons.items()):
            points.sort()
            mids = np.array([p[0].toordinal() for p in points])
            if np.any(np.diff(mids) != 7):
                raise DataValidationError(f"flu: weeks of season {season}/{season + 1} are not contiguous")
            days = pd.date_range(
                pd.Timestamp(points[0][0]) - pd.Timedelta(days=3),
                pd.Timestamp(points[-1][0]) + pd.Timedelta(days=3),
                freq="D",
            )
            ordinals = np.array([d.toordinal() for d in days.date])
            pieces.append(pd.Series(np.interp(ordinals, mids, [p[1] for p in points]), index=days))
        covered = pd.concat(pieces)
        full = pd.date_range(covered.index[0], covered.index[-1], freq="D")
        return covered.reindex(full, fill_value=0.0).rename("flu")

    # === ALIGNMENT ===

    @staticmethod
    def _is_daily(index: pd.DatetimeIndex) -> bool:
        if not (index == index.normalize()).all():
            return False
        return len(index) < 2 or pd.Series(index).diff().dropna().min() >= pd.Timedelta(days=1)

    def validate_alignment(self, series: Dict[str, pd.Series]) -> AlignmentReport:
        """Largest hourly span covered by every source, plus each source's holes inside it."""
        if not series:
            raise AlignmentError("no series to align")
        spans = {}
        for name, s in series.items():
            if len(s) == 0:
                raise AlignmentError(f"{name}: series is empty")
            idx = pd.DatetimeIndex(s.index).sort_values()
            end = idx[-1] + pd.Timedelta(hours=23) if self._is_daily(idx) else idx[-1]
            spans[name] = (idx[0], end)
        start = max(a for a, _ in spans.values())
        end = min(b for _, b in spans.values())
        if start > end:
            raise AlignmentError(
                "sources do not overlap: " + ", ".join(f"{k} {a}..{b}" for k, (a, b) in spans.items())
            )
        hours = pd.date_range(start, end, freq="h")
        missing: Dict[str, List[Tuple[pd.Timestamp, pd.Timestamp]]] = {}
        for name, s in series.items():
            s = s.sort_index()
            if self._is_daily(pd.DatetimeIndex(s.index)):
                s = s.reindex(pd.date_range(s.index[0], s.index[-1], freq="D"))
                hourly = s.reindex(hours.normalize()).set_axis(hours)
            else:
                hourly = s.reindex(hours)
            runs = missing_runs(hourly.isna().to_numpy())
            if runs:
                missing[name] = [(hours[a], hours[b]) for a, b in runs]
        logger.info("aligned %d source(s) on %s .. %s", len(series), start, end)
        return AlignmentReport(start=start, end=end, missing=missing)
