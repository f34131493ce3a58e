import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from ..errors import ConfigError
from ..models.config import RunConfig
from ..models.forecast import ExogenousForecast, PipelineData
from ..models.series import EventSeries, RegionId
from .data_service import DataService
from .feature_service import FeatureService
from .forecast_service import ForecastService

logger = logging.getLogger(__name__)


class PipelineService:
    """Loads the input files named by a RunConfig and assembles the covariate frame."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.data = DataService()
        self.features = FeatureService(
            serial_mean=config.serial_mean,
            serial_sd=config.serial_sd,
            rt_window=config.rt_window,
        )

    def _path(self, name: str) -> Path:
        path = self.config.input_path(name)
        if not path.is_file():
            raise ConfigError(f"{name} input {path} does not exist")
        return path

    def _shared_inputs(self):
        """Weather, COVID, flu and regions are read in parallel; they do not depend on each other."""
        loaders = {
            "regions": lambda: self.data.load_regions(self._path("regions")),
            "weather": lambda: self.data.ingest_weather(self._path("weather")),
            "covid": lambda: self.data.ingest_covid(self._path("covid")),
            "flu": lambda: self.data.interpolate_flu(self.data.ingest_flu(self._path("flu"))),
        }
        with ThreadPoolExecutor(max_workers=max(1, min(self.config.threads, len(loaders)))) as pool:
            futures = {name: pool.submit(fn) for name, fn in loaders.items()}
            return {name: f.result() for name, f in futures.items()}

    def region_names(self) -> List[str]:
        """Regions the config selects: one name, every region in the regions file, or the file's only one."""
        if self.config.region and self.config.region != "all":
            return [self.config.region]
        all_events = self.data.ingest_all_events(self._path("events"))
        names = [r.value for r in all_events]
        if self.config.region is None and len(names) > 1:
            raise ConfigError(f"events file holds regions {names}; choose one with --region or use --region all")
        return names

    @staticmethod
    def _trim(events: EventSeries, start: pd.Timestamp, end: pd.Timestamp) -> EventSeries:
        series = events.to_series()[start:end]
        return EventSeries(region=events.region, start=series.index[0], counts=series.to_numpy())

    def load(self, region: Optional[str] = None) -> PipelineData:
        region = region or (self.config.region if self.config.region != "all" else None)
        shared = self._shared_inputs()
        events = self.data.ingest_events(self._path("events"), region)
        try:
            region_def = shared["regions"][RegionId(events.region)]
        except KeyError as exc:
            raise ConfigError(f"region {events.region.value} is missing from the regions file") from exc
        temperature = self.data.aggregate_weather(shared["weather"], region_def)

        report = self.data.validate_alignment(
            {"events": events.to_series(), "temperature": temperature.values.dropna()}
        )
        if report.start > events.start or report.end < events.end:
            logger.info("trimming events to the span shared with weather: %s .. %s", report.start, report.end)
            events = self._trim(events, report.start, report.end)

        rt = self.features.compute_rt(shared["covid"])
        frame = self.features.assemble_frame(events, temperature, rt, shared["flu"])
        return PipelineData(events=events, temperature=temperature, rt=rt, flu=shared["flu"], frame=frame)

    def load_all(self) -> Dict[str, PipelineData]:
        return {name: self.load(name) for name in self.region_names()}

    def exogenous(self) -> Optional[ExogenousForecast]:
        if not self.config.exogenous:
            return None
        path = Path(self.config.exogenous)
        if not path.is_file():
            raise ConfigError(f"exogenous forecast file {path} does not exist")
        return ForecastService(self.config.threads).load_exogenous_forecasts(path)
