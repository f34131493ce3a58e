from .benchmark import ArimaFit, BenchmarkRow, BenchmarkTable, IngarchFit
from .config import RunConfig
from .forecast import (
    ExogenousForecast,
    ForecastReport,
    ForecastRow,
    ForecastTask,
    HorizonScore,
    MaeResult,
    PipelineData,
    RollingPlan,
)
from .gam import DesignMatrix, FitOptions, FittedModel, ModelSpec, PirlsResult, TermInfo
from .series import (
    FRAME_COLUMNS,
    AlignmentReport,
    CovariateFrame,
    CovidSeries,
    DailyTemperature,
    EventSeries,
    FluSeries,
    Region,
    RegionId,
    RtSeries,
    WeatherSeries,
)
from .smooth import KnotVector, RealizedSmooth, SmoothKind, SmoothSpec
from .synth import GroundTruth, SyntheticDataset
