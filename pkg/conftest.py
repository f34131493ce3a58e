from typing import Callable, Optional

import numpy as np
import pandas as pd
import pytest

from eventcast.models.gam import DEFAULT_LINEAR
from eventcast.models.series import CovariateFrame
from eventcast.services.feature_service import calendar_features


def build_frame(
    n_days: int = 365,
    start: str = "2019-01-01",
    seed: int = 0,
    eta: Optional[Callable[[pd.DataFrame], np.ndarray]] = None,
    theta: Optional[float] = 10.0,
) -> CovariateFrame:
    """Hourly frame with calendar columns, noise covariates and NB counts drawn from `eta`.

    theta=None draws Poisson counts.
    """
    rng = np.random.default_rng(seed)
    idx = pd.date_range(start, periods=24 * n_days, freq="h")
    data = calendar_features(idx).astype(float)
    for col in DEFAULT_LINEAR:
        data[col] = rng.normal(size=len(idx))
    mu = np.exp(eta(data)) if eta is not None else np.full(len(idx), np.e)
    if theta is None:
        data["y"] = rng.poisson(mu).astype(float)
    else:
        data["y"] = rng.negative_binomial(theta, theta / (theta + mu)).astype(float)
    return CovariateFrame(data=data)


@pytest.fixture(scope="session")
def frame_factory():
    return build_frame
