"""Unsupervised sleep-wake cycle detection from minute-level actigraphy.

A circadian cosinor fit locates rough day/night cycles; a Gamma-likelihood
single change-point search refines each cycle boundary into a labeled sleep
or wake onset.  Includes wear screening, an unsupervised error detector, a
marker-based validation harness, and a synthetic-data generator.
"""

from .cosinor import (
    CosinorFit,
    CosinorParams,
    CycleBoundaries,
    NonIdentifiableError,
    dichotomize,
    eval_cosinor,
    fit_cosinor,
)
from .detector import (
    SOT,
    WOT,
    ChangePointEvent,
    DetectionConfig,
    DetectionResult,
    ch_index,
    detect,
    flag_errors,
    states_from_events,
)
from .gamma import (
    CpSearchResult,
    DegenerateDataError,
    GammaParams,
    find_single_cp,
    gamma_loglik,
    gamma_mle,
    mic,
)
from .ingest import (
    ColumnFormat,
    EpochSeries,
    ParseError,
    ScreenReport,
    WearPeriod,
    aggregate,
    find_wear_periods,
    parse_series,
    screen,
)
from .synth import GroundTruth, SynthSpec, generate
from .validate import (
    AgreementReport,
    ValidationPair,
    VarianceShares,
    bland_altman,
    match_markers,
    to_minutes_since_midnight,
    variance_summary,
)

__version__ = "0.1.0"
