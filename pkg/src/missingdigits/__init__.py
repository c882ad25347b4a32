"""Missing digit measures, their Fourier coefficients, and Diophantine approximation experiments."""

__version__ = "0.1.0"

from .diophantine import (
    ApproxTarget,
    IntegerPolynomial,
    approx_intervals,
    lebesgue_length,
    measure_A,
    measure_B,
    nearest_int_distance,
)
from .errors import (
    ConfigError,
    DegenerateMeasureWarning,
    DomainError,
    EpsilonSelectionError,
    MissingDigitsError,
    NumericalError,
    PlanRejectedError,
    ToleranceUnreachableError,
)
from .fourier import (
    FourierCoefficient,
    KappaEstimate,
    LtSumSeries,
    divisor_count,
    estimate_kappa,
    fourier_coefficient,
    fourier_coefficients,
    geometric_grid,
    large_base_search,
    lt_sum,
)
from .harness import (
    ExperimentPlan,
    PsiFunction,
    RatioReport,
    choose_epsilon,
    delta_threshold,
    lebesgue_baseline,
    lemma1_experiment,
    lemma2_check,
    survivor_experiment,
    tail_sum_experiment,
)
from .measure import (
    DigitSystem,
    MissingDigitMeasure,
    RationalInterval,
    SampleBatch,
    SamplePoint,
    band_measure,
    measure_interval,
    measure_interval_union,
    sample_points,
)
