"""Analysis of detector timestamp streams."""
from .correlation import Histogram, PeakRatio, coincidence_histogram, g2_zero
from .counting import (
    RunLengthEstimator,
    RunLengthReport,
    SqueezingReport,
    bin_counts,
    consecutive_runs,
    predicted_run_rate,
    squeezing_db,
    squeezing_report,
)
from .hom import (
    HomReport,
    correct_indistinguishability,
    expected_visibility,
    hom_simulate,
    hom_visibility,
    noise_probability,
)

__all__ = [
    "Histogram", "PeakRatio", "coincidence_histogram", "g2_zero",
    "RunLengthEstimator", "RunLengthReport", "SqueezingReport", "bin_counts",
    "consecutive_runs", "predicted_run_rate", "squeezing_db", "squeezing_report",
    "HomReport", "correct_indistinguishability", "expected_visibility", "hom_simulate",
    "hom_visibility", "noise_probability",
]
