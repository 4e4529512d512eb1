"""MIMO detection: zero forcing, exhaustive ML, sphere decoding and the
condition-number-ordered, budget-limited hybrid of ZF and SD."""
from .constellation import Constellation, make_qam
from .detect import (
    DetectionProblem,
    DetectionResult,
    SdConfig,
    ml_detect,
    ml_llr,
    sd_detect,
    zf_detect,
    zf_estimate,
)
from .scheduler import BatchResult, BudgetPolicy, detect_batch
from .sim import BerReport, SimConfig, estimate_diversity_slope, run_ber_sweep

__all__ = [
    "BatchResult",
    "BerReport",
    "BudgetPolicy",
    "Constellation",
    "DetectionProblem",
    "DetectionResult",
    "SdConfig",
    "SimConfig",
    "detect_batch",
    "estimate_diversity_slope",
    "make_qam",
    "ml_detect",
    "ml_llr",
    "run_ber_sweep",
    "sd_detect",
    "zf_detect",
    "zf_estimate",
]
