"""Common change points in short panels with individual effects.

Break dates are found by pooled least squares over all partitions, the number
of breaks by an information criterion, and slopes per regime by sub-sample
(FE) or full-sample (FFE) demeaning.
"""

from .detect import (
    DetectionResult,
    SegmentSSETable,
    brute_force_partition,
    build_sse_table,
    detect_breaks,
    dp_optimal_partition,
    segment_sse,
)
from .estimate import (
    FEEstimate,
    FFEEstimate,
    RegimeOLS,
    fe_estimate,
    ffe_estimate,
    regime_ols,
    sigma2_hat,
    efficiency_factors,
)
from .infer import bonferroni_adjust, wald_gram_change, wald_slope_change
from .panel import (
    GramTable,
    PanelData,
    PanelError,
    Partition,
    build_gram_table,
    demean_full_sample,
    demean_within_regime,
)
from .select import ICConfig, ICCurve, param_count, penalty_weight, select_m

__version__ = "0.1.0"
