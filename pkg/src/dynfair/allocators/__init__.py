from .exact import ExactAllocator, exact_allocate
from .lightheavy import LightHeavyAllocator, LightHeavyState, NotMonotone, light_heavy_on_update
from .logstar import GroupState, LogStarAllocator, logstar_allocate, logstar_group_ingest
from .multidim import PerDimension, per_dimension_wrap
from .threshold import ThresholdResetAllocator, ThresholdState, sample_threshold, threshold_reset_on_event
from .tower import BitBudgetExceeded, TowerTable, floor_log2_ratio, g_floor_inverse

__all__ = [
    "BitBudgetExceeded", "ExactAllocator", "GroupState", "LightHeavyAllocator",
    "LightHeavyState", "LogStarAllocator", "NotMonotone", "PerDimension",
    "ThresholdResetAllocator", "ThresholdState", "TowerTable", "exact_allocate",
    "floor_log2_ratio", "g_floor_inverse", "light_heavy_on_update", "logstar_allocate",
    "logstar_group_ingest", "per_dimension_wrap", "sample_threshold",
    "threshold_reset_on_event",
]
