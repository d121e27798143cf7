"""Critical-point search for the free-period action: minimizers, mountain passes, scans."""

from .descent import (
    CriticalPoint,
    MorseData,
    PSVerdict,
    SearchSettings,
    TraceRecord,
    find_local_min,
    morse_index,
    palais_smale_monitor,
    refine_critical,
    shooting_defect,
)
from .distinct import distinct, neighbour_tiles, surface_hausdorff
from .minimax import (
    MinimaxPath,
    MountainPassResult,
    PathSettings,
    ScanRow,
    ScanTable,
    format_float,
    mountain_pass,
    negative_disc_seed,
    scan_minimax,
)

__all__ = [
    "CriticalPoint",
    "MorseData",
    "PSVerdict",
    "SearchSettings",
    "TraceRecord",
    "find_local_min",
    "morse_index",
    "palais_smale_monitor",
    "refine_critical",
    "distinct",
    "neighbour_tiles",
    "surface_hausdorff",
    "MinimaxPath",
    "MountainPassResult",
    "PathSettings",
    "ScanRow",
    "ScanTable",
    "format_float",
    "mountain_pass",
    "scan_minimax",
    "negative_disc_seed",
    "shooting_defect",
]
