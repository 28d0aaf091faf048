"""Phase recovery from STFT magnitudes by phase unwrapping.

Sinusoidal partials are unwrapped horizontally (across frames) from their
QIFFT-refined frequencies, onset frames vertically (across bins) from
estimated attack times. Griffin-Lim is included as a baseline.
"""

from .analysis import (OnsetSet, Peak, Region, analyze_frame, detect_onsets, find_peaks,
                       qifft_refine, regions_of_influence)
from .errors import DataError, NoAttackEvidence
from .metrics import inconsistency, sdr
from .reconstruction import (OnsetMethod, PhaseMatrix, griffin_lim, reconstruct_phases,
                             unwrap_horizontal_frame, unwrap_vertical_frame)
from .restoration import (CorruptionReport, RestoreMethod, corrupt_phases, corrupt_with_clicks,
                          interpolate_magnitude, restore)
from .stft import Signal, Spectrogram, StftConfig, istft, stft, wrap_phase

__version__ = "0.1.0"

__all__ = [
    "CorruptionReport", "DataError", "NoAttackEvidence", "OnsetMethod", "OnsetSet", "Peak",
    "PhaseMatrix", "Region", "RestoreMethod", "Signal", "Spectrogram", "StftConfig",
    "analyze_frame", "corrupt_phases", "corrupt_with_clicks", "detect_onsets", "find_peaks",
    "griffin_lim", "inconsistency", "interpolate_magnitude", "istft", "qifft_refine",
    "reconstruct_phases", "regions_of_influence", "restore", "sdr", "stft",
    "unwrap_horizontal_frame", "unwrap_vertical_frame", "wrap_phase",
]
