"""Digital twin of a diamond-sensor wideband microwave spectrum analyser.

A permanent magnet's gradient field spreads NV spin resonances across a
camera's field of view, so each pixel column watches its own slice of the
spectrum. The package simulates that instrument end to end: field maps,
ODMR response, photon-limited camera frames, sweep acquisition, the
pixel-to-frequency calibration, single-shot spectrum reconstruction, and
the performance metrics (resolution, dynamic range, temporal resolution)
that characterize it.
"""

from .acquisition import (
    ChirpSpec,
    DataCube,
    FramesSpec,
    SweepConfig,
    contrast_cube,
    normalize_cube,
    run_frames,
    run_sweep,
)
from .analysis import (
    FitResult,
    Spectrogram,
    ToneEstimate,
    detect_tones,
    dynamic_range,
    fit_odmr,
    hyperfine_resolved,
    min_exposure,
    spectrogram,
    tones_over_time,
)
from .calibration import (
    AmbiguitySets,
    BandRequest,
    CalibrationMap,
    Spectrum,
    ambiguity_sets,
    band_filter,
    build_calibration,
    reconstruct_spectrum,
    sweep_spectrum,
)
from .camera import (
    Frame,
    PixelOptics,
    Scene,
    expected_counts,
    photon_budget,
    rng_from_seed,
    sample_frame,
    snr_estimate,
)
from .errors import (
    AmbiguityError,
    CalibrationError,
    ConfigError,
    DataError,
    DomainError,
    FitConvergenceError,
    NoPeakError,
    NormalizationError,
    QdisaError,
    QualityError,
)
from .field import (
    FieldMap,
    MagnetDipole,
    SensorGeometry,
    calibrate_surface_field,
    dipole_field,
    field_map,
    uniform_field_map,
)
from .kernels import backend_name as kernel_backend
from .nv import (
    AntennaModel,
    MWDrive,
    NVPhysicsParams,
    Tone,
    contrast_model,
    field_for_frequency,
    gslac_valid,
    linewidth_model,
    lorentzian_triplet,
    odmr_response,
    resonance_frequencies,
)

__version__ = "1.0.0"

__all__ = [
    "AmbiguityError",
    "AmbiguitySets",
    "AntennaModel",
    "BandRequest",
    "CalibrationError",
    "CalibrationMap",
    "ChirpSpec",
    "ConfigError",
    "DataCube",
    "DataError",
    "DomainError",
    "FieldMap",
    "FitConvergenceError",
    "FitResult",
    "Frame",
    "FramesSpec",
    "MWDrive",
    "MagnetDipole",
    "NVPhysicsParams",
    "NoPeakError",
    "NormalizationError",
    "PixelOptics",
    "QdisaError",
    "QualityError",
    "Scene",
    "SensorGeometry",
    "Spectrogram",
    "Spectrum",
    "SweepConfig",
    "Tone",
    "ToneEstimate",
    "ambiguity_sets",
    "band_filter",
    "build_calibration",
    "calibrate_surface_field",
    "contrast_cube",
    "contrast_model",
    "detect_tones",
    "dipole_field",
    "dynamic_range",
    "expected_counts",
    "field_for_frequency",
    "field_map",
    "fit_odmr",
    "gslac_valid",
    "hyperfine_resolved",
    "kernel_backend",
    "linewidth_model",
    "lorentzian_triplet",
    "min_exposure",
    "normalize_cube",
    "odmr_response",
    "photon_budget",
    "reconstruct_spectrum",
    "resonance_frequencies",
    "rng_from_seed",
    "run_frames",
    "run_sweep",
    "sample_frame",
    "snr_estimate",
    "spectrogram",
    "sweep_spectrum",
    "tones_over_time",
    "uniform_field_map",
]
