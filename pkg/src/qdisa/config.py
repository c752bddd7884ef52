"""Scenario configuration: a strict JSON schema that assembles a Scene
plus the acquisition and analysis settings for one simulated experiment.

Unknown keys are rejected rather than ignored; a typo in a config must
fail loudly, not silently fall back to a default.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .acquisition import ChirpSpec, FramesSpec, SweepConfig
from .camera import PixelOptics, Scene
from .errors import ConfigError
from .field import MagnetDipole, SensorGeometry
from .nv import AntennaModel, MWDrive, NVPhysicsParams

_MAGNET_KEYS = {"radius_m", "surface_pole_field_T", "magnetization_axis"}
_GEOMETRY_KEYS = {
    "standoff_m",
    "magnet_center_to_diamond_m",
    "active_area_um",
    "pixel_pitch_um",
    "nv_axis",
}
_PHYSICS_KEYS = {
    "D_GHz",
    "gamma_GHz_per_T",
    "hyperfine_MHz",
    "intrinsic_fwhm_MHz",
    "gslac_floor_MHz",
    "optical_saturation_s",
    "max_contrast",
    "optical_broadening_scale",
    "mw_broadening_MHz_per_sqrt_mW",
    "offaxis_lines_enabled",
    "offaxis_line_weight",
}
_OPTICS_KEYS = {
    "nv_density_ppb",
    "voxel_volume_um3",
    "pl_rate_per_center",
    "collection_efficiency",
    "laser_fwhm_um",
}
_DRIVE_KEYS = {"reference_power_dBm", "antenna_anchors_ghz_db"}
_SWEEP_KEYS = {
    "f_min_hz",
    "f_max_hz",
    "delta_f_hz",
    "n_cycles",
    "exposure_s",
    "edge_bins_m",
    "probe_power_dBm",
}
_FRAMES_KEYS = {"n_frames", "exposure_s", "tones"}
_CHIRP_KEYS = {"f_start_hz", "f_end_hz", "nominal_power_dBm", "frame_on", "frame_off"}
_ANALYSIS_KEYS = {
    "branch",
    "threshold_sigma",
    "min_assigned_fraction",
    "min_np",
    "max_fwhm_bins",
    "k_sigma",
    "edge_dip_sigma",
    "normalization",
}
_DR_KEYS = {
    "tone_frequency_hz",
    "exposure_s",
    "power_max_dBm",
    "power_min_dBm",
    "power_step_dB",
    "snr_threshold",
}
_TEMPORAL_KEYS = {
    "tone_frequency_hz",
    "nominal_power_dBm",
    "target_snr",
    "detect_sigma",
}
_REPORT_KEYS = {"fit_aoi", "dynamic_range", "temporal"}
_TOP_KEYS = {
    "name",
    "seed",
    "magnet",
    "geometry",
    "physics",
    "optics",
    "drive",
    "sweep",
    "frames",
    "aoi",
    "analysis",
    "report",
}


def _check_keys(section: dict, allowed: set, where: str) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return section


def _build(cls, section: dict, where: str, convert=None):
    kwargs = dict(section)
    if convert:
        for key, fn in convert.items():
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where} section: {exc}")


@dataclass(frozen=True)
class AnalysisOptions:
    """Knobs for calibration and spectrum analysis, all with the library
    defaults unless a scenario overrides them."""

    branch: str = "minus"
    threshold_sigma: float = 5.0
    min_assigned_fraction: float = 0.05
    min_np: int = 3
    max_fwhm_bins: float = None
    k_sigma: float = 5.0
    edge_dip_sigma: float = 5.0
    normalization: str = "contrast"

    def __post_init__(self):
        if self.branch not in ("minus", "plus"):
            raise ValueError(f"branch must be 'minus' or 'plus', got {self.branch!r}")
        if self.normalization not in ("contrast", "per-pixel-mean", "raw-sum"):
            raise ValueError(f"unknown normalization {self.normalization!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """One fully specified simulated experiment."""

    scene: Scene
    seed: int = 12345
    name: str = "scenario"
    sweep: SweepConfig = None
    frames: FramesSpec = None
    aoi: tuple = None  # (row_lo, row_hi, col_lo, col_hi), half-open
    analysis: AnalysisOptions = field(default_factory=AnalysisOptions)
    report: dict = field(default_factory=dict)


def _parse_geometry(section: dict) -> SensorGeometry:
    _check_keys(section, _GEOMETRY_KEYS, "geometry")
    section = dict(section)
    standoff = section.pop("standoff_m", None)
    center = section.pop("magnet_center_to_diamond_m", None)
    if (standoff is None) == (center is None):
        raise ConfigError(
            "geometry needs exactly one of standoff_m (surface to near edge) "
            "or magnet_center_to_diamond_m"
        )
    if "active_area_um" in section:
        section["active_area_um"] = tuple(section["active_area_um"])
    if section.get("nv_axis") is not None:
        section["nv_axis"] = tuple(section["nv_axis"])
    return standoff, section, center


def _parse_frames(section: dict) -> FramesSpec:
    _check_keys(section, _FRAMES_KEYS, "frames")
    tones = []
    for i, t in enumerate(section.get("tones", [])):
        _check_keys(t, _CHIRP_KEYS, f"frames.tones[{i}]")
        t = dict(t)
        t.setdefault("f_end_hz", t.get("f_start_hz"))
        tones.append(_build(ChirpSpec, t, f"frames.tones[{i}]"))
    return FramesSpec(
        n_frames=section.get("n_frames", 1),
        exposure_s=section.get("exposure_s", 0.01),
        tones=tuple(tones),
    )


def _parse_aoi(value) -> tuple:
    if isinstance(value, dict):
        _check_keys(value, {"row_lo", "row_hi", "col_lo", "col_hi"}, "aoi")
        try:
            value = [value["row_lo"], value["row_hi"], value["col_lo"], value["col_hi"]]
        except KeyError as exc:
            raise ConfigError(f"aoi is missing {exc}")
    if len(value) != 4:
        raise ConfigError("aoi must be [row_lo, row_hi, col_lo, col_hi]")
    r0, r1, c0, c1 = (int(v) for v in value)
    if r0 < 0 or c0 < 0 or r1 <= r0 or c1 <= c0:
        raise ConfigError("aoi bounds must be non-negative with hi > lo")
    return (r0, r1, c0, c1)


def _parse_report(section: dict) -> dict:
    _check_keys(section, _REPORT_KEYS, "report")
    out = {}
    if "fit_aoi" in section:
        if not isinstance(section["fit_aoi"], bool):
            raise ConfigError("report.fit_aoi must be true or false")
        out["fit_aoi"] = section["fit_aoi"]
    if "dynamic_range" in section:
        out["dynamic_range"] = dict(
            _check_keys(section["dynamic_range"], _DR_KEYS, "report.dynamic_range")
        )
    if "temporal" in section:
        out["temporal"] = dict(
            _check_keys(section["temporal"], _TEMPORAL_KEYS, "report.temporal")
        )
    return out


def scenario_from_dict(raw: dict, name: str = None) -> ScenarioConfig:
    _check_keys(raw, _TOP_KEYS, "scenario config")

    magnet = _build(
        MagnetDipole,
        _check_keys(raw.get("magnet", {}), _MAGNET_KEYS, "magnet"),
        "magnet",
        convert={"magnetization_axis": tuple},
    )

    if "geometry" not in raw:
        raise ConfigError("scenario config needs a geometry section")
    standoff, geo_kwargs, center = _parse_geometry(raw["geometry"])
    if standoff is not None:
        center = magnet.radius_m + float(standoff)
    geometry = _build(
        SensorGeometry,
        dict(geo_kwargs, magnet_center_to_diamond_m=center),
        "geometry",
    )

    physics = _build(
        NVPhysicsParams,
        _check_keys(raw.get("physics", {}), _PHYSICS_KEYS, "physics"),
        "physics",
    )
    optics = _build(
        PixelOptics,
        _check_keys(raw.get("optics", {}), _OPTICS_KEYS, "optics"),
        "optics",
    )

    drive_raw = dict(_check_keys(raw.get("drive", {}), _DRIVE_KEYS, "drive"))
    anchors = drive_raw.pop("antenna_anchors_ghz_db", None)
    antenna = (
        AntennaModel(anchors_ghz_db=tuple(tuple(a) for a in anchors))
        if anchors is not None
        else AntennaModel()
    )
    drive = MWDrive(antenna=antenna, **drive_raw)

    scene = Scene(
        geometry=geometry,
        magnet=magnet,
        optics=optics,
        physics=physics,
        drive=drive,
    )

    sweep = None
    if "sweep" in raw:
        sweep = _build(
            SweepConfig, _check_keys(raw["sweep"], _SWEEP_KEYS, "sweep"), "sweep"
        )
    frames = _parse_frames(raw["frames"]) if "frames" in raw else None
    aoi = _parse_aoi(raw["aoi"]) if "aoi" in raw else None
    if aoi is not None:
        ny, nx = scene.shape
        if aoi[1] > ny or aoi[3] > nx:
            raise ConfigError(
                f"aoi {aoi} exceeds the {ny}x{nx} sensor for this geometry"
            )
    analysis = _build(
        AnalysisOptions,
        _check_keys(raw.get("analysis", {}), _ANALYSIS_KEYS, "analysis"),
        "analysis",
    )
    report = _parse_report(raw.get("report", {}))

    seed = raw.get("seed", 12345)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")

    return ScenarioConfig(
        scene=scene,
        seed=seed,
        name=str(raw.get("name", name or "scenario")),
        sweep=sweep,
        frames=frames,
        aoi=aoi,
        analysis=analysis,
        report=report,
    )


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    stem = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_dict(raw, name=stem)
