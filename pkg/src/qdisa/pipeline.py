"""End-to-end pipelines over a ScenarioConfig: acquire, calibrate,
analyze, and report. The command line and the test suite both drive the
instrument through these functions so they cannot drift apart.
"""

from __future__ import annotations

import numpy as np

from .acquisition import DataCube, normalize_cube, run_frames, run_sweep
from .analysis import (
    detect_tones,
    dynamic_range,
    empirical_snr,
    fit_odmr,
    hyperfine_resolved,
    min_exposure,
    spectrogram,
    tones_over_time,
)
from .calibration import CalibrationMap, build_calibration, reconstruct_spectrum, sweep_spectrum
from .camera import expected_counts
from .config import ScenarioConfig
from .errors import ConfigError, DataError
from .fileio import tones_to_dicts
from .kernels import backend_name
from .nv import Tone


def acquire_sweep(
    cfg: ScenarioConfig,
    seed: int = None,
    noiseless: bool = False,
    threads: int = 1,
) -> DataCube:
    if cfg.sweep is None:
        raise ConfigError(f"scenario {cfg.name!r} has no sweep section")
    return run_sweep(
        cfg.scene,
        cfg.sweep,
        seed=cfg.seed if seed is None else seed,
        noiseless=noiseless,
        threads=threads,
    )


def normalize_scenario_cube(cfg: ScenarioConfig, cube: DataCube) -> DataCube:
    return normalize_cube(cube, edge_dip_sigma=cfg.analysis.edge_dip_sigma)


def calibrate_cube(cfg: ScenarioConfig, norm: DataCube) -> CalibrationMap:
    a = cfg.analysis
    return build_calibration(
        norm,
        threshold_sigma=a.threshold_sigma,
        branch=a.branch,
        min_assigned_fraction=a.min_assigned_fraction,
        min_np=a.min_np,
        max_fwhm_bins=a.max_fwhm_bins,
        params=cfg.scene.physics,
    )


def coverage_report(cmap: CalibrationMap) -> dict:
    """Span and contiguity of the confidently covered bins. A stray noise
    assignment lands with n_p of 1 or 2 and is flagged low-confidence; such
    bins must not stretch the reported span."""
    confident = cmap.valid & (cmap.n_p > 0) & ~cmap.low_confidence
    idx = np.flatnonzero(confident)
    covered = idx.size > 0
    first = int(idx[0]) if covered else None
    last = int(idx[-1]) if covered else None
    contiguous = bool(covered and np.all(confident[first : last + 1]))
    return {
        "n_bins": int(cmap.n_bins),
        "n_valid_bins": int(np.count_nonzero(cmap.valid & (cmap.n_p > 0))),
        "n_confident_bins": int(idx.size),
        "assigned_fraction": float(cmap.assigned_fraction),
        "f_lo_hz": int(cmap.freq_axis_hz[first]) if covered else None,
        "f_hi_hz": int(cmap.freq_axis_hz[last]) if covered else None,
        "contiguous": contiguous,
        "branch": cmap.branch,
    }


def aoi_fit_report(cfg: ScenarioConfig, norm: DataCube) -> dict:
    spec = sweep_spectrum(norm, region=cfg.aoi)
    fit = fit_odmr(spec, params=cfg.scene.physics)
    return {
        "center_hz": fit.b_hz,
        "fwhm_MHz": fit.fwhm_hz / 1e6,
        "contrast": fit.c,
        "ci95_center_hz": fit.ci95_b_hz,
        "ci95_fwhm_MHz": 2.0 * fit.ci95_a_hz / 1e6,
        "ci95_contrast": fit.ci95_c,
        "residual_rms": fit.residual_rms,
        "n_iter": fit.n_iter,
        "hyperfine_resolved": hyperfine_resolved(fit, cfg.scene.physics),
        "aoi": list(cfg.aoi) if cfg.aoi else None,
    }


def dynamic_range_report(cfg: ScenarioConfig, cmap: CalibrationMap) -> dict:
    opts = cfg.report.get("dynamic_range")
    if not opts:
        raise ConfigError(f"scenario {cfg.name!r} has no report.dynamic_range")
    step = float(opts.get("power_step_dB", 1.0))
    p_hi = float(opts["power_max_dBm"])
    p_lo = float(opts["power_min_dBm"])
    if step <= 0 or p_hi <= p_lo:
        raise ConfigError("power_max_dBm must exceed power_min_dBm, step > 0")
    n = int(round((p_hi - p_lo) / step))
    powers = p_hi - step * np.arange(n + 1)
    exposure = float(opts.get("exposure_s", 1.0))
    threshold = float(opts.get("snr_threshold", 1.0))
    f_tone = float(opts["tone_frequency_hz"])
    lo, hi, rng = dynamic_range(
        cfg.scene, cmap, f_tone, powers, exposure, snr_threshold=threshold
    )
    return {
        "tone_frequency_hz": f_tone,
        "exposure_s": exposure,
        "snr_threshold": threshold,
        "max_power_dBm": hi,
        "min_detectable_dBm": lo,
        "range_dB": rng,
    }


def _mask_budget_per_s(cfg: ScenarioConfig, cmap: CalibrationMap, f_hz: float):
    """Photon budget (counts/s, no tone) of the pixel mask for the bin
    nearest f_hz, plus that bin's index."""
    k = int(np.argmin(np.abs(cmap.freq_axis_hz.astype(float) - f_hz)))
    if not cmap.valid[k] or cmap.n_p[k] == 0:
        raise DataError(f"no valid pixel mask at {f_hz/1e9:.4f} GHz")
    rate = cfg.scene.rate_map.ravel()
    budget = float(rate[cmap.mask_indices(k)].sum())
    return budget, k


def temporal_report(cfg: ScenarioConfig, cmap: CalibrationMap, seed: int = None) -> dict:
    """Predicted minimum exposure for the configured tone plus an empirical
    seeded-trials check at the scenario's frame exposure."""
    opts = cfg.report.get("temporal")
    if not opts:
        raise ConfigError(f"scenario {cfg.name!r} has no report.temporal")
    if cfg.frames is None:
        raise ConfigError("temporal report needs a frames section for the trials")
    f_tone = float(opts["tone_frequency_hz"])
    power = float(opts["nominal_power_dBm"])
    target_snr = float(opts.get("target_snr", 5.0))
    detect_sigma = float(opts.get("detect_sigma", 3.0))

    budget, k = _mask_budget_per_s(cfg, cmap, f_tone)
    tone = Tone(frequency_hz=f_tone, nominal_power_dBm=power)
    contrast = cfg.scene.drive.tone_contrast(tone, cfg.scene.physics)
    predicted = min_exposure(contrast, budget, target_snr)

    exposure = cfg.frames.exposure_s
    frames, reference = run_frames(
        cfg.scene, cfg.frames, seed=cfg.seed if seed is None else seed
    )
    spacing = float(np.median(np.diff(cmap.freq_axis_hz)))
    idx = cmap.mask_indices(k)
    ref_sum = float(np.asarray(reference, dtype=float).ravel()[idx].sum())
    sums = []
    detections = 0
    for fr in frames:
        spec = reconstruct_spectrum(fr, cmap, "contrast", reference)
        found = detect_tones(spec, k_sigma=detect_sigma)
        if any(abs(t.frequency_hz - f_tone) <= 2.0 * spacing for t in found):
            detections += 1
        sums.append(float(np.asarray(fr.counts, dtype=float).ravel()[idx].sum()))
    return {
        "tone_frequency_hz": f_tone,
        "nominal_power_dBm": power,
        "contrast": contrast,
        "mask_budget_per_s": budget,
        "target_snr": target_snr,
        "predicted_min_exposure_s": predicted,
        "trial_exposure_s": exposure,
        "n_trials": len(frames),
        "detections": detections,
        "detect_sigma": detect_sigma,
        "empirical_snr": empirical_snr(np.asarray(sums), ref_sum),
        "predicted_snr": float(np.sqrt(budget * exposure) * contrast),
    }


def frames_report(cfg: ScenarioConfig, cmap: CalibrationMap, seed: int = None):
    """Spectrogram of the scenario's frame sequence plus its tone tracks.

    Returns (report dict, spectrogram, frames, reference).
    """
    if cfg.frames is None:
        raise ConfigError(f"scenario {cfg.name!r} has no frames section")
    frames, reference = run_frames(
        cfg.scene, cfg.frames, seed=cfg.seed if seed is None else seed
    )
    sg = spectrogram(frames, cmap, reference)
    spacing = float(np.median(np.diff(cmap.freq_axis_hz)))
    slew = [
        abs(c.f_end_hz - c.f_start_hz) / max(cfg.frames.n_frames - 1, 1)
        for c in cfg.frames.tones
    ]
    max_jump = max([2.0 * spacing] + [1.5 * s for s in slew])
    tracks = tones_over_time(sg, k_sigma=cfg.analysis.k_sigma, max_jump_hz=max_jump)
    per_row = [
        len(detect_tones(sg.row_spectrum(i), cfg.analysis.k_sigma))
        for i in range(len(sg.time_axis_s))
    ]
    report = {
        "n_frames": len(frames),
        "exposure_s": cfg.frames.exposure_s,
        "n_tracks": len(tracks),
        "tones_per_frame": per_row,
        "tracks": tones_to_dicts(tracks),
    }
    return report, sg, frames, reference


def run_report(
    cfg: ScenarioConfig,
    seed: int = None,
    threads: int = 1,
    noiseless: bool = False,
):
    """Run a scenario end to end.

    Returns (report dict, artifacts dict). Artifacts hold the in-memory
    objects produced along the way, keyed raw_cube / norm_cube / map /
    spectrum / spectrogram / frames / reference, for callers that want to
    serialize them.
    """
    seed = cfg.seed if seed is None else seed
    report = {
        "scenario": cfg.name,
        "seed": seed,
        "kernel_backend": backend_name(),
        "grid": list(cfg.scene.shape),
    }
    artifacts = {}
    cmap = None
    if cfg.sweep is not None:
        raw = acquire_sweep(cfg, seed=seed, noiseless=noiseless, threads=threads)
        norm = normalize_scenario_cube(cfg, raw)
        artifacts["raw_cube"] = raw
        artifacts["norm_cube"] = norm
        if cfg.report.get("fit_aoi"):
            report["fit"] = aoi_fit_report(cfg, norm)
            artifacts["spectrum"] = sweep_spectrum(norm, region=cfg.aoi)
        else:
            cmap = calibrate_cube(cfg, norm)
            artifacts["map"] = cmap
            report["calibration"] = coverage_report(cmap)
    if cfg.frames is not None and cmap is not None and "temporal" not in cfg.report:
        frames_rep, sg, frames, reference = frames_report(cfg, cmap, seed=seed)
        report["frames"] = frames_rep
        artifacts["spectrogram"] = sg
        artifacts["frames"] = frames
        artifacts["reference"] = reference
    if "dynamic_range" in cfg.report:
        if cmap is None:
            raise ConfigError("dynamic_range report needs a sweep-built map")
        report["dynamic_range"] = dynamic_range_report(cfg, cmap)
    if "temporal" in cfg.report:
        if cmap is None:
            raise ConfigError("temporal report needs a sweep-built map")
        report["temporal"] = temporal_report(cfg, cmap, seed=seed)
    if not report.keys() - {"scenario", "seed", "kernel_backend", "grid"}:
        raise ConfigError(
            f"scenario {cfg.name!r} defines nothing to run (no sweep, frames, "
            "or report sections)"
        )
    return report, artifacts


def single_tone_image(cfg: ScenarioConfig, frequency_hz: float, power_dBm: float, exposure_s: float):
    """Noiseless mean image with one CW tone, plus the tone-free reference."""
    tone = Tone(frequency_hz=frequency_hz, nominal_power_dBm=power_dBm)
    img = expected_counts(cfg.scene, [tone], exposure_s)
    ref = expected_counts(cfg.scene, [], exposure_s)
    return img, ref
