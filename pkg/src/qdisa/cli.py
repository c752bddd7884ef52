"""Command line driver.

Five subcommands cover the instrument lifecycle: ``simulate`` produces
raw data, ``calibrate`` turns a sweep cube into a pixel-frequency map,
``analyze`` reconstructs (and optionally fits) a spectrum, ``spectrogram``
renders a frame sequence against a map, and ``report`` runs a scenario end
to end and emits its metrics.

Exit codes: 0 success, 2 configuration errors, 3 data/format errors,
4 quality-gate failures. On failure a machine-readable JSON object with
``error``, ``type`` and ``exit_code`` is printed to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import fileio, pipeline
from .acquisition import normalize_cube
from .analysis import detect_tones, fit_odmr, hyperfine_resolved
from .calibration import reconstruct_spectrum, sweep_spectrum
from .config import ScenarioConfig, load_scenario
from .errors import ConfigError, DataError, QdisaError
from .scenarios import BUNDLED, load_bundled


def _load_config(args) -> ScenarioConfig:
    if getattr(args, "scenario", None):
        if getattr(args, "config", None):
            raise ConfigError("give either --config or --scenario, not both")
        return load_bundled(args.scenario)
    if not getattr(args, "config", None):
        raise ConfigError("a --config file or --scenario name is required")
    return load_scenario(args.config)


def _out_dir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _emit(args, report: dict, lines):
    if getattr(args, "format", "text") == "json":
        print(json.dumps(fileio._json_safe(report), indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    wrote = []
    if cfg.sweep is not None:
        cube = pipeline.acquire_sweep(
            cfg, seed=seed, noiseless=args.noiseless, threads=args.threads
        )
        path = os.path.join(out, "cube.qdc")
        fileio.write_cube(path, cube)
        wrote.append(path)
    if cfg.frames is not None:
        from .acquisition import run_frames

        frames, reference = run_frames(
            cfg.scene, cfg.frames, seed=seed, noiseless=args.noiseless
        )
        path = os.path.join(out, "frames.qdc")
        fileio.write_frames(path, frames, reference)
        wrote.append(path)
    if not wrote:
        raise ConfigError(
            f"scenario {cfg.name!r} has neither a sweep nor a frames section"
        )
    _emit(
        args,
        {"scenario": cfg.name, "seed": seed, "wrote": wrote},
        [f"wrote {p}" for p in wrote],
    )
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    cube = fileio.read_cube(args.cube)
    if not cube.normalized:
        cube = normalize_cube(cube, edge_dip_sigma=cfg.analysis.edge_dip_sigma)
        norm_path = os.path.join(out, "norm_cube.qdc")
        fileio.write_cube(norm_path, cube)
    cmap = pipeline.calibrate_cube(cfg, cube)
    map_path = os.path.join(out, "map.qdm")
    fileio.write_map(map_path, cmap)
    cov = pipeline.coverage_report(cmap)
    _emit(
        args,
        {"scenario": cfg.name, "map": map_path, "calibration": cov},
        [
            f"wrote {map_path}",
            "coverage: {n_valid_bins}/{n_bins} bins, {assigned_fraction:.1%} of "
            "pixels assigned".format(**cov),
            f"valid span: {cov['f_lo_hz']} .. {cov['f_hi_hz']} Hz"
            + ("" if cov["contiguous"] else " (gaps)"),
        ],
    )
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    report = {"scenario": cfg.name}
    lines = []
    if args.frames:
        if not args.map:
            raise ConfigError("--frames analysis needs --map")
        cmap = fileio.read_map(args.map)
        frames, reference = fileio.read_frames(args.frames)
        if reference is None:
            raise DataError("frames file carries no reference image")
        if not 0 <= args.frame < len(frames):
            raise ConfigError(f"--frame must be in [0, {len(frames)})")
        spectrum = reconstruct_spectrum(
            frames[args.frame], cmap, "contrast", reference
        )
    elif args.cube:
        cube = fileio.read_cube(args.cube)
        if not cube.normalized:
            cube = normalize_cube(cube, edge_dip_sigma=cfg.analysis.edge_dip_sigma)
        spectrum = sweep_spectrum(cube, region=cfg.aoi)
    else:
        raise ConfigError("analyze needs --frames (with --map) or --cube")
    spec_path = os.path.join(out, "spectrum.csv")
    fileio.write_spectrum_csv(spec_path, spectrum)
    report["spectrum"] = spec_path
    lines.append(f"wrote {spec_path}")
    if args.frames:
        tones = detect_tones(spectrum, k_sigma=cfg.analysis.k_sigma)
        tones_path = os.path.join(out, "tones.json")
        fileio.write_json(tones_path, fileio.tones_to_dicts(tones))
        report["tones"] = fileio.tones_to_dicts(tones)
        lines.append(f"{len(tones)} tone(s) -> {tones_path}")
        for t in tones:
            lines.append(
                f"  {t.frequency_hz/1e9:.6f} GHz  contrast {t.contrast:.4f}  "
                f"snr {t.snr:.1f}"
            )
    if args.fit:
        fit = fit_odmr(spectrum, params=cfg.scene.physics)
        fit_report = {
            "center_hz": fit.b_hz,
            "fwhm_MHz": fit.fwhm_hz / 1e6,
            "contrast": fit.c,
            "ci95_center_hz": fit.ci95_b_hz,
            "ci95_fwhm_MHz": 2.0 * fit.ci95_a_hz / 1e6,
            "ci95_contrast": fit.ci95_c,
            "hyperfine_resolved": hyperfine_resolved(fit, cfg.scene.physics),
        }
        fit_path = os.path.join(out, "fit.json")
        fileio.write_json(fit_path, fit_report)
        report["fit"] = fit_report
        lines.append(
            "fit: center {b:.6f} GHz, fwhm {w:.3f} MHz, contrast {c:.4f}, "
            "hyperfine {r}".format(
                b=fit.b_hz / 1e9,
                w=fit.fwhm_hz / 1e6,
                c=fit.c,
                r="resolved" if fit_report["hyperfine_resolved"] else "unresolved",
            )
        )
    _emit(args, report, lines)
    return 0


def cmd_spectrogram(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    cmap = fileio.read_map(args.map)
    frames, reference = fileio.read_frames(args.frames)
    if reference is None:
        raise DataError("frames file carries no reference image")
    from .analysis import spectrogram, tones_over_time

    sg = spectrogram(frames, cmap, reference)
    sg_path = os.path.join(out, "spectrogram.csv")
    fileio.write_spectrogram_csv(sg_path, sg)
    tracks = tones_over_time(sg, k_sigma=cfg.analysis.k_sigma)
    tracks_path = os.path.join(out, "tracks.json")
    fileio.write_json(tracks_path, fileio.tones_to_dicts(tracks))
    _emit(
        args,
        {
            "scenario": cfg.name,
            "spectrogram": sg_path,
            "tracks": fileio.tones_to_dicts(tracks),
        },
        [
            f"wrote {sg_path}",
            f"{len(tracks)} track(s) -> {tracks_path}",
        ]
        + [
            f"  {t.frequency_hz/1e9:.6f} GHz  seen {t.first_seen_s:.3f}s .. "
            f"{t.last_seen_s:.3f}s"
            for t in tracks
        ],
    )
    return 0


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    report, artifacts = pipeline.run_report(
        cfg, seed=seed, threads=args.threads, noiseless=args.noiseless
    )
    if "map" in artifacts:
        fileio.write_map(os.path.join(out, "map.qdm"), artifacts["map"])
    if "norm_cube" in artifacts:
        fileio.write_cube(os.path.join(out, "norm_cube.qdc"), artifacts["norm_cube"])
    if "spectrum" in artifacts:
        fileio.write_spectrum_csv(
            os.path.join(out, "spectrum.csv"), artifacts["spectrum"]
        )
    if "spectrogram" in artifacts:
        fileio.write_spectrogram_csv(
            os.path.join(out, "spectrogram.csv"), artifacts["spectrogram"]
        )
    report_path = os.path.join(out, "report.json")
    fileio.write_json(report_path, report)

    lines = [f"scenario {cfg.name} (seed {seed}) -> {report_path}"]
    if "calibration" in report:
        c = report["calibration"]
        lines.append(
            "  map: {n_valid_bins}/{n_bins} bins valid, "
            "{assigned_fraction:.1%} pixels assigned, span "
            "{f_lo_hz}..{f_hi_hz} Hz".format(**c)
        )
    if "fit" in report:
        f = report["fit"]
        lines.append(
            "  fit: center {: .6f} GHz, fwhm {:.3f} MHz, contrast {:.4f}, "
            "hyperfine {}".format(
                f["center_hz"] / 1e9,
                f["fwhm_MHz"],
                f["contrast"],
                "resolved" if f["hyperfine_resolved"] else "unresolved",
            )
        )
    if "frames" in report:
        lines.append(
            "  frames: {n_frames} x {exposure_s}s, {n_tracks} track(s)".format(
                **report["frames"]
            )
        )
    if "dynamic_range" in report:
        d = report["dynamic_range"]
        lines.append(
            "  dynamic range: {range_dB:.1f} dB ({min_detectable_dBm:.1f} .. "
            "{max_power_dBm:.1f} dBm at {exposure_s}s)".format(**d)
        )
    if "temporal" in report:
        t = report["temporal"]
        lines.append(
            "  temporal: min exposure {predicted_min_exposure_s:.4g}s "
            "(budget {mask_budget_per_s:.3e}/s), detected "
            "{detections}/{n_trials} at {trial_exposure_s}s".format(**t)
        )
    _emit(args, report, lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qdisa",
        description="Desk-scale diamond-sensor microwave spectrum analyser, simulated.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, runs: bool = False):
        sp.add_argument("--config", help="scenario config JSON")
        sp.add_argument(
            "--scenario",
            help=f"bundled scenario name ({', '.join(BUNDLED)})",
        )
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument(
            "--format",
            choices=("text", "json"),
            default="text",
            help="stdout summary format",
        )
        if runs:
            sp.add_argument("--seed", type=int, help="override the config seed")
            sp.add_argument(
                "--threads", type=int, default=1, help="sweep worker threads"
            )
            sp.add_argument(
                "--noiseless",
                action="store_true",
                help="expected values instead of Poisson draws",
            )

    sp = sub.add_parser("simulate", help="acquire raw sweep/frame data")
    common(sp, runs=True)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("calibrate", help="build a pixel-frequency map from a cube")
    common(sp)
    sp.add_argument("--cube", required=True, help="sweep cube (.qdc)")
    sp.set_defaults(fn=cmd_calibrate)

    sp = sub.add_parser("analyze", help="reconstruct and optionally fit a spectrum")
    common(sp)
    sp.add_argument("--cube", help="sweep cube (.qdc) for an AOI spectrum")
    sp.add_argument("--frames", help="frame stack (.qdc) for a single-shot spectrum")
    sp.add_argument("--map", help="calibration map (.qdm), needed with --frames")
    sp.add_argument("--frame", type=int, default=0, help="frame index (default 0)")
    sp.add_argument("--fit", action="store_true", help="fit the line shape")
    sp.set_defaults(fn=cmd_analyze)

    sp = sub.add_parser("spectrogram", help="frames + map -> time-frequency matrix")
    common(sp)
    sp.add_argument("--map", required=True, help="calibration map (.qdm)")
    sp.add_argument("--frames", required=True, help="frame stack (.qdc)")
    sp.set_defaults(fn=cmd_spectrogram)

    sp = sub.add_parser("report", help="run a scenario end to end")
    common(sp, runs=True)
    sp.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except QdisaError as exc:
        code = getattr(exc, "exit_code", 3)
        print(
            json.dumps(
                {
                    "error": str(exc),
                    "type": type(exc).__name__,
                    "exit_code": code,
                }
            )
        )
        return code


if __name__ == "__main__":
    sys.exit(main())
