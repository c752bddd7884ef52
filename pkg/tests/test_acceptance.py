"""Acceptance gate: ten end-to-end criteria over the full stack.

Each test prints one [PASS]/[FAIL] scorecard line (visible even under
pytest's capture) before asserting, so a full run always shows the
complete scorecard in the terminal.
"""

import math
import time

import numpy as np
import pytest

from qdisa import pipeline
from qdisa.acquisition import SweepConfig, normalize_cube, run_sweep
from qdisa.analysis import (
    detect_tones,
    dynamic_range,
    empirical_snr,
    fit_odmr,
    hyperfine_resolved,
    min_exposure,
)
from qdisa.calibration import (
    Spectrum,
    ambiguity_sets,
    band_filter,
    build_calibration,
    reconstruct_spectrum,
    sweep_spectrum,
)
from qdisa.camera import Scene, expected_counts, rng_from_seed
from qdisa.errors import AmbiguityError
from qdisa.field import MagnetDipole, SensorGeometry, calibrate_surface_field, field_map
from qdisa.nv import (
    NVPhysicsParams,
    Tone,
    contrast_model,
    field_for_frequency,
    gslac_valid,
    linewidth_model,
    odmr_response,
    resonance_frequencies,
)
from qdisa.scenarios import load_bundled


def _verdict(capsys, num: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def _rel(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.abs(b))


# ---------------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def xband_bundle():
    cfg = load_bundled("xband")
    cube = pipeline.acquire_sweep(cfg)
    norm = pipeline.normalize_scenario_cube(cfg, cube)
    return cfg, pipeline.calibrate_cube(cfg, norm)


@pytest.fixture(scope="module")
def dr_bundle():
    cfg = load_bundled("dynamic_range")
    cube = pipeline.acquire_sweep(cfg)
    norm = pipeline.normalize_scenario_cube(cfg, cube)
    return cfg, pipeline.calibrate_cube(cfg, norm)


@pytest.fixture(scope="module")
def temporal_bundle():
    cfg = load_bundled("temporal_resolution")
    cube = pipeline.acquire_sweep(cfg)
    norm = pipeline.normalize_scenario_cube(cfg, cube)
    return cfg, pipeline.calibrate_cube(cfg, norm)


@pytest.fixture(scope="module")
def kband_maps():
    """Noiseless calibration maps of both branches over the same sensor."""
    cfg = load_bundled("kband")
    scene = cfg.scene

    def noiseless_map(f_min, f_max, branch):
        sweep = SweepConfig(
            f_min_hz=f_min,
            f_max_hz=f_max,
            delta_f_hz=5_000_000,
            n_cycles=1,
            exposure_s=0.1,
            edge_bins_m=5,
            probe_power_dBm=cfg.sweep.probe_power_dBm,
        )
        cube = run_sweep(scene, sweep, seed=0, noiseless=True)
        norm = normalize_cube(cube)
        return build_calibration(norm, branch=branch, params=scene.physics)

    m_plus = noiseless_map(19_800_000_000, 24_200_000_000, "plus")
    m_minus = noiseless_map(14_100_000_000, 18_500_000_000, "minus")
    return scene, m_minus, m_plus


# ---------------------------------------------------------------- criteria


def test_01_field_frequency_round_trip(capsys):
    params = NVPhysicsParams()
    t0 = time.perf_counter()
    b = rng_from_seed(11).uniform(1e-4, 0.3, 1_000_000)
    nu_m, nu_p = resonance_frequencies(b, params)

    b_plus = field_for_frequency(nu_p, "plus", params)
    b_minus, alt = field_for_frequency(nu_m, "minus", params, return_alternate=True)
    # below the splitting the inversion is two-valued; the round trip holds
    # when one of the two candidates recovers the field
    alt = np.where(np.isnan(alt), np.inf, alt)
    b_from_minus = np.where(
        np.abs(b_minus - b) <= np.abs(alt - b), b_minus, alt
    )
    elapsed = time.perf_counter() - t0

    err = max(_rel(b_plus, b), _rel(b_from_minus, b))
    crossing_exact = params.crossing_field_T == 0.1025
    ok = err < 1e-9 and crossing_exact and elapsed < 5.0
    _verdict(
        capsys,
        1,
        ok,
        f"1e6-field round trip max rel err {err:.2e} (<1e-9), crossing "
        f"{params.crossing_field_T} T exact: {crossing_exact}, {elapsed:.2f} s (<5)",
    )


def test_02_tuning_envelope(capsys):
    params = NVPhysicsParams()
    b_s = calibrate_surface_field(27.0, 0.5e-3)
    by_hand = (27.0 - 2.87) / 28.0 * ((6.5e-3 + 0.5e-3) / 6.5e-3) ** 3
    magnet = MagnetDipole(surface_pole_field_T=b_s)

    r = np.geomspace(7.0e-3, 1.0, 4001)
    d_star = magnet.distance_for_field(params.crossing_field_T)
    r = np.sort(np.concatenate([r, d_star * np.linspace(0.99, 1.01, 401)]))
    nu_m, nu_p = resonance_frequencies(magnet.on_axis_field_T(r), params)

    lo_m = nu_m[gslac_valid(nu_m, params)].min()
    hi_m = nu_m.max()
    lo_p = nu_p.min()
    hi_p = nu_p.max()
    ok = (
        b_s == by_hand
        and abs(lo_m - 10e6) <= 0.05 * 10e6
        and hi_m >= 0.95 * 21e9
        and abs(lo_p - 2.87e9) <= 0.05 * 2.87e9
        and abs(hi_p - 27e9) <= 0.05 * 27e9
    )
    _verdict(
        capsys,
        2,
        ok,
        f"B_s {b_s:.6f} T; lower branch {lo_m/1e6:.1f} MHz .. {hi_m/1e9:.2f} GHz, "
        f"upper branch {lo_p/1e9:.3f} .. {hi_p/1e9:.2f} GHz (targets 0.01-21 / "
        "2.87-27 GHz, endpoints 5%)",
    )


def test_03_band_span_scaling(capsys):
    params = NVPhysicsParams()

    low = load_bundled("low_band").scene.fieldmap.resonance_maps(params)[0]
    low_valid = low[gslac_valid(low, params)]
    span_low = float(low_valid.max() - low_valid.min())
    center_low = 0.5 * float(low_valid.max() + low_valid.min())

    high = load_bundled("kband").scene.fieldmap.resonance_maps(params)[1]
    span_high = float(high.max() - high.min())
    center_high = 0.5 * float(high.max() + high.min())

    ok_low = 150e6 <= span_low <= 600e6 and 50e6 <= center_low <= 350e6
    ok_high = 2e9 <= span_high <= 8e9 and 20e9 <= center_high <= 24e9

    # instantaneous span must grow strictly as the magnet comes closer
    standoffs_mm = [24.45, 13.3, 7.24, 4.99, 2.94, 2.0, 0.82]
    spans = []
    for s in standoffs_mm:
        geom = SensorGeometry(magnet_center_to_diamond_m=6.5e-3 + s * 1e-3)
        nu_p = field_map(MagnetDipole(), geom, params).resonance_maps(params)[1]
        spans.append(float(nu_p.max() - nu_p.min()))
    monotone = all(b > a for a, b in zip(spans, spans[1:]))

    ok = ok_low and ok_high and monotone
    _verdict(
        capsys,
        3,
        ok,
        f"span {span_low/1e6:.0f} MHz at {center_low/1e6:.0f} MHz center, "
        f"{span_high/1e9:.2f} GHz at {center_high/1e9:.1f} GHz center "
        f"(within factor 2), strictly wider at smaller standoff: {monotone}",
    )


def test_04_resolution_regimes(capsys):
    reports = {}
    for name in ("shallow_gradient", "steep_gradient"):
        cfg = load_bundled(name)
        cube = pipeline.acquire_sweep(cfg)
        norm = pipeline.normalize_scenario_cube(cfg, cube)
        reports[name] = pipeline.aoi_fit_report(cfg, norm)
    shallow, steep = reports["shallow_gradient"], reports["steep_gradient"]
    ok_shallow = 0.8 <= shallow["fwhm_MHz"] <= 1.2 and shallow["hyperfine_resolved"]
    ok_steep = steep["fwhm_MHz"] > 2.0 and not steep["hyperfine_resolved"]

    # noiseless synthetic line: the fitter recovers (hwhm, center, contrast)
    a, b, c = 0.52e6, 2.5975e9, 0.0042
    axis = (b + np.linspace(-20e6, 20e6, 161)).astype(np.int64)
    spec = Spectrum(
        freq_axis_hz=axis,
        values=odmr_response(axis.astype(float), b, 2.0 * a, c),
        sigma=np.full(161, 1e-4),
        n_p=np.full(161, 100, dtype=np.int64),
        valid=np.ones(161, dtype=bool),
        normalization="per-pixel-mean",
    )
    fit = fit_odmr(spec)
    fit_err = max(abs(fit.a_hz - a) / a, abs(fit.b_hz - b) / b, abs(fit.c - c) / c)

    ok = ok_shallow and ok_steep and fit_err < 1e-6
    _verdict(
        capsys,
        4,
        ok,
        f"shallow {shallow['fwhm_MHz']:.2f} MHz resolved="
        f"{shallow['hyperfine_resolved']}, steep {steep['fwhm_MHz']:.2f} MHz "
        f"resolved={steep['hyperfine_resolved']}, noiseless fit rel err "
        f"{fit_err:.1e} (<1e-6)",
    )


def test_05_snr_scaling(capsys, small_scene):
    t0 = time.perf_counter()
    scene = small_scene
    tone = Tone(frequency_hz=1.805e9, nominal_power_dBm=25.0)
    on = expected_counts(scene, [tone], 1.0).ravel()  # counts per second
    off = expected_counts(scene, [], 1.0).ravel()
    dip = off - on
    pool = np.flatnonzero(dip > 0.05 * dip.max())
    rng = rng_from_seed(505)

    # exposure axis, full pixel pool, 1000 frames per point
    lam_on = on[pool].sum()
    lam_off = off[pool].sum()
    dts = np.geomspace(1e-5, 1e-3, 5)
    snr_t = [
        empirical_snr(rng.poisson(lam_on * dt, size=1000), lam_off * dt)
        for dt in dts
    ]
    slope_t = float(np.polyfit(np.log10(dts), np.log10(snr_t), 1)[0])

    # pixel-count axis: per size, average over 40 random subsets so subset
    # contrast variation cancels and only the sqrt(counts) scaling remains
    dt0 = 3e-3
    ns = [3, 10, 30, 100, 300]
    snr_n = []
    for n in ns:
        vals = [
            empirical_snr(
                rng.poisson(on[sub].sum() * dt0, size=500), off[sub].sum() * dt0
            )
            for sub in (rng.permutation(pool)[:n] for _ in range(40))
        ]
        snr_n.append(float(np.mean(vals)))
    slope_n = float(np.polyfit(np.log10(ns), np.log10(snr_n), 1)[0])
    elapsed = time.perf_counter() - t0

    ok = 0.45 <= slope_t <= 0.55 and 0.45 <= slope_n <= 0.55 and elapsed < 120
    _verdict(
        capsys,
        5,
        ok,
        f"SNR slope vs exposure {slope_t:.3f}, vs pixel count {slope_n:.3f} "
        f"(0.5 +- 0.05 over two decades, 105000 frames), {elapsed:.1f} s (<120)",
    )


def test_06_dynamic_range(capsys, dr_bundle):
    cfg, cmap = dr_bundle
    rep = pipeline.dynamic_range_report(cfg, cmap)

    opts = cfg.report["dynamic_range"]
    powers = opts["power_max_dBm"] - opts["power_step_dB"] * np.arange(117)
    lo_short, _, _ = dynamic_range(
        cfg.scene, cmap, opts["tone_frequency_hz"], powers, 0.01
    )
    shift = lo_short - rep["min_detectable_dBm"]

    ok = rep["range_dB"] >= 40.0 and 9.0 <= shift <= 11.0
    _verdict(
        capsys,
        6,
        ok,
        f"dynamic range {rep['range_dB']:.1f} dB at SNR=1 "
        f"({rep['min_detectable_dBm']:.1f}..{rep['max_power_dBm']:.1f} dBm, "
        f">=40), threshold shift for 100x exposure {shift:+.1f} dB (10 +- 1)",
    )


def test_07_temporal_resolution(capsys, temporal_bundle):
    budget = 5.0**2 / (0.06**2 * 2e-3)
    anchor_exact = min_exposure(0.06, budget, 5.0) == 2e-3

    contrasts = np.linspace(0.002, 0.06, 577)
    products = np.array(
        [min_exposure(c, budget, 5.0) for c in contrasts]
    ) * contrasts**2
    constancy = float((products.max() - products.min()) / products.mean())

    cfg, cmap = temporal_bundle
    rep = pipeline.temporal_report(cfg, cmap)
    predicted = rep["predicted_min_exposure_s"]

    ok = (
        anchor_exact
        and constancy < 1e-15
        and abs(predicted - 2e-3) / 2e-3 < 0.2
        and rep["n_trials"] == 100
        and rep["detections"] >= 95
    )
    _verdict(
        capsys,
        7,
        ok,
        f"2 ms anchor bitwise: {anchor_exact}, dt*C^2 spread {constancy:.1e} "
        f"(<1e-15), predicted {predicted*1e3:.2f} ms, detections "
        f"{rep['detections']}/{rep['n_trials']} (>=95)",
    )


def test_08_multitone_scenes(capsys, xband_bundle):
    cfg, cmap = xband_bundle
    scene = cfg.scene
    axis = cmap.freq_axis_hz.astype(float)
    spacing = float(np.median(np.diff(axis)))
    confident = cmap.valid & (cmap.n_p > 0) & ~cmap.low_confidence
    bins = np.flatnonzero(confident)
    bins = bins[(bins >= 3) & (bins <= cmap.n_bins - 4)]
    rate = scene.rate_map.ravel()
    ref_rate = expected_counts(scene, [], 1.0)

    rng = rng_from_seed(808)
    n_true = n_clean = n_false = n_noisy = 0
    for _ in range(100):
        k = int(rng.integers(2, 6))
        chosen = []
        while len(chosen) < k:
            cand = int(rng.choice(bins))
            if all(abs(axis[cand] - axis[c]) >= 35e6 for c in chosen):
                chosen.append(cand)
        tones = [
            Tone(frequency_hz=axis[c], nominal_power_dBm=20.0 + 10.0 * rng.random())
            for c in chosen
        ]
        img_rate = expected_counts(scene, tones, 1.0)

        spec = reconstruct_spectrum(img_rate * 0.1, cmap, "contrast", ref_rate * 0.1)
        found = [t.frequency_hz for t in detect_tones(spec, k_sigma=5.0)]
        for t in tones:
            n_true += 1
            if any(abs(f - t.frequency_hz) <= 2 * spacing for f in found):
                n_clean += 1
        n_false += sum(
            1
            for f in found
            if all(abs(f - t.frequency_hz) > 2 * spacing for t in tones)
        )

        # exposure sized so the weakest tone sits at predicted SNR 5
        dt = max(
            (5.0 / (math.sqrt(rate[cmap.mask_indices(c)].sum())
                    * scene.drive.tone_contrast(t, scene.physics))) ** 2
            for c, t in zip(chosen, tones)
        )
        frame = rng.poisson(img_rate * dt)
        spec = reconstruct_spectrum(frame.astype(float), cmap, "contrast", ref_rate * dt)
        found = [t.frequency_hz for t in detect_tones(spec, k_sigma=3.0)]
        n_noisy += sum(
            1
            for t in tones
            if any(abs(f - t.frequency_hz) <= 2 * spacing for f in found)
        )

    ok = n_clean == n_true and n_false == 0 and n_noisy >= 0.95 * n_true
    _verdict(
        capsys,
        8,
        ok,
        f"100 scenes, {n_true} tones: noiseless {n_clean}/{n_true} found, "
        f"{n_false} false positives; Poisson at SNR 5: {n_noisy}/{n_true} "
        f"({100.0 * n_noisy / n_true:.1f}%, >=95%)",
    )


def test_09_brute_force_equivalence(capsys):
    geom = SensorGeometry(
        magnet_center_to_diamond_m=19.8e-3, active_area_um=(21.12, 6.6)
    )
    scene = Scene(geometry=geom)
    assert scene.shape == (10, 32)
    phys = scene.physics
    sweep = SweepConfig(
        f_min_hz=1_795_000_000,
        f_max_hz=1_805_000_000,
        delta_f_hz=1_000_000,
        n_cycles=3,
        exposure_s=0.02,
        edge_bins_m=2,
        probe_power_dBm=10.0,
    )
    cube = run_sweep(scene, sweep, seed=0, noiseless=True)
    norm = normalize_cube(cube, m=2, edge_dip_sigma=1e9)
    cmap = build_calibration(norm, params=phys)

    # scalar re-derivation: dipole -> resonance -> response -> counts
    pitch = 0.66e-6
    pref = 0.5 * 1.08 * 6.5e-3**3
    d_hz, gamma = phys.d_hz, phys.gamma_hz_per_t
    hyp = phys.hyperfine_hz
    ys = [(i - 4.5) * pitch for i in range(10)]
    xs = [19.8e-3 + j * pitch for j in range(32)]
    b_nv = [
        [
            pref / (x * x + y * y) ** 1.5 * (3.0 * x * x / (x * x + y * y) - 1.0)
            for x in xs
        ]
        for y in ys
    ]
    gauss = [math.exp(-4.0 * math.log(2.0) * ((i - 4.5) * 0.66 / 38.0) ** 2)
             for i in range(10)]
    peak = scene.optics.peak_rate_per_s
    top = max(gauss)

    def trip(f, nu0, hwhm):
        return sum(
            hwhm**2 / (hwhm**2 + (f - (nu0 + off)) ** 2)
            for off in (0.0, -hyp, hyp)
        )

    expected = np.empty((10, 10, 32))
    for k in range(10):
        f_k = 1.795e9 + k * 1e6
        delivered = scene.drive.delivered_dBm(f_k, 10.0)
        c = contrast_model(delivered, phys, scene.drive.reference_power_dBm)
        for i in range(10):
            for j in range(32):
                if j == 0:
                    db = abs(b_nv[i][1] - b_nv[i][0])
                elif j == 31:
                    db = abs(b_nv[i][31] - b_nv[i][30])
                else:
                    db = abs(b_nv[i][j + 1] - b_nv[i][j - 1]) / 2.0
                grad_mhz_um = db * 28.0 * 1e3 / 0.66
                hwhm = 0.5 * linewidth_model(delivered, grad_mhz_um, 0.66, phys)
                supp = 1.0
                for nu in (
                    abs(d_hz - gamma * b_nv[i][j]),
                    abs(d_hz + gamma * b_nv[i][j]),
                ):
                    c_eff = c if nu >= phys.gslac_floor_hz else 0.0
                    supp *= 1.0 - c_eff * trip(f_k, nu, hwhm)
                rate = peak * (gauss[i] / top)
                expected[k, i, j] = rate * 0.02 * supp * 3.0
    err_cube = _rel(cube.data, expected)

    edge_mean = np.empty((10, 32))
    norm_loop = np.empty_like(expected)
    for i in range(10):
        for j in range(32):
            edge_mean[i, j] = (
                cube.data[0, i, j] + cube.data[1, i, j]
                + cube.data[8, i, j] + cube.data[9, i, j]
            ) / 4.0
            for k in range(10):
                norm_loop[k, i, j] = cube.data[k, i, j] / edge_mean[i, j]
    err_norm = _rel(norm.data, norm_loop)

    pixel_bin = np.empty((10, 32), dtype=int)
    for i in range(10):
        for j in range(32):
            best = 0
            for k in range(1, 10):
                if 1.0 - norm.data[k, i, j] > 1.0 - norm.data[best, i, j]:
                    best = k
            deep_enough = (
                1.0 - norm.data[best, i, j]
                > 5.0 / math.sqrt(edge_mean[i, j])
            )
            pixel_bin[i, j] = best if deep_enough else -1
    cal_match = bool(np.array_equal(cmap.pixel_bin, pixel_bin))

    img, ref = cube.data[5], cube.data[0]
    spec = reconstruct_spectrum(img, cmap, "contrast", ref)
    errs = []
    for k in range(10):
        mask = pixel_bin == k
        if cmap.valid[k] and mask.any():
            s, r = img[mask].sum(), ref[mask].sum()
            errs.append(abs(spec.values[k] - (1.0 - s / r)) / abs(1.0 - s / r))
        else:
            errs.append(0.0 if np.isnan(spec.values[k]) else np.inf)
    err_rec = max(errs)

    region = (2, 8, 4, 20)
    spec2 = sweep_spectrum(norm, region=region)
    means = [
        np.mean([norm.data[k, i, j] for i in range(2, 8) for j in range(4, 20)])
        for k in range(10)
    ]
    err_region = _rel(spec2.values, means)

    worst = max(err_cube, err_norm, err_rec, err_region)
    ok = worst < 1e-12 and cal_match
    _verdict(
        capsys,
        9,
        ok,
        f"10x10x32 scalar-loop re-derivation: cube {err_cube:.1e}, normalize "
        f"{err_norm:.1e}, spectra {max(err_rec, err_region):.1e} (all <1e-12), "
        f"pixel assignment identical: {cal_match}",
    )


def test_10_band_uniqueness(capsys, kband_maps):
    scene, m_minus, m_plus = kband_maps
    phys = scene.physics

    amb_exact = ambiguity_sets(m_minus, m_plus, fieldmap=scene.fieldmap, params=phys)
    both = bool(np.all(amb_exact.counts == 2))
    split = amb_exact.freqs[1] - amb_exact.freqs[0]
    split_dev = float(np.max(np.abs(split - 2.0 * phys.d_hz)))

    amb = ambiguity_sets(m_minus, m_plus)
    req = band_filter((20.0e9, 24.0e9), amb, params=phys)
    accepted = req.n_pixels_in_band > 0
    rejected = 0
    for window in ((15.0e9, 21.0e9), (14.5e9, 20.5e9)):
        try:
            band_filter(window, amb, params=phys)
        except AmbiguityError:
            rejected += 1
    ok = both and split_dev < 1e-2 and accepted and rejected == 2
    _verdict(
        capsys,
        10,
        ok,
        f"branch split 5.74 GHz exact (max dev {split_dev:.1e} Hz), 4 GHz "
        f"single-branch window accepted ({req.n_pixels_in_band} px), "
        f"{rejected}/2 dual-branch windows rejected",
    )
