"""Spectrum analysis: triple-Lorentzian least squares, tone detection,
spectrograms, and the headline performance metrics (dynamic range, minimum
exposure).

The fit model is the acquisition lineshape itself,

    f(nu) = 1 - c * [L(nu-b) + L(nu-b+hyp) + L(nu-b-hyp)],
    L(x) = a^2/(a^2+x^2),

with FWHM = 2a and contrast = c. The solver is a damped Gauss-Newton
(Levenberg-style) iteration with the analytic Jacobian; no generic
optimizer dependency, so convergence behavior is fully pinned down by this
module and its tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CalibrationMap, Spectrum, reconstruct_spectrum
from .camera import Scene, expected_counts
from .errors import (
    ConfigError,
    DataError,
    DomainError,
    FitConvergenceError,
    NoPeakError,
)
from .nv import NVPhysicsParams, Tone


@dataclass(frozen=True)
class FitResult:
    """Fitted lineshape parameters with 95% confidence half-widths."""

    a_hz: float
    b_hz: float
    c: float
    ci95_a_hz: float
    ci95_b_hz: float
    ci95_c: float
    residual_rms: float
    n_iter: int

    def __post_init__(self):
        if self.a_hz <= 0:
            raise DomainError("a_hz must be > 0")
        if not 0.0 <= self.c <= 1.0 / 3.0:
            raise DomainError("c must lie in [0, 1/3]")

    @property
    def fwhm_hz(self) -> float:
        return 2.0 * self.a_hz


def _model_and_jacobian(nu, a, b, c, hyp):
    """f(nu) plus its partial derivatives w.r.t. (a, b, c)."""
    t_sum = np.zeros_like(nu)
    dt_da = np.zeros_like(nu)
    dt_db = np.zeros_like(nu)
    a2 = a * a
    for off in (0.0, -hyp, hyp):
        d = nu - b + off
        denom = a2 + d * d
        t_sum += a2 / denom
        dt_da += 2.0 * a * (d * d) / (denom * denom)
        dt_db += 2.0 * a2 * d / (denom * denom)
    f = 1.0 - c * t_sum
    jac = np.column_stack((-c * dt_da, -c * dt_db, -t_sum))
    return f, jac


def _center_factor(a, hyp):
    """Model depth at line center per unit contrast: 1 + 2a^2/(a^2+hyp^2)."""
    return 1.0 + 2.0 * a * a / (a * a + hyp * hyp)


def _pl_values(spectrum: Spectrum):
    """Spectrum values as normalized PL (about 1, dipping at resonance)."""
    if spectrum.normalization == "contrast":
        return 1.0 - spectrum.values
    if spectrum.normalization == "per-pixel-mean":
        return spectrum.values
    raise DataError(
        "fitting/detection needs a contrast or normalized-PL spectrum, "
        "not raw sums"
    )


def fit_odmr(
    spectrum: Spectrum,
    init: FitResult = None,
    params: NVPhysicsParams = NVPhysicsParams(),
    max_iter: int = 200,
    rel_tol: float = 1e-8,
) -> FitResult:
    """Least-squares fit of the triple-Lorentzian to one spectrum.

    Initial guess (unless ``init`` is given): center at the deepest bin,
    half-width from the dip's width at half depth, contrast from the dip
    depth divided by the model's line-center factor. Iterations stop when
    every parameter's relative change drops below ``rel_tol``; hitting
    ``max_iter`` raises with the last iterate attached.
    """
    sel = np.asarray(spectrum.valid, dtype=bool) & np.isfinite(
        np.asarray(spectrum.values, dtype=float)
    )
    nu = spectrum.freq_axis_hz[sel].astype(float)
    y = _pl_values(spectrum)[sel].astype(float)
    sig = np.asarray(spectrum.sigma, dtype=float)[sel]
    if nu.size < 10:
        raise DataError(f"fit needs at least 10 usable bins, got {nu.size}")
    hyp = params.hyperfine_hz

    depth = 1.0 - y.min()
    i_min = int(np.argmin(y))
    sigma_at_min = sig[i_min] if np.isfinite(sig[i_min]) else 0.0
    if depth <= max(3.0 * sigma_at_min, 0.0):
        raise NoPeakError(
            f"no dip above 3 sigma (depth {depth:.3e}, sigma {sigma_at_min:.3e})"
        )

    spacing = float(np.median(np.diff(nu)))
    if init is not None:
        a, b, c = init.a_hz, init.b_hz, init.c
    else:
        b = float(nu[i_min])
        lo = i_min
        while lo > 0 and y[lo - 1] <= 1.0 - depth / 2.0:
            lo -= 1
        hi = i_min
        while hi < y.size - 1 and y[hi + 1] <= 1.0 - depth / 2.0:
            hi += 1
        a = max((hi - lo + 1) * spacing / 2.0, spacing / 2.0)
        c = min(max(depth / _center_factor(a, hyp), 1e-9), 1.0 / 3.0 - 1e-9)
    if (nu[-1] - nu[0]) < 4.0 * a:
        raise DataError(
            f"spectrum spans {nu[-1] - nu[0]:.3e} Hz, need at least twice "
            f"the initial FWHM guess {2 * a:.3e} Hz"
        )

    use_weights = np.all(np.isfinite(sig)) and np.all(sig > 0)
    w = 1.0 / sig if use_weights else np.ones_like(y)

    def objective(a_, b_, c_):
        f, jac = _model_and_jacobian(nu, a_, b_, c_, hyp)
        r = (y - f) * w
        return r, jac * w[:, None], float(r @ r)

    r, jac, ssr = objective(a, b, c)
    lam = 1e-3
    n_iter = 0
    converged = False
    scale = (max(a, spacing), max(abs(b), spacing), max(c, 1e-6))
    for n_iter in range(1, max_iter + 1):
        jtj = jac.T @ jac
        g = jac.T @ r
        accepted = False
        for _ in range(40):
            damped = jtj + lam * np.diag(np.clip(np.diag(jtj), 1e-300, None))
            try:
                delta = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            a_t, b_t, c_t = a + delta[0], b + delta[1], c + delta[2]
            tries = 0
            while (a_t <= 0 or c_t < 0 or c_t > 1.0 / 3.0) and tries < 30:
                delta = delta / 2.0
                a_t, b_t, c_t = a + delta[0], b + delta[1], c + delta[2]
                tries += 1
            if a_t <= 0 or c_t < 0 or c_t > 1.0 / 3.0:
                lam *= 10.0
                continue
            r_t, jac_t, ssr_t = objective(a_t, b_t, c_t)
            if ssr_t <= ssr:
                rel = max(
                    abs(delta[0]) / scale[0],
                    abs(delta[1]) / scale[1],
                    abs(delta[2]) / scale[2],
                )
                a, b, c = a_t, b_t, c_t
                r, jac, ssr = r_t, jac_t, ssr_t
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if rel < rel_tol:
                    converged = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if converged:
            break
        if not accepted:
            # Damping exhausted without progress: already at a minimum.
            converged = True
            break
        scale = (max(a, spacing), max(abs(b), spacing), max(c, 1e-6))
    if not converged:
        raise FitConvergenceError(
            f"no convergence after {n_iter} iterations",
            last_params=(a, b, c),
            n_iter=n_iter,
        )

    f_fit, _ = _model_and_jacobian(nu, a, b, c, hyp)
    residual_rms = float(np.sqrt(np.mean((y - f_fit) ** 2)))
    dof = max(nu.size - 3, 1)
    s2 = ssr / dof
    try:
        cov = np.linalg.inv(jac.T @ jac) * s2
        ci = 1.96 * np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        ci = np.full(3, np.nan)
    return FitResult(
        a_hz=float(a),
        b_hz=float(b),
        c=float(c),
        ci95_a_hz=float(ci[0]),
        ci95_b_hz=float(ci[1]),
        ci95_c=float(ci[2]),
        residual_rms=residual_rms,
        n_iter=n_iter,
    )


def hyperfine_resolved(
    fit: FitResult,
    params: NVPhysicsParams = NVPhysicsParams(),
    n_grid: int = 4001,
) -> bool:
    """Whether the fitted curve shows the three hyperfine minima.

    Evaluates the fitted model on a fine grid spanning the triplet and
    counts strict local minima: three means resolved, one means the lines
    have merged into a single dip.
    """
    hyp = params.hyperfine_hz
    nu = np.linspace(fit.b_hz - 2.2 * hyp, fit.b_hz + 2.2 * hyp, n_grid)
    f, _ = _model_and_jacobian(nu, fit.a_hz, fit.b_hz, fit.c, hyp)
    interior = (f[1:-1] < f[:-2]) & (f[1:-1] < f[2:])
    return int(np.count_nonzero(interior)) >= 3


@dataclass(frozen=True)
class ToneEstimate:
    frequency_hz: float
    contrast: float
    snr: float
    first_seen_s: float = None
    last_seen_s: float = None


def detect_tones(spectrum: Spectrum, k_sigma: float = 5.0):
    """Threshold detection: bins whose contrast exceeds ``k_sigma`` times
    their sigma, merged by 1-bin contiguity (any gap splits tones). Tone
    frequency is the contrast-weighted centroid of the merged bins."""
    if spectrum.normalization == "contrast":
        c = np.asarray(spectrum.values, dtype=float)
    else:
        c = 1.0 - _pl_values(spectrum)
    sig = np.asarray(spectrum.sigma, dtype=float)
    valid = np.asarray(spectrum.valid, dtype=bool) & np.isfinite(c)
    with np.errstate(invalid="ignore"):
        hit = valid & (c > k_sigma * sig)
    tones = []
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return tones
    breaks = np.flatnonzero(np.diff(idx) > 1)
    groups = np.split(idx, breaks + 1)
    freqs = spectrum.freq_axis_hz.astype(float)
    for g in groups:
        cg = c[g]
        centroid = float((freqs[g] * cg).sum() / cg.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            snrs = np.where(sig[g] > 0, cg / sig[g], np.inf)
        tones.append(
            ToneEstimate(
                frequency_hz=centroid,
                contrast=float(cg.max()),
                snr=float(np.max(snrs)),
            )
        )
    return tones


@dataclass(frozen=True)
class Spectrogram:
    """Time x frequency contrast matrix; one row per frame, one column per
    valid calibration bin."""

    freq_axis_hz: np.ndarray
    time_axis_s: np.ndarray
    values: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.time_axis_s), len(self.freq_axis_hz)):
            raise DataError("spectrogram shape must be (n_times, n_freqs)")

    def row_spectrum(self, row: int) -> Spectrum:
        """One row repackaged for detect_tones."""
        n = len(self.freq_axis_hz)
        sigma = self.sigma[row] if self.sigma is not None else np.zeros(n)
        return Spectrum(
            freq_axis_hz=self.freq_axis_hz,
            values=self.values[row],
            sigma=sigma,
            n_p=np.zeros(n, dtype=np.int64),
            valid=np.ones(n, dtype=bool),
            normalization="contrast",
        )


def spectrogram(frames, cmap: CalibrationMap, reference) -> Spectrogram:
    """Stack per-frame contrast spectra. Frames must share geometry and
    exposure; each row is computed independently (no temporal smoothing), so
    permuting frames permutes rows."""
    frames = list(frames)
    if not frames:
        raise DataError("no frames given")
    exp0 = frames[0].exposure_s
    for fr in frames:
        if fr.shape != cmap.image_shape:
            raise DataError(
                f"frame shape {fr.shape} does not match map {cmap.image_shape}"
            )
        if abs(fr.exposure_s - exp0) > 1e-12 * max(exp0, 1.0):
            raise DataError("frames must share one exposure")
    cols = None
    rows = []
    sigmas = []
    for fr in frames:
        spec = reconstruct_spectrum(fr, cmap, "contrast", reference)
        if cols is None:
            cols = np.flatnonzero(spec.valid)
            if cols.size == 0:
                raise DataError("calibration map has no valid bins")
        rows.append(spec.values[cols])
        sigmas.append(spec.sigma[cols])
    return Spectrogram(
        freq_axis_hz=cmap.freq_axis_hz[cols],
        time_axis_s=np.array([fr.timestamp_s for fr in frames], dtype=float),
        values=np.vstack(rows),
        sigma=np.vstack(sigmas),
    )


def tones_over_time(sg: Spectrogram, k_sigma: float = 5.0, max_jump_hz: float = None):
    """Detect tones per row and annotate each with first/last seen times.

    Tones in consecutive rows merge into one track when their centroids lie
    within ``max_jump_hz`` (default: two bin spacings; raise it to follow a
    chirp whose per-frame slew exceeds that). Tracking is bookkeeping only,
    no smoothing.
    """
    spacing = (
        float(np.median(np.diff(sg.freq_axis_hz)))
        if len(sg.freq_axis_hz) > 1
        else 1.0
    )
    if max_jump_hz is None:
        max_jump_hz = 2.0 * spacing
    elif max_jump_hz <= 0:
        raise ConfigError("max_jump_hz must be > 0")
    tracks = []
    for row in range(len(sg.time_axis_s)):
        t = float(sg.time_axis_s[row])
        for tone in detect_tones(sg.row_spectrum(row), k_sigma):
            for tr in tracks:
                if (
                    tr["last_row"] == row - 1
                    and abs(tr["freq"] - tone.frequency_hz) <= max_jump_hz
                ):
                    tr.update(
                        freq=tone.frequency_hz,
                        last_row=row,
                        last_s=t,
                        contrast=max(tr["contrast"], tone.contrast),
                        snr=max(tr["snr"], tone.snr),
                    )
                    break
            else:
                tracks.append(
                    dict(
                        freq=tone.frequency_hz,
                        contrast=tone.contrast,
                        snr=tone.snr,
                        first_s=t,
                        last_s=t,
                        last_row=row,
                    )
                )
    return [
        ToneEstimate(
            frequency_hz=tr["freq"],
            contrast=tr["contrast"],
            snr=tr["snr"],
            first_seen_s=tr["first_s"],
            last_seen_s=tr["last_s"],
        )
        for tr in tracks
    ]


def dynamic_range(
    scene: Scene,
    cmap: CalibrationMap,
    tone_frequency_hz: float,
    power_sweep_dBm,
    exposure_s: float,
    snr_threshold: float = 1.0,
):
    """(min detectable power, max power, range in dB) for one tone.

    Uses noiseless expected frames with the analytic shot-noise sigma, so
    the threshold crossing is deterministic. Detection at a power means
    detect_tones at ``k_sigma = snr_threshold`` finds a tone within two bin
    spacings of the target frequency.
    """
    powers = np.asarray(power_sweep_dBm, dtype=float)
    if powers.size < 2:
        raise ConfigError("power sweep needs at least two points")
    diffs = np.diff(powers)
    if not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ConfigError("power sweep must be strictly monotone")
    powers = np.sort(powers)[::-1]
    reference = expected_counts(scene, [], exposure_s)
    spacing = float(np.median(np.diff(cmap.freq_axis_hz)))

    def detected(power: float) -> bool:
        tone = Tone(frequency_hz=tone_frequency_hz, nominal_power_dBm=power)
        img = expected_counts(scene, [tone], exposure_s)
        spec = reconstruct_spectrum(img, cmap, "contrast", reference)
        found = detect_tones(spec, k_sigma=snr_threshold)
        return any(
            abs(t.frequency_hz - tone_frequency_hz) <= 2.0 * spacing for t in found
        )

    if not detected(float(powers[0])):
        raise NoPeakError(
            f"tone not detected even at maximum power {powers[0]:.1f} dBm"
        )
    min_detectable = float(powers[0])
    for p in powers[1:]:
        if detected(float(p)):
            min_detectable = float(p)
        else:
            break
    max_dbm = float(powers[0])
    return min_detectable, max_dbm, max_dbm - min_detectable


def min_exposure(
    contrast: float,
    photon_budget_per_s: float,
    target_snr: float = 5.0,
) -> float:
    """Exposure needed to reach ``target_snr``: dt = SNR^2 / (budget * C^2),
    the inverse of the shot-noise SNR formula."""
    if contrast <= 0:
        raise DomainError("contrast must be > 0")
    if photon_budget_per_s <= 0:
        raise DomainError("photon budget must be > 0")
    if target_snr <= 0:
        raise DomainError("target_snr must be > 0")
    return target_snr**2 / (photon_budget_per_s * contrast**2)


def empirical_snr(signal_sums, reference_sum: float) -> float:
    """SNR of a repeated contrast measurement: mean/std of per-frame
    contrast 1 - sum/reference over a stack of frames."""
    s = np.asarray(signal_sums, dtype=float)
    if s.size < 2:
        raise DataError("need at least 2 frames")
    c = 1.0 - s / float(reference_sum)
    sd = float(np.std(c, ddof=1))
    if sd == 0:
        raise DataError("zero variance across frames")
    return float(np.mean(c)) / sd
