"""Pixel-to-frequency calibration and spectrum reconstruction.

A normalized sweep cube assigns each pixel to the frequency bin where its
contrast peaks; the resulting per-bin pixel sets are the masks M(x, y, nu).
A single camera image I then reconstructs a spectrum as
S(nu) = sum_xy I(x,y) * M(x,y,nu), which is how one exposure reads out the
whole band at once. Ambiguity bookkeeping (two branches, off-axis families)
decides when a requested band maps one-to-one onto pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import DataCube
from .camera import Frame
from .errors import (
    AmbiguityError,
    CalibrationError,
    ConfigError,
    DataError,
    DomainError,
)
from .field import FieldMap
from .nv import NVPhysicsParams, gslac_valid, resonance_frequencies, OFFAXIS_PROJECTION

NORMALIZATIONS = ("raw-sum", "per-pixel-mean", "contrast")


@dataclass(frozen=True)
class CalibrationMap:
    """One-to-one pixel->frequency encoding for one resonance branch.

    ``pixel_bin`` holds the bin index per pixel, -1 where unassigned. Masks
    are index lists derived from it on demand. ``valid`` marks bins that are
    in-image (n_p > 0) and above the level-anti-crossing floor.
    """

    freq_axis_hz: np.ndarray
    pixel_bin: np.ndarray
    n_p: np.ndarray
    branch: str
    valid: np.ndarray
    low_confidence: np.ndarray
    threshold_sigma: float

    def __post_init__(self):
        f = np.asarray(self.freq_axis_hz, dtype=np.int64)
        pb = np.asarray(self.pixel_bin, dtype=np.int32)
        n_p = np.asarray(self.n_p, dtype=np.int64)
        if pb.ndim != 2:
            raise DataError("pixel_bin must be 2-D")
        if not (len(f) == len(n_p) == len(self.valid) == len(self.low_confidence)):
            raise DataError("per-bin arrays must share the frequency axis length")
        if self.branch not in ("minus", "plus"):
            raise ConfigError("branch must be 'minus' or 'plus'")
        for name, arr in (("freq_axis_hz", f), ("pixel_bin", pb), ("n_p", n_p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("valid", "low_confidence"):
            arr = np.asarray(getattr(self, name), dtype=bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_bins(self) -> int:
        return len(self.freq_axis_hz)

    @property
    def image_shape(self):
        return self.pixel_bin.shape

    @property
    def assigned_fraction(self) -> float:
        return float(np.count_nonzero(self.pixel_bin >= 0) / self.pixel_bin.size)

    def mask_indices(self, bin_index: int) -> np.ndarray:
        """Flat pixel indices of one bin's mask."""
        return np.flatnonzero(self.pixel_bin.ravel() == bin_index)

    def masks(self):
        """All masks as a list of flat-index arrays (length n_bins)."""
        order = np.argsort(self.pixel_bin.ravel(), kind="stable")
        flat = self.pixel_bin.ravel()[order]
        start = np.searchsorted(flat, np.arange(self.n_bins), side="left")
        stop = np.searchsorted(flat, np.arange(self.n_bins), side="right")
        return [order[a:b] for a, b in zip(start, stop)]


def build_calibration(
    norm_cube: DataCube,
    threshold_sigma: float = 5.0,
    branch: str = "minus",
    min_assigned_fraction: float = 0.05,
    min_np: int = 3,
    max_fwhm_bins: float = None,
    params: NVPhysicsParams = NVPhysicsParams(),
) -> CalibrationMap:
    """Assign each pixel to its maximum-contrast bin.

    The maximum must exceed ``threshold_sigma`` times the pixel's shot-noise
    sigma (1/sqrt of its accumulated edge counts); ties break toward the
    lower frequency bin. Raises when fewer than ``min_assigned_fraction`` of
    pixels qualify. ``max_fwhm_bins``, when given, rejects cubes whose
    brightest line spans more than that many bins at half depth (probe too
    strong or step too fine for a one-to-one map).
    """
    if not norm_cube.normalized:
        raise DataError("calibration requires a normalized cube")
    contrast = 1.0 - norm_cube.data
    n, ny, nx = contrast.shape
    flat = contrast.reshape(n, ny * nx)
    idx = np.argmax(flat, axis=0)  # first max wins: lower-bin tie break
    cmax = flat[idx, np.arange(flat.shape[1])]
    if norm_cube.edge_mean is not None:
        sigma_px = 1.0 / np.sqrt(norm_cube.edge_mean.ravel())
    else:
        sigma_px = np.zeros(ny * nx)
    assigned = cmax > threshold_sigma * sigma_px

    if max_fwhm_bins is not None and np.any(assigned):
        p = int(np.argmax(np.where(assigned, cmax, -np.inf)))
        trace = flat[:, p]
        above = trace >= cmax[p] / 2.0
        k = idx[p]
        lo = k
        while lo > 0 and above[lo - 1]:
            lo -= 1
        hi = k
        while hi < n - 1 and above[hi + 1]:
            hi += 1
        if (hi - lo + 1) > max_fwhm_bins:
            raise CalibrationError(
                f"line spans {hi - lo + 1} bins at half depth, "
                f"exceeding the configured {max_fwhm_bins}"
            )

    fraction = float(np.count_nonzero(assigned)) / assigned.size
    if fraction < min_assigned_fraction:
        raise CalibrationError(
            f"only {fraction:.1%} of pixels assigned "
            f"(minimum {min_assigned_fraction:.1%})"
        )
    pixel_bin = np.where(assigned, idx, -1).astype(np.int32).reshape(ny, nx)
    n_p = np.bincount(idx[assigned], minlength=n).astype(np.int64)
    freqs = norm_cube.freq_axis_hz
    valid = gslac_valid(freqs.astype(float), params) & (n_p > 0)
    low_confidence = (n_p > 0) & (n_p < min_np)
    return CalibrationMap(
        freq_axis_hz=freqs,
        pixel_bin=pixel_bin,
        n_p=n_p,
        branch=branch,
        valid=valid,
        low_confidence=low_confidence,
        threshold_sigma=threshold_sigma,
    )


@dataclass(frozen=True)
class Spectrum:
    freq_axis_hz: np.ndarray
    values: np.ndarray
    sigma: np.ndarray
    n_p: np.ndarray
    valid: np.ndarray
    normalization: str

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
        n = len(self.freq_axis_hz)
        for name in ("values", "sigma", "n_p", "valid"):
            arr = np.asarray(getattr(self, name))
            if len(arr) != n:
                raise DataError(f"Spectrum.{name} length must match the axis")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        f = np.asarray(self.freq_axis_hz, dtype=np.int64)
        f.setflags(write=False)
        object.__setattr__(self, "freq_axis_hz", f)

    @property
    def n_bins(self) -> int:
        return len(self.freq_axis_hz)


def _image_array(image) -> np.ndarray:
    if isinstance(image, Frame):
        return np.asarray(image.counts, dtype=float)
    return np.asarray(image, dtype=float)


def reconstruct_spectrum(
    image,
    cmap: CalibrationMap,
    normalization: str = "contrast",
    reference=None,
) -> Spectrum:
    """S(nu) = sum over pixels of I * M, in one of three normalizations.

    raw-sum: the plain masked sum. per-pixel-mean: divided by n_p.
    contrast: 1 - (masked sum / masked sum of a no-signal reference image),
    which is the mode spectra and spectrograms use. Bins with no pixels (or
    an empty reference) are flagged invalid and carry NaN, never silent 0.
    """
    if normalization not in NORMALIZATIONS:
        raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")
    img = _image_array(image)
    if img.shape != cmap.image_shape:
        raise DataError(
            f"image shape {img.shape} does not match map {cmap.image_shape}"
        )
    n = cmap.n_bins
    flat_bin = cmap.pixel_bin.ravel()
    sel = flat_bin >= 0
    sums = np.bincount(flat_bin[sel], weights=img.ravel()[sel], minlength=n)
    n_p = cmap.n_p
    empty = n_p == 0
    valid = cmap.valid & ~empty

    with np.errstate(divide="ignore", invalid="ignore"):
        if normalization == "raw-sum":
            values = sums.copy()
            sigma = np.sqrt(np.maximum(sums, 0.0))
        elif normalization == "per-pixel-mean":
            values = sums / n_p
            sigma = np.sqrt(np.maximum(sums, 0.0)) / n_p
        else:
            if reference is None:
                raise DataError("contrast normalization requires a reference image")
            ref = _image_array(reference)
            if ref.shape != cmap.image_shape:
                raise DataError(
                    f"reference shape {ref.shape} does not match map "
                    f"{cmap.image_shape}"
                )
            rsums = np.bincount(
                flat_bin[sel], weights=ref.ravel()[sel], minlength=n
            )
            bad_ref = rsums <= 0
            valid = valid & ~bad_ref
            values = 1.0 - sums / rsums
            sigma = np.sqrt(np.maximum(sums, 0.0)) / rsums
    values = np.where(valid, values, np.nan)
    sigma = np.where(valid, sigma, np.nan)
    return Spectrum(
        freq_axis_hz=cmap.freq_axis_hz,
        values=values,
        sigma=sigma,
        n_p=n_p,
        valid=valid,
        normalization=normalization,
    )


def sweep_spectrum(norm_cube: DataCube, region=None) -> Spectrum:
    """Region-averaged ODMR spectrum straight from a normalized cube.

    ``region`` is (row_lo, row_hi, col_lo, col_hi), half-open, defaulting to
    the full image. Values are normalized PL (about 1 off resonance); sigma
    is the shot-noise estimate of the regional mean.
    """
    if not norm_cube.normalized:
        raise DataError("sweep_spectrum requires a normalized cube")
    ny, nx = norm_cube.image_shape
    if region is None:
        region = (0, ny, 0, nx)
    r0, r1, c0, c1 = region
    if not (0 <= r0 < r1 <= ny and 0 <= c0 < c1 <= nx):
        raise DataError(f"region {region} outside image {(ny, nx)}")
    block = norm_cube.data[:, r0:r1, c0:c1]
    n_px = block.shape[1] * block.shape[2]
    values = block.reshape(block.shape[0], n_px).mean(axis=1)
    if norm_cube.edge_mean is not None:
        em = norm_cube.edge_mean[r0:r1, c0:c1].ravel()
        sigma_val = float(np.sqrt(np.sum(1.0 / em)) / n_px)
    else:
        sigma_val = 0.0
    n = norm_cube.n_seq
    return Spectrum(
        freq_axis_hz=norm_cube.freq_axis_hz,
        values=values,
        sigma=np.full(n, sigma_val),
        n_p=np.full(n, n_px, dtype=np.int64),
        valid=np.ones(n, dtype=bool),
        normalization="per-pixel-mean",
    )


@dataclass(frozen=True)
class AmbiguitySets:
    """Per-pixel candidate frequencies: every line that would darken the
    pixel. ``freqs`` is [n_lines, h, w] with NaN where a line is absent;
    ``counts`` is the per-pixel number of distinct candidates."""

    labels: tuple
    freqs: np.ndarray
    counts: np.ndarray

    def in_window_counts(self, lo_hz: float, hi_hz: float) -> np.ndarray:
        inside = (self.freqs >= lo_hz) & (self.freqs <= hi_hz)
        return inside.sum(axis=0)


def ambiguity_sets(
    map_minus: CalibrationMap,
    map_plus: CalibrationMap,
    offaxis_enabled: bool = False,
    fieldmap: FieldMap = None,
    params: NVPhysicsParams = NVPhysicsParams(),
) -> AmbiguitySets:
    """Candidate frequencies per pixel across both branches.

    With a field map the candidates are the exact per-pixel resonance
    frequencies (both branches, plus the off-axis family lines at 1/3 field
    projection when enabled). Without one they fall back to the assigned
    bin centers of the two calibration maps, quantized to the sweep grids.
    Candidates within 1 Hz of each other merge (zero-field degeneracy).
    """
    shape = map_minus.image_shape
    if map_plus.image_shape != shape:
        raise DataError("calibration maps must share geometry")
    layers = []
    labels = []
    if fieldmap is not None:
        if fieldmap.shape != shape:
            raise DataError("field map geometry does not match the calibration maps")
        nu_m, nu_p = fieldmap.resonance_maps(params)
        layers += [nu_m.astype(float), nu_p.astype(float)]
        labels += ["minus", "plus"]
        if offaxis_enabled:
            nu_m3, nu_p3 = resonance_frequencies(
                fieldmap.b_nv_T * OFFAXIS_PROJECTION, params
            )
            layers += [nu_m3.astype(float), nu_p3.astype(float)]
            labels += ["offaxis-minus", "offaxis-plus"]
    else:
        for cm, label in ((map_minus, "minus"), (map_plus, "plus")):
            freqs = np.full(shape, np.nan)
            sel = cm.pixel_bin >= 0
            freqs[sel] = cm.freq_axis_hz[cm.pixel_bin[sel]].astype(float)
            layers.append(freqs)
            labels.append(label)
        if offaxis_enabled:
            raise DataError(
                "off-axis candidates require a field map (no bins encode them)"
            )
    freqs = np.stack(layers)
    # Below the level-anti-crossing floor a line carries no information.
    freqs = np.where(freqs >= params.gslac_floor_hz, freqs, np.nan)
    # Merge near-identical candidates (e.g. zero field: nu- == nu+).
    for i in range(len(layers)):
        for j in range(i + 1, len(layers)):
            dup = np.abs(freqs[j] - freqs[i]) < 1.0
            freqs[j][dup & np.isfinite(freqs[i])] = np.nan
    counts = np.isfinite(freqs).sum(axis=0)
    return AmbiguitySets(labels=tuple(labels), freqs=freqs, counts=counts)


@dataclass(frozen=True)
class BandRequest:
    """A validated spectral window: guaranteed one-to-one on these maps."""

    requested_hz: tuple
    physical_hz: tuple
    heterodyne_offset_hz: float
    n_pixels_in_band: int


def band_filter(
    window_hz,
    ambiguity: AmbiguitySets,
    heterodyne_offset_hz: float = 0.0,
    params: NVPhysicsParams = NVPhysicsParams(),
) -> BandRequest:
    """Accept a requested window only if every pixel has at most one
    candidate line inside it.

    A heterodyne offset shifts the request down to physical frequencies
    first. Any pixel with two or more in-window candidates (both branches
    visible, or an off-axis collision) raises an ambiguity error listing the
    colliding frequencies. Note 2D = the maximum unambiguous dual-branch
    span: windows wider than that straddling both branches always fail.
    """
    f_lo, f_hi = window_hz
    if f_hi <= f_lo:
        raise DomainError("window must have f_hi > f_lo")
    phys_lo = f_lo - heterodyne_offset_hz
    phys_hi = f_hi - heterodyne_offset_hz
    if phys_lo < 0:
        raise DomainError("physical window extends below 0 Hz")
    counts = ambiguity.in_window_counts(phys_lo, phys_hi)
    if np.any(counts >= 2):
        bad = counts >= 2
        colliding = ambiguity.freqs[:, bad]
        pairs = set()
        for col in range(min(colliding.shape[1], 1000)):
            vals = colliding[:, col]
            pair = tuple(
                sorted(round(float(v)) for v in vals
                       if np.isfinite(v) and phys_lo <= v <= phys_hi)
            )
            pairs.add(pair)
            if len(pairs) >= 20:
                break
        raise AmbiguityError(
            f"{int(bad.sum())} pixels have multiple resonances inside "
            f"[{phys_lo:.3e}, {phys_hi:.3e}] Hz",
            colliding_bins=sorted(pairs),
        )
    inside = np.isfinite(ambiguity.freqs) & (
        (ambiguity.freqs >= phys_lo) & (ambiguity.freqs <= phys_hi)
    )
    return BandRequest(
        requested_hz=(float(f_lo), float(f_hi)),
        physical_hz=(float(phys_lo), float(phys_hi)),
        heterodyne_offset_hz=float(heterodyne_offset_hz),
        n_pixels_in_band=int(inside.any(axis=0).sum()),
    )
