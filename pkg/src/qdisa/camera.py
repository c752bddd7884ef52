"""Synthetic camera: per-pixel expected photoluminescence under MW drive,
Poisson shot noise, and the photon-budget SNR estimator.

The expected count rate of a pixel is the product of an absolute budget
(NV density x voxel volume x emission rate x collection efficiency), the
laser intensity profile, and the ODMR suppression of every active tone at
that pixel's two resonance branches. Read noise and dark current are
deliberately absent: the modeled regime is photon-shot-noise-limited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import DomainError
from .field import FieldMap, MagnetDipole, SensorGeometry, field_map
from .nv import (
    MWDrive,
    NVPhysicsParams,
    OFFAXIS_PROJECTION,
    contrast_model,
    linewidth_model,
    resonance_frequencies,
)

# Centers per um^3 for 1 ppb substitutional nitrogen converted to NV
# (carbon density 1.76e23 cm^-3).
DENSITY_PER_UM3_PER_PPB = 176.0


@dataclass(frozen=True)
class PixelOptics:
    """Absolute photon budget per pixel and the illumination profile.

    Defaults put the on-peak pixel near 1e6 counts/s, i.e. about 10^3
    counts in a 1 ms exposure, which keeps millisecond-exposure experiments
    in a statistically meaningful regime.
    """

    nv_density_ppb: float = 2.0
    voxel_volume_um3: float = 0.66 * 0.66 * 38.0
    pl_rate_per_center: float = 6.0e4
    collection_efficiency: float = 2.86e-3
    laser_fwhm_um: float = 38.0

    def __post_init__(self):
        for name in (
            "nv_density_ppb",
            "voxel_volume_um3",
            "pl_rate_per_center",
            "collection_efficiency",
            "laser_fwhm_um",
        ):
            if getattr(self, name) <= 0:
                raise DomainError(f"PixelOptics.{name} must be > 0")

    @property
    def density_per_um3(self) -> float:
        return self.nv_density_ppb * DENSITY_PER_UM3_PER_PPB

    @property
    def peak_rate_per_s(self) -> float:
        """Counts per second of a pixel at the laser profile peak."""
        return (
            self.density_per_um3
            * self.voxel_volume_um3
            * self.pl_rate_per_center
            * self.collection_efficiency
        )

    def laser_profile(self, geom: SensorGeometry) -> np.ndarray:
        """Relative intensity per pixel, peak-normalized to 1.

        Gaussian across the strip (image y, the beam cross-section) and
        uniform along it; the beam propagates along the imaged strip.
        """
        ny, nx = geom.shape
        y = (np.arange(ny) - (ny - 1) / 2.0) * geom.pixel_pitch_um
        gauss = np.exp(-4.0 * math.log(2.0) * (y / self.laser_fwhm_um) ** 2)
        gauss /= gauss.max()
        return np.repeat(gauss[:, None], nx, axis=1)


@dataclass(frozen=True)
class Frame:
    """One camera exposure. ``counts`` is integer for sampled frames and
    float for noiseless (expected-value) frames."""

    counts: np.ndarray
    exposure_s: float
    timestamp_s: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise DomainError("frame counts must be 2-D")
        if self.exposure_s <= 0:
            raise DomainError("exposure_s must be > 0")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise DomainError("frame counts must be finite and non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class Scene:
    """Everything static about one experimental configuration: magnet,
    sensor geometry, NV physics, optics, and the drive chain (antenna +
    reference power). Tones are supplied per call, not stored here."""

    geometry: SensorGeometry = field(default_factory=SensorGeometry)
    magnet: MagnetDipole = field(default_factory=MagnetDipole)
    optics: PixelOptics = field(default_factory=PixelOptics)
    physics: NVPhysicsParams = field(default_factory=NVPhysicsParams)
    drive: MWDrive = field(default_factory=MWDrive)

    @cached_property
    def fieldmap(self) -> FieldMap:
        return field_map(self.magnet, self.geometry, self.physics)

    @cached_property
    def _flat(self):
        """Per-pixel flattened arrays reused across every frame/step:
        (nu_minus, nu_plus, gradient MHz/um, rate counts/s)."""
        nu_m, nu_p = self.fieldmap.resonance_maps(self.physics)
        grad = self.fieldmap.gradient_MHz_per_um
        rate = self.optics.peak_rate_per_s * self.optics.laser_profile(self.geometry)
        return (
            np.ascontiguousarray(nu_m.ravel()),
            np.ascontiguousarray(nu_p.ravel()),
            np.ascontiguousarray(grad.ravel()),
            np.ascontiguousarray(rate.ravel()),
        )

    @cached_property
    def _offaxis_flat(self):
        """Resonances of the misaligned NV families (1/3 field projection)."""
        nu_m3, nu_p3 = resonance_frequencies(
            self.fieldmap.b_nv_T * OFFAXIS_PROJECTION, self.physics
        )
        return (
            np.ascontiguousarray(nu_m3.ravel()),
            np.ascontiguousarray(nu_p3.ravel()),
        )

    @property
    def shape(self):
        return self.geometry.shape

    @property
    def rate_map(self) -> np.ndarray:
        return self._flat[3].reshape(self.shape)

    def tone_suppression(self, frequency_hz: float, nominal_power_dBm: float):
        """Relative PL (flattened, one entry per pixel) under one CW tone.

        Product over every responding line of ``1 - c_line * triplet``.
        A tone below the level-anti-crossing floor produces no response, and
        lines whose own frequency is below the floor are inert (the mixed
        levels there carry no usable resonance).
        """
        phys = self.physics
        nu_m, nu_p, grad, _ = self._flat
        n_px = nu_m.shape[0]
        if frequency_hz < phys.gslac_floor_hz:
            return np.ones(n_px)
        delivered = self.drive.delivered_dBm(frequency_hz, nominal_power_dBm)
        c_tone = contrast_model(delivered, phys, self.drive.reference_power_dBm)
        hwhm = 0.5 * linewidth_model(
            delivered, grad, self.geometry.pixel_pitch_um, phys
        )
        lines = [(nu_m, c_tone), (nu_p, c_tone)]
        if phys.offaxis_lines_enabled:
            nu_m3, nu_p3 = self._offaxis_flat
            w = c_tone * phys.offaxis_line_weight
            lines += [(nu_m3, w), (nu_p3, w)]
        probe = np.array([float(frequency_hz)])
        supp = np.ones(n_px)
        for centers, c_line in lines:
            trip = kernels.triplet_sum(probe, centers, hwhm, phys.hyperfine_hz)[0]
            c_eff = np.where(centers >= phys.gslac_floor_hz, c_line, 0.0)
            supp *= 1.0 - c_eff * trip
        return supp


def _segments(tones, t0: float, t1: float):
    """Split [t0, t1) at every tone on/off boundary; yields
    (fraction_of_interval, active_tone_indices)."""
    cuts = {t0, t1}
    for tone in tones:
        for edge in (tone.t_on_s, tone.t_off_s):
            if t0 < edge < t1:
                cuts.add(edge)
    bounds = sorted(cuts)
    total = t1 - t0
    for lo, hi in zip(bounds, bounds[1:]):
        active = [
            i for i, tone in enumerate(tones) if tone.t_on_s <= lo and tone.t_off_s >= hi
        ]
        yield (hi - lo) / total, active


def expected_counts(
    scene: Scene,
    tones,
    exposure_s: float,
    t0_s: float = 0.0,
) -> np.ndarray:
    """Per-pixel mean counts for one exposure starting at ``t0_s``.

    The exposure interval is decomposed at tone on/off boundaries; within
    each segment the active-tone suppressions multiply (CW steady state),
    and segments combine weighted by their duration. With no tones this is
    just budget x profile x exposure.
    """
    if exposure_s <= 0:
        raise DomainError("exposure_s must be > 0")
    tones = list(tones)
    rate = scene._flat[3]
    supp = [
        scene.tone_suppression(t.frequency_hz, t.nominal_power_dBm) for t in tones
    ]
    factor = np.zeros_like(rate)
    for frac, active in _segments(tones, t0_s, t0_s + exposure_s):
        seg = np.ones_like(rate)
        for i in active:
            seg = seg * supp[i]
        factor += frac * seg
    return (rate * exposure_s * factor).reshape(scene.shape)


def rng_from_seed(seed) -> np.random.Generator:
    """Accepts an int or a SeedSequence; all randomness flows through here."""
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


def sample_frame(means, seed, exposure_s: float, timestamp_s: float = 0.0) -> Frame:
    """Independent Poisson draw per pixel; bit-reproducible for a fixed seed."""
    m = np.asarray(means, dtype=float)
    if np.any(m < 0):
        raise DomainError("means must be >= 0")
    rng = rng_from_seed(seed)
    counts = rng.poisson(m).astype(np.int64)
    return Frame(counts=counts, exposure_s=exposure_s, timestamp_s=timestamp_s)


def snr_estimate(
    n_per_um3: float,
    v_um3: float,
    n_p: float,
    r0_per_s: float,
    zeta: float,
    dt_s: float,
    contrast: float,
) -> float:
    """Shot-noise SNR of a contrast measurement over ``n_p`` pooled pixels:
    sqrt(n * V * N_p * R0 * zeta * dt) * C."""
    for name, v in (
        ("n_per_um3", n_per_um3),
        ("v_um3", v_um3),
        ("n_p", n_p),
        ("r0_per_s", r0_per_s),
        ("zeta", zeta),
        ("dt_s", dt_s),
        ("contrast", contrast),
    ):
        if v < 0:
            raise DomainError(f"{name} must be >= 0")
    return math.sqrt(n_per_um3 * v_um3 * n_p * r0_per_s * zeta * dt_s) * contrast


def photon_budget(optics: PixelOptics, n_p: float, profile_weight: float = 1.0) -> float:
    """n * V * N_p * R0 * zeta in counts/s, optionally de-rated by the mean
    laser-profile weight of the pixels involved."""
    return optics.peak_rate_per_s * n_p * profile_weight
