"""Sweep acquisition: frequency ramp, cycle accumulation into the data
cube, edge-bin normalization, and contrast extraction.

The protocol: the probe tone steps through ``N_seq = (f_max - f_min) / df``
frequencies (half-open grid, ``f_min + k*df`` for k < N_seq); at each step
the camera integrates one exposure; the whole ramp repeats ``n_cycles``
times and frames accumulate per step. Normalization divides each pixel's
trace by the mean of its first and last ``m`` bins, which the protocol
requires to be off-resonance.

Randomness discipline: the Poisson draw for (cycle, step) uses a seed
sequence derived from ``(seed, domain, cycle, step)`` only, so cycle splits,
serial/parallel execution, and both kernel backends all produce identical
cubes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .camera import Frame, Scene, expected_counts, rng_from_seed, sample_frame
from .nv import Tone
from .errors import ConfigError, DataError, NormalizationError

# Seed-domain tags keep sweep draws and frame-sequence draws disjoint.
SEED_DOMAIN_SWEEP = 1
SEED_DOMAIN_FRAMES = 2


@dataclass(frozen=True)
class SweepConfig:
    f_min_hz: int
    f_max_hz: int
    delta_f_hz: int
    n_cycles: int = 1
    exposure_s: float = 0.01
    edge_bins_m: int = 5
    probe_power_dBm: float = 25.0

    def __post_init__(self):
        for name in ("f_min_hz", "f_max_hz", "delta_f_hz"):
            v = getattr(self, name)
            if int(v) != v:
                raise ConfigError(f"SweepConfig.{name} must be an integer in Hz")
            object.__setattr__(self, name, int(v))
        if self.f_min_hz < 0:
            raise ConfigError("f_min_hz must be >= 0")
        if self.f_max_hz <= self.f_min_hz:
            raise ConfigError("f_max_hz must exceed f_min_hz")
        if self.delta_f_hz <= 0:
            raise ConfigError("delta_f_hz must be > 0")
        span = self.f_max_hz - self.f_min_hz
        if span % self.delta_f_hz != 0:
            raise ConfigError(
                "sweep span must be an integer multiple of delta_f_hz "
                f"(span {span} Hz, step {self.delta_f_hz} Hz)"
            )
        if self.n_cycles < 1:
            raise ConfigError("n_cycles must be >= 1")
        if self.exposure_s <= 0:
            raise ConfigError("exposure_s must be > 0")
        if self.edge_bins_m < 1:
            raise ConfigError("edge_bins_m must be >= 1")
        if 2 * self.edge_bins_m >= self.n_seq:
            raise ConfigError("need 2*edge_bins_m < N_seq")

    @property
    def n_seq(self) -> int:
        return (self.f_max_hz - self.f_min_hz) // self.delta_f_hz

    @property
    def freq_axis_hz(self) -> np.ndarray:
        """Exact integer frequency grid, length N_seq."""
        return self.f_min_hz + self.delta_f_hz * np.arange(self.n_seq, dtype=np.int64)


@dataclass(frozen=True)
class DataCube:
    """[N_seq, h, w] stack of accumulated (or normalized) sweep data.

    ``data`` is integer counts for a sampled raw cube, float for noiseless
    raw and for normalized cubes. ``edge_mean`` (per-pixel mean edge-bin
    counts, the normalization denominator) is attached by ``normalize_cube``
    and is the basis of downstream shot-noise estimates.
    """

    data: np.ndarray
    freq_axis_hz: np.ndarray
    n_cycles_applied: int
    exposure_s: float
    normalized: bool = False
    edge_bins_m: int = 0
    edge_mean: np.ndarray = None

    def __post_init__(self):
        d = np.asarray(self.data)
        f = np.asarray(self.freq_axis_hz, dtype=np.int64)
        if d.ndim != 3:
            raise DataError("cube data must be [N_seq, h, w]")
        if f.ndim != 1 or f.shape[0] != d.shape[0]:
            raise DataError("freq axis length must match the cube's first axis")
        d.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "freq_axis_hz", f)
        if self.edge_mean is not None:
            em = np.asarray(self.edge_mean, dtype=float)
            if em.shape != d.shape[1:]:
                raise DataError("edge_mean shape must match the image plane")
            em.setflags(write=False)
            object.__setattr__(self, "edge_mean", em)

    @property
    def n_seq(self) -> int:
        return self.data.shape[0]

    @property
    def image_shape(self):
        return self.data.shape[1:]


def _sweep_step(scene: Scene, sweep: SweepConfig, k: int, freq: int):
    """Mean counts for one probe step (flattened image)."""
    supp = scene.tone_suppression(float(freq), sweep.probe_power_dBm)
    rate = scene._flat[3]
    return rate * sweep.exposure_s * supp


def run_sweep(
    scene: Scene,
    sweep: SweepConfig,
    seed: int,
    noiseless: bool = False,
    threads: int = 1,
    first_cycle: int = 0,
) -> DataCube:
    """Execute the sweep protocol and return the raw accumulated cube.

    ``first_cycle`` offsets the cycle index used for seeding, so a run of
    ``n_cycles = a + b`` equals the elementwise sum of an ``a``-cycle run
    and a ``b``-cycle run with ``first_cycle = a``. Thread count affects
    scheduling only, never values.
    """
    freqs = sweep.freq_axis_hz
    ny, nx = scene.shape
    n = sweep.n_seq
    dtype = np.float64 if noiseless else np.int64
    cube = np.zeros((n, ny * nx), dtype=dtype)

    def do_step(k: int):
        means = _sweep_step(scene, sweep, k, int(freqs[k]))
        if noiseless:
            cube[k] = sweep.n_cycles * means
            return
        acc = cube[k]
        for cycle in range(first_cycle, first_cycle + sweep.n_cycles):
            ss = np.random.SeedSequence([int(seed), SEED_DOMAIN_SWEEP, cycle, k])
            acc += rng_from_seed(ss).poisson(means)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(do_step, range(n)))
    else:
        for k in range(n):
            do_step(k)

    return DataCube(
        data=cube.reshape(n, ny, nx),
        freq_axis_hz=freqs,
        n_cycles_applied=sweep.n_cycles,
        exposure_s=sweep.exposure_s,
        normalized=False,
    )


def _edge_check(data: np.ndarray, edge_mean: np.ndarray, m: int, sigma: float):
    """Verify the 2m edge bins hold no resonance.

    The test pools each edge bin over all pixels: z = (expected - observed)
    / sqrt(expected) must stay below ``sigma``. Pooling keeps the false-alarm
    rate negligible at megapixel scale while a genuine resonance (which
    darkens a whole iso-frequency arc) stands out strongly. On failure the
    error names the offending bins and the most-dipped pixels.
    """
    n = data.shape[0]
    edge_idx = list(range(m)) + list(range(n - m, n))
    total_expected = float(edge_mean.sum())
    if total_expected <= 0:
        raise NormalizationError("edge bins have zero accumulated counts")
    bad_bins = []
    for k in edge_idx:
        dip = total_expected - float(data[k].sum())
        z = dip / np.sqrt(total_expected)
        if z > sigma:
            bad_bins.append((k, z))
    if bad_bins:
        worst_bin = max(bad_bins, key=lambda t: t[1])[0]
        pixel_dip = edge_mean - data[worst_bin]
        with np.errstate(invalid="ignore", divide="ignore"):
            pixel_z = pixel_dip / np.sqrt(np.maximum(edge_mean, 1e-300))
        flat = np.argsort(pixel_z.ravel())[::-1][:10]
        worst_pixels = [
            (int(i // data.shape[2]), int(i % data.shape[2]))
            for i in flat
            if pixel_z.ravel()[i] > 3.0
        ]
        raise NormalizationError(
            "edge bins contain a resonance: bins "
            + ", ".join(f"{k} (z={z:.1f})" for k, z in bad_bins)
            + f"; most-dipped pixels (row, col): {worst_pixels}"
        )


def normalize_cube(
    cube: DataCube,
    m: int = None,
    edge_dip_sigma: float = 5.0,
) -> DataCube:
    """Divide each pixel's trace by its mean over the first and last m bins:
    out[x,y,f] = 2m * D[x,y,f] / (sum of first m + sum of last m).

    Rejects cubes already normalized, m out of range, edge bins that are not
    off-resonance (see ``_edge_check``), and zero denominators.
    """
    if cube.normalized:
        raise DataError("cube is already normalized")
    if m is None:
        m = cube.edge_bins_m if cube.edge_bins_m >= 1 else 5
    if m < 1:
        raise DataError("edge bin count m must be >= 1")
    if 2 * m >= cube.n_seq:
        raise DataError(f"need 2*m < N_seq (m={m}, N_seq={cube.n_seq})")
    data = cube.data.astype(np.float64, copy=False)
    edge_sum = data[:m].sum(axis=0) + data[-m:].sum(axis=0)
    edge_mean = edge_sum / (2.0 * m)
    if np.any(edge_sum <= 0):
        n_zero = int(np.count_nonzero(edge_sum <= 0))
        raise NormalizationError(
            f"{n_zero} pixels have zero accumulated counts in the edge bins"
        )
    _edge_check(data, edge_mean, m, edge_dip_sigma)
    norm = data / edge_mean[None, :, :]
    return DataCube(
        data=norm,
        freq_axis_hz=cube.freq_axis_hz,
        n_cycles_applied=cube.n_cycles_applied,
        exposure_s=cube.exposure_s,
        normalized=True,
        edge_bins_m=m,
        edge_mean=edge_mean,
    )


def contrast_cube(norm: DataCube) -> np.ndarray:
    """C = 1 - D_norm, elementwise. Noise can push entries slightly
    negative; values are deliberately not clamped."""
    if not norm.normalized:
        raise DataError("contrast requires a normalized cube")
    return 1.0 - norm.data


def with_edge_bins(cube: DataCube, m: int) -> DataCube:
    """Copy of a raw cube carrying a default m for later normalization."""
    return replace(cube, edge_bins_m=m)


@dataclass(frozen=True)
class ChirpSpec:
    """One tone over a frame sequence. Frequency moves linearly from
    f_start to f_end across the full sequence; the tone is only emitted on
    frames in [frame_on, frame_off). frame_off=None means until the end."""

    f_start_hz: float
    f_end_hz: float
    nominal_power_dBm: float
    frame_on: int = 0
    frame_off: int = None

    def __post_init__(self):
        if self.f_start_hz <= 0 or self.f_end_hz <= 0:
            raise ConfigError("chirp frequencies must be > 0")
        if self.frame_on < 0:
            raise ConfigError("frame_on must be >= 0")
        if self.frame_off is not None and self.frame_off <= self.frame_on:
            raise ConfigError("frame_off must be > frame_on")

    def frequency_at(self, i: int, n_frames: int) -> float:
        if n_frames <= 1:
            return self.f_start_hz
        frac = i / (n_frames - 1)
        return self.f_start_hz + (self.f_end_hz - self.f_start_hz) * frac

    def active(self, i: int) -> bool:
        off = self.frame_off
        return i >= self.frame_on and (off is None or i < off)


@dataclass(frozen=True)
class FramesSpec:
    """A fixed-rate frame sequence (contiguous exposures, no dead time)."""

    n_frames: int
    exposure_s: float
    tones: tuple = ()

    def __post_init__(self):
        if self.n_frames < 1:
            raise ConfigError("n_frames must be >= 1")
        if self.exposure_s <= 0:
            raise ConfigError("exposure_s must be > 0")
        object.__setattr__(self, "tones", tuple(self.tones))

    def tones_at(self, i: int):
        """Instantaneous CW tones for frame i."""
        return [
            Tone(
                frequency_hz=c.frequency_at(i, self.n_frames),
                nominal_power_dBm=c.nominal_power_dBm,
            )
            for c in self.tones
            if c.active(i)
        ]


def run_frames(scene: Scene, spec: FramesSpec, seed: int, noiseless: bool = False):
    """Acquire a frame sequence plus its no-tone reference image.

    Frame i covers [i*exposure, (i+1)*exposure); a chirp is treated as CW
    at its frame-i frequency for the whole exposure. The reference is the
    noiseless tone-free mean image (float64), the natural denominator for
    per-frame contrast.

    Frame i draws from SeedSequence([seed, SEED_DOMAIN_FRAMES, i]), so any
    subsequence of frames is reproducible independently of the rest.
    """
    frames = []
    for i in range(spec.n_frames):
        tones = spec.tones_at(i)
        means = expected_counts(scene, tones, spec.exposure_s)
        t = i * spec.exposure_s
        if noiseless:
            frames.append(
                Frame(counts=means, exposure_s=spec.exposure_s, timestamp_s=t)
            )
        else:
            ss = np.random.SeedSequence([seed, SEED_DOMAIN_FRAMES, i])
            frames.append(
                sample_frame(means, ss, spec.exposure_s, timestamp_s=t)
            )
    reference = expected_counts(scene, [], spec.exposure_s)
    return frames, reference
