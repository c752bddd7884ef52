"""Static field model: a spherical permanent magnet as a point dipole, the
sensor pixel grid in its field, and per-pixel field/gradient maps.

The external field of a uniformly magnetized sphere is exactly that of a
point dipole at its center, so the sphere is represented by its radius and
the field magnitude at the on-axis pole surface. Geometry convention: the
magnet sits at the origin with its magnetization axis pointing through the
diamond; the sensor's long axis lies along that axis with the nearest pixel
column at ``magnet_center_to_diamond_m`` from the center, so the field (and
hence the resonance frequency) is spatially encoded along the image x-axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError, DomainError
from .nv import NVPhysicsParams, resonance_frequencies

MAX_SURFACE_FIELD_T = 1.5  # strong NdFeB territory; beyond this the sphere is fiction


def _unit(v, name: str):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise DomainError(f"{name} must be a 3-vector")
    if abs(np.linalg.norm(arr) - 1.0) > 1e-12:
        raise DomainError(f"{name} must be unit length within 1e-12")
    return tuple(arr)


@dataclass(frozen=True)
class MagnetDipole:
    radius_m: float = 6.5e-3
    surface_pole_field_T: float = 1.08
    magnetization_axis: tuple = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.radius_m <= 0:
            raise DomainError("radius_m must be > 0")
        if self.surface_pole_field_T <= 0:
            raise DomainError("surface_pole_field_T must be > 0")
        object.__setattr__(
            self,
            "magnetization_axis",
            _unit(self.magnetization_axis, "magnetization_axis"),
        )

    @property
    def moment_prefactor(self) -> float:
        """(mu0/4pi)·|m| in T·m³; the on-axis field at distance r is twice
        this over r³, equal to surface_pole_field_T at r = radius."""
        return 0.5 * self.surface_pole_field_T * self.radius_m**3

    def on_axis_field_T(self, r_m):
        """|B| on the magnetization axis at distance r from the center."""
        r = np.asarray(r_m, dtype=float)
        if np.any(r < self.radius_m):
            raise DomainError("point inside the magnet sphere")
        out = self.surface_pole_field_T * (self.radius_m / r) ** 3
        if out.ndim == 0:
            return float(out)
        return out

    def distance_for_field(self, b_T: float) -> float:
        """On-axis distance at which the field magnitude equals b_T."""
        if b_T <= 0:
            raise DomainError("field must be > 0")
        if b_T > self.surface_pole_field_T:
            raise DomainError("field exceeds the surface pole field")
        return self.radius_m * (self.surface_pole_field_T / b_T) ** (1.0 / 3.0)


def dipole_field(magnet: MagnetDipole, point_m):
    """Dipole field vector(s) in tesla at point(s) relative to the magnet
    center: (mu0/4pi)·[3(m·r_hat)r_hat − m]/r³. Points must lie outside
    the sphere."""
    pts = np.asarray(point_m, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise DomainError("points must be 3-vectors")
    r = np.linalg.norm(pts, axis=-1)
    if np.any(r < magnet.radius_m * (1.0 - 1e-12)):
        raise DomainError("point inside the magnet sphere")
    m_hat = np.asarray(magnet.magnetization_axis)
    r_hat = pts / r[:, None]
    proj = r_hat @ m_hat
    b = (magnet.moment_prefactor / r[:, None] ** 3) * (
        3.0 * proj[:, None] * r_hat - m_hat
    )
    if single:
        return b[0]
    return b


def calibrate_surface_field(
    target_numax_GHz: float,
    closest_distance_m: float,
    radius_m: float = 6.5e-3,
    params: NVPhysicsParams = NVPhysicsParams(),
    max_surface_field_T: float = MAX_SURFACE_FIELD_T,
) -> float:
    """Surface pole field that puts the upper resonance at the target
    frequency for a pixel sitting ``closest_distance_m`` from the sphere
    surface. Inverts the resonance formula, then rescales by the cube of the
    distance ratio."""
    if closest_distance_m < 0:
        raise DomainError("closest_distance_m must be >= 0")
    if radius_m <= 0:
        raise DomainError("radius_m must be > 0")
    if target_numax_GHz <= params.D_GHz:
        raise CalibrationError(
            "target frequency at or below the zero-field splitting needs no field"
        )
    b_at_pixel = (target_numax_GHz - params.D_GHz) / params.gamma_GHz_per_T
    r = radius_m + closest_distance_m
    b_s = b_at_pixel * (r / radius_m) ** 3
    if b_s > max_surface_field_T:
        raise CalibrationError(
            f"required surface field {b_s:.3f} T exceeds bound {max_surface_field_T} T"
        )
    return b_s


def _transverse_axis(axis):
    """Deterministic unit vector orthogonal to ``axis``."""
    a = np.asarray(axis, dtype=float)
    helper = np.array([0.0, 1.0, 0.0])
    if abs(a @ helper) > 0.9:
        helper = np.array([0.0, 0.0, 1.0])
    t = helper - (helper @ a) * a
    return t / np.linalg.norm(t)


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel grid of the imaged diamond plane.

    The nominal active area is 530 x 50 um; the stored default is trimmed to
    an exact multiple of the 0.66 um pitch so the derived grid is 800 x 76.
    The 50 um thickness is collapsed to a single depth-averaged plane.
    """

    magnet_center_to_diamond_m: float = 8.5e-3
    active_area_um: tuple = (528.0, 50.16)
    pixel_pitch_um: float = 0.66
    nv_axis: tuple = None

    def __post_init__(self):
        if self.pixel_pitch_um <= 0:
            raise DomainError("pixel_pitch_um must be > 0")
        w, h = self.active_area_um
        if w <= 0 or h <= 0:
            raise DomainError("active_area_um must be positive")
        if self.magnet_center_to_diamond_m <= 0:
            raise DomainError("magnet_center_to_diamond_m must be > 0")
        if self.nv_axis is not None:
            object.__setattr__(self, "nv_axis", _unit(self.nv_axis, "nv_axis"))

    @property
    def grid_dims(self) -> tuple:
        """(n_x, n_y) pixel counts, floor(active_area / pitch) per axis."""
        w, h = self.active_area_um
        return (
            int(math.floor(w / self.pixel_pitch_um + 1e-9)),
            int(math.floor(h / self.pixel_pitch_um + 1e-9)),
        )

    @property
    def shape(self) -> tuple:
        """Image array shape (rows, cols) = (n_y, n_x)."""
        nx, ny = self.grid_dims
        return (ny, nx)

    def pixel_positions_m(self, magnet: MagnetDipole):
        """World coordinates of every pixel center, shape (n_y, n_x, 3).

        The nearest pixel column sits on the magnetization axis at
        ``magnet_center_to_diamond_m``; x grows away from the magnet, y is
        transverse and centered on the axis.
        """
        nx, ny = self.grid_dims
        pitch_m = self.pixel_pitch_um * 1e-6
        axis = np.asarray(magnet.magnetization_axis)
        trans = _transverse_axis(axis)
        x = self.magnet_center_to_diamond_m + np.arange(nx) * pitch_m
        y = (np.arange(ny) - (ny - 1) / 2.0) * pitch_m
        return x[None, :, None] * axis + y[:, None, None] * trans


@dataclass(frozen=True)
class FieldMap:
    """Per-pixel NV-axis field projection and its x-gradient.

    ``b_nv_T`` is signed; ``gradient_MHz_per_pixel`` is the frequency step
    between adjacent pixels along the image x-axis (the encoding direction),
    central differences inside, one-sided at the edges.
    """

    b_nv_T: np.ndarray
    gradient_MHz_per_pixel: np.ndarray
    pixel_pitch_um: float

    def __post_init__(self):
        b = np.asarray(self.b_nv_T, dtype=float)
        g = np.asarray(self.gradient_MHz_per_pixel, dtype=float)
        if b.ndim != 2 or g.shape != b.shape:
            raise DomainError("field map arrays must be 2-D and congruent")
        b.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "b_nv_T", b)
        object.__setattr__(self, "gradient_MHz_per_pixel", g)

    @property
    def shape(self) -> tuple:
        return self.b_nv_T.shape

    @property
    def gradient_MHz_per_um(self) -> np.ndarray:
        return self.gradient_MHz_per_pixel / self.pixel_pitch_um

    def resonance_maps(self, params: NVPhysicsParams = NVPhysicsParams()):
        """(nu_minus_hz, nu_plus_hz) arrays over the pixel grid."""
        return resonance_frequencies(self.b_nv_T, params)


def _x_gradient(values: np.ndarray) -> np.ndarray:
    """Per-pixel |step along x|, central differences, one-sided at edges."""
    g = np.empty_like(values)
    g[:, 1:-1] = np.abs(values[:, 2:] - values[:, :-2]) / 2.0
    g[:, 0] = np.abs(values[:, 1] - values[:, 0])
    g[:, -1] = np.abs(values[:, -1] - values[:, -2])
    return g


def field_map(
    magnet: MagnetDipole,
    geom: SensorGeometry,
    params: NVPhysicsParams = NVPhysicsParams(),
) -> FieldMap:
    """Evaluate the dipole at every pixel and project onto the NV axis."""
    positions = geom.pixel_positions_m(magnet)
    ny, nx, _ = positions.shape
    r = np.linalg.norm(positions, axis=-1)
    if np.any(r <= magnet.radius_m):
        raise DomainError("sensor pixels must lie strictly outside the magnet")
    nv_axis = geom.nv_axis
    if nv_axis is None:
        nv_axis = magnet.magnetization_axis
    b_vec = dipole_field(magnet, positions.reshape(-1, 3)).reshape(ny, nx, 3)
    b_nv = b_vec @ np.asarray(nv_axis)
    grad = _x_gradient(b_nv) * params.gamma_GHz_per_T * 1e3  # T/pixel -> MHz/pixel
    return FieldMap(
        b_nv_T=b_nv,
        gradient_MHz_per_pixel=grad,
        pixel_pitch_um=geom.pixel_pitch_um,
    )


def uniform_field_map(geom: SensorGeometry, b_nv_T: float) -> FieldMap:
    """Gradient-free stand-in used by tests and degenerate scenarios."""
    shape = geom.shape
    return FieldMap(
        b_nv_T=np.full(shape, float(b_nv_T)),
        gradient_MHz_per_pixel=np.zeros(shape),
        pixel_pitch_um=geom.pixel_pitch_um,
    )
