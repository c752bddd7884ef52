import numpy as np
import pytest

from qdisa import MagnetDipole, PixelOptics, Scene, SensorGeometry, SweepConfig


def make_small_scene(standoff_m=13.3e-3, area_um=(52.8, 19.8), **optics_kw):
    """30 x 80 px scene at a gentle gradient; resonances near 1.8 GHz."""
    geom = SensorGeometry(
        magnet_center_to_diamond_m=6.5e-3 + standoff_m,
        active_area_um=area_um,
    )
    return Scene(geometry=geom, optics=PixelOptics(**optics_kw))


@pytest.fixture(scope="session")
def small_scene():
    return make_small_scene()


@pytest.fixture(scope="session")
def small_sweep():
    # resonances span [1.8001, 1.8087] GHz; >=15 MHz edge margins
    return SweepConfig(
        f_min_hz=1_780_000_000,
        f_max_hz=1_830_000_000,
        delta_f_hz=1_000_000,
        n_cycles=8,
        exposure_s=0.02,
        edge_bins_m=5,
        probe_power_dBm=10.0,
    )


@pytest.fixture(scope="session")
def small_norm_cube(small_scene, small_sweep):
    from qdisa import normalize_cube, run_sweep

    cube = run_sweep(small_scene, small_sweep, seed=4242)
    return normalize_cube(cube)


@pytest.fixture(scope="session")
def small_map(small_norm_cube):
    from qdisa import build_calibration

    return build_calibration(small_norm_cube)
