import json
import os

import numpy as np
import pytest

from qdisa import CalibrationMap, DataCube, DataError, Frame, Spectrum
from qdisa.analysis import ToneEstimate
from qdisa.fileio import (
    read_cube,
    read_frames,
    read_map,
    read_spectrogram_csv,
    read_spectrum_csv,
    tones_to_dicts,
    write_cube,
    write_frames,
    write_json,
    write_map,
    write_spectrogram_csv,
    write_spectrum_csv,
)


def _cube(normalized=False, big=False, noiseless=False):
    rng = np.random.default_rng(9)
    if normalized:
        data = rng.uniform(0.9, 1.1, size=(6, 3, 4))
    elif noiseless:
        data = rng.uniform(100.0, 200.0, size=(6, 3, 4))
    elif big:
        data = rng.integers(2**33, 2**34, size=(6, 3, 4)).astype(np.int64)
    else:
        data = rng.integers(0, 1000, size=(6, 3, 4)).astype(np.int64)
    return DataCube(
        data=data,
        freq_axis_hz=(1e9 + 1e6 * np.arange(6)).astype(np.int64),
        n_cycles_applied=3,
        exposure_s=0.02,
        normalized=normalized,
        edge_bins_m=2 if normalized else 0,
        edge_mean=np.full((3, 4), 123.5) if normalized else None,
    )


def test_cube_round_trip_counts(tmp_path):
    cube = _cube()
    p = str(tmp_path / "c.qdc")
    write_cube(p, cube)
    back = read_cube(p)
    assert np.array_equal(back.data, cube.data)
    assert np.array_equal(back.freq_axis_hz, cube.freq_axis_hz)
    assert back.n_cycles_applied == 3
    assert back.exposure_s == 0.02
    assert not back.normalized
    assert back.edge_mean is None


def test_cube_round_trip_normalized(tmp_path):
    cube = _cube(normalized=True)
    p = str(tmp_path / "c.qdc")
    write_cube(p, cube)
    back = read_cube(p)
    # normalized payload is stored as f32, read back as float64
    assert back.data.dtype == np.float64
    assert np.array_equal(back.data, cube.data.astype(np.float32).astype(np.float64))
    assert back.normalized
    assert back.edge_bins_m == 2
    assert np.array_equal(back.edge_mean, cube.edge_mean)


def test_cube_round_trip_wide_counts(tmp_path):
    # counts beyond u32 keep full precision via the f64 payload
    cube = _cube(big=True)
    p = str(tmp_path / "c.qdc")
    write_cube(p, cube)
    back = read_cube(p)
    assert np.array_equal(back.data.astype(np.int64), cube.data)


def test_cube_round_trip_noiseless(tmp_path):
    cube = _cube(noiseless=True)
    p = str(tmp_path / "c.qdc")
    write_cube(p, cube)
    back = read_cube(p)
    assert np.array_equal(back.data, cube.data)  # f64 bit-exact


def test_cube_corruption_detected(tmp_path):
    cube = _cube()
    p = str(tmp_path / "c.qdc")
    write_cube(p, cube)
    raw = open(p, "rb").read()
    with open(p, "wb") as fh:
        fh.write(raw[: len(raw) - 7])  # truncate
    with pytest.raises(DataError):
        read_cube(p)
    with open(p, "wb") as fh:
        fh.write(b"NOTMAGIC" + raw[8:])
    with pytest.raises(DataError):
        read_cube(p)


def test_no_temp_files_left(tmp_path):
    write_cube(str(tmp_path / "c.qdc"), _cube())
    assert sorted(os.listdir(tmp_path)) == ["c.qdc"]


def test_frames_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    frames = [
        Frame(
            counts=rng.integers(0, 500, size=(3, 4)).astype(np.int64),
            exposure_s=0.01,
            timestamp_s=0.01 * i,
        )
        for i in range(4)
    ]
    ref = rng.uniform(100, 200, size=(3, 4))
    p = str(tmp_path / "f.qdc")
    write_frames(p, frames, reference=ref)
    back, back_ref = read_frames(p)
    assert len(back) == 4
    for a, b in zip(frames, back):
        assert np.array_equal(a.counts, b.counts.astype(np.int64))
        assert b.exposure_s == 0.01
        assert b.timestamp_s == a.timestamp_s
    assert np.array_equal(back_ref, ref)

    write_frames(str(tmp_path / "g.qdc"), frames)
    _, no_ref = read_frames(str(tmp_path / "g.qdc"))
    assert no_ref is None


def test_map_round_trip(tmp_path):
    pixel_bin = np.array([[0, 1, -1], [2, 2, 2]], dtype=np.int32)
    cmap = CalibrationMap(
        freq_axis_hz=np.array([1e9, 2e9, 3e9], dtype=np.int64),
        pixel_bin=pixel_bin,
        n_p=np.array([1, 1, 3], dtype=np.int64),
        branch="plus",
        valid=np.array([True, True, True]),
        low_confidence=np.array([True, True, False]),
        threshold_sigma=4.5,
    )
    p = str(tmp_path / "m.qdm")
    write_map(p, cmap)
    back = read_map(p)
    assert np.array_equal(back.pixel_bin, cmap.pixel_bin)
    assert np.array_equal(back.freq_axis_hz, cmap.freq_axis_hz)
    assert np.array_equal(back.n_p, cmap.n_p)
    assert np.array_equal(back.low_confidence, cmap.low_confidence)
    assert back.branch == "plus"
    assert back.threshold_sigma == 4.5
    with pytest.raises(DataError):
        read_cube(p)  # wrong container magic


def test_spectrum_csv_round_trip(tmp_path):
    vals = np.array([0.01, np.nan, 0.03])
    spec = Spectrum(
        freq_axis_hz=np.array([1e9, 2e9, 3e9], dtype=np.int64),
        values=vals,
        sigma=np.array([1e-3, np.nan, 3e-3]),
        n_p=np.array([5, 0, 7], dtype=np.int64),
        valid=np.array([True, False, True]),
        normalization="contrast",
    )
    p = str(tmp_path / "s.csv")
    write_spectrum_csv(p, spec)
    back = read_spectrum_csv(p)
    assert np.array_equal(back.freq_axis_hz, spec.freq_axis_hz)
    assert back.values[0] == spec.values[0]
    assert np.isnan(back.values[1])
    assert np.array_equal(back.n_p, spec.n_p)
    assert np.array_equal(back.valid, spec.valid)
    first = open(p).readline().strip()
    assert first == "frequency_hz,value,sigma,n_p,valid"


def test_spectrogram_csv_round_trip(tmp_path):
    from qdisa import Spectrogram

    sg = Spectrogram(
        freq_axis_hz=np.array([1e9, 2e9], dtype=np.int64),
        time_axis_s=np.array([0.0, 0.5, 1.0]),
        values=np.arange(6, dtype=float).reshape(3, 2) / 100.0,
    )
    p = str(tmp_path / "sg.csv")
    write_spectrogram_csv(p, sg)
    back = read_spectrogram_csv(p)
    assert np.array_equal(back.time_axis_s, sg.time_axis_s)
    assert np.array_equal(back.freq_axis_hz, sg.freq_axis_hz)
    assert np.array_equal(back.values, sg.values)


def test_write_json_handles_numpy_and_nan(tmp_path):
    p = str(tmp_path / "r.json")
    write_json(
        p,
        {
            "a": np.int64(3),
            "b": np.float64(1.5),
            "c": np.nan,
            "d": np.array([1.0, 2.0]),
            "e": {"nested": np.bool_(True)},
        },
    )
    back = json.load(open(p))
    assert back["a"] == 3
    assert back["b"] == 1.5
    assert back["c"] is None  # non-finite becomes null
    assert back["d"] == [1.0, 2.0]
    assert back["e"]["nested"] is True


def test_tones_to_dicts():
    tones = [ToneEstimate(frequency_hz=1e9, contrast=0.05, snr=12.0)]
    out = tones_to_dicts(tones)
    assert out[0]["frequency_hz"] == 1e9
    assert out[0]["snr"] == 12.0
    assert out[0]["first_seen_s"] is None
