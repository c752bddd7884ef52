"""File formats: the binary cube/frames container, calibration-map files,
spectrum and spectrogram CSV, and JSON reports.

Container layout (little-endian throughout): 8-byte magic, u16 version,
u32 header length, UTF-8 JSON header, then raw array payload(s) row-major.
Cubes are [frequency][y][x]; payload dtype is u32 for sampled raw counts,
f32 for normalized data, f64 for noiseless (fractional) raw cubes. No
timestamps or hostnames in headers: rerunning a pipeline with the same
config and seed must reproduce files byte for byte.

All writers go through an atomic temp-file + rename.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile

import numpy as np

from .acquisition import DataCube
from .calibration import CalibrationMap, Spectrum
from .camera import Frame
from .errors import DataError

CUBE_MAGIC = b"QDISACUB"
MAP_MAGIC = b"QDISAMAP"
FORMAT_VERSION = 1

_DTYPES = {"u32": "<u4", "f32": "<f4", "f64": "<f8"}


def _atomic_write(path: str, payload: bytes):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qdisa-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(magic: bytes, header: dict, blobs) -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [magic, struct.pack("<HI", FORMAT_VERSION, len(head)), head]
    parts.extend(blobs)
    return b"".join(parts)


def _unpack(path: str, magic: bytes):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 14 or raw[:8] != magic:
        raise DataError(f"{path}: not a {magic.decode()} file")
    version, hlen = struct.unpack_from("<HI", raw, 8)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    if len(raw) < 14 + hlen:
        raise DataError(f"{path}: truncated header")
    try:
        header = json.loads(raw[14 : 14 + hlen].decode())
    except ValueError as exc:
        raise DataError(f"{path}: bad header JSON: {exc}")
    return header, raw[14 + hlen :]


def _take(buf: bytes, offset: int, dtype: str, shape) -> tuple:
    n = int(np.prod(shape))
    itemsize = np.dtype(_DTYPES[dtype]).itemsize
    end = offset + n * itemsize
    if end > len(buf):
        raise DataError("truncated payload")
    arr = np.frombuffer(buf[offset:end], dtype=_DTYPES[dtype]).reshape(shape)
    return arr, end


def _cube_dtype(cube: DataCube) -> str:
    if cube.normalized:
        return "f32"
    if np.issubdtype(cube.data.dtype, np.integer):
        if cube.data.max(initial=0) < 2**32:
            return "u32"
        return "f64"  # beyond u32: store counts exactly as doubles
    return "f64"


def write_cube(path: str, cube: DataCube):
    dtype = _cube_dtype(cube)
    header = {
        "kind": "cube",
        "dtype": dtype,
        "dims": list(cube.data.shape),
        "freq_axis_hz": [int(f) for f in cube.freq_axis_hz],
        "n_cycles": int(cube.n_cycles_applied),
        "exposure_s": float(cube.exposure_s),
        "normalized": bool(cube.normalized),
        "edge_bins_m": int(cube.edge_bins_m),
        "has_edge_mean": cube.edge_mean is not None,
    }
    blobs = [np.ascontiguousarray(cube.data.astype(_DTYPES[dtype])).tobytes()]
    if cube.edge_mean is not None:
        blobs.append(np.ascontiguousarray(cube.edge_mean.astype("<f8")).tobytes())
    _atomic_write(path, _pack(CUBE_MAGIC, header, blobs))


def read_cube(path: str) -> DataCube:
    header, buf = _unpack(path, CUBE_MAGIC)
    if header.get("kind") != "cube":
        raise DataError(f"{path}: container holds {header.get('kind')!r}, not a cube")
    dims = header["dims"]
    data, off = _take(buf, 0, header["dtype"], dims)
    if header["dtype"] == "u32":
        data = data.astype(np.int64)
    else:
        data = data.astype(np.float64)
    edge_mean = None
    if header.get("has_edge_mean"):
        edge_mean, off = _take(buf, off, "f64", dims[1:])
        edge_mean = edge_mean.astype(np.float64)
    return DataCube(
        data=data,
        freq_axis_hz=np.asarray(header["freq_axis_hz"], dtype=np.int64),
        n_cycles_applied=header["n_cycles"],
        exposure_s=header["exposure_s"],
        normalized=header["normalized"],
        edge_bins_m=header.get("edge_bins_m", 0),
        edge_mean=edge_mean,
    )


def write_frames(path: str, frames, reference=None):
    frames = list(frames)
    if not frames:
        raise DataError("no frames to write")
    shape = frames[0].shape
    for fr in frames:
        if fr.shape != shape:
            raise DataError("frames must share one shape")
    stack = np.stack([np.asarray(fr.counts) for fr in frames])
    integral = np.issubdtype(stack.dtype, np.integer)
    dtype = "u32" if integral and stack.max(initial=0) < 2**32 else "f64"
    header = {
        "kind": "frames",
        "dtype": dtype,
        "dims": list(stack.shape),
        "exposure_s": float(frames[0].exposure_s),
        "timestamps_s": [float(fr.timestamp_s) for fr in frames],
        "has_reference": reference is not None,
    }
    blobs = [np.ascontiguousarray(stack.astype(_DTYPES[dtype])).tobytes()]
    if reference is not None:
        ref = np.asarray(reference, dtype=float)
        if ref.shape != shape:
            raise DataError("reference shape must match the frames")
        blobs.append(np.ascontiguousarray(ref.astype("<f8")).tobytes())
    _atomic_write(path, _pack(CUBE_MAGIC, header, blobs))


def read_frames(path: str):
    """Returns (frames list, reference image or None)."""
    header, buf = _unpack(path, CUBE_MAGIC)
    if header.get("kind") != "frames":
        raise DataError(f"{path}: container holds {header.get('kind')!r}, not frames")
    dims = header["dims"]
    stack, off = _take(buf, 0, header["dtype"], dims)
    if header["dtype"] == "u32":
        stack = stack.astype(np.int64)
    else:
        stack = stack.astype(np.float64)
    reference = None
    if header.get("has_reference"):
        reference, off = _take(buf, off, "f64", dims[1:])
        reference = reference.astype(np.float64)
    stamps = header["timestamps_s"]
    frames = [
        Frame(
            counts=stack[i],
            exposure_s=header["exposure_s"],
            timestamp_s=float(stamps[i]),
        )
        for i in range(dims[0])
    ]
    return frames, reference


def write_map(path: str, cmap: CalibrationMap):
    header = {
        "kind": "calibration-map",
        "dims": list(cmap.image_shape),
        "freq_axis_hz": [int(f) for f in cmap.freq_axis_hz],
        "n_p": [int(v) for v in cmap.n_p],
        "valid": [int(v) for v in cmap.valid],
        "low_confidence": [int(v) for v in cmap.low_confidence],
        "branch": cmap.branch,
        "threshold_sigma": float(cmap.threshold_sigma),
    }
    blob = np.ascontiguousarray(cmap.pixel_bin.astype("<i4")).tobytes()
    _atomic_write(path, _pack(MAP_MAGIC, header, [blob]))


def read_map(path: str) -> CalibrationMap:
    header, buf = _unpack(path, MAP_MAGIC)
    dims = header["dims"]
    n = dims[0] * dims[1]
    if len(buf) < 4 * n:
        raise DataError(f"{path}: truncated pixel index payload")
    pixel_bin = np.frombuffer(buf[: 4 * n], dtype="<i4").reshape(dims)
    return CalibrationMap(
        freq_axis_hz=np.asarray(header["freq_axis_hz"], dtype=np.int64),
        pixel_bin=pixel_bin.astype(np.int32),
        n_p=np.asarray(header["n_p"], dtype=np.int64),
        branch=header["branch"],
        valid=np.asarray(header["valid"], dtype=bool),
        low_confidence=np.asarray(header["low_confidence"], dtype=bool),
        threshold_sigma=header["threshold_sigma"],
    )


def write_spectrum_csv(path: str, spectrum: Spectrum):
    lines = ["frequency_hz,value,sigma,n_p,valid"]
    for i in range(spectrum.n_bins):
        lines.append(
            "%d,%.17g,%.17g,%d,%d"
            % (
                spectrum.freq_axis_hz[i],
                spectrum.values[i],
                spectrum.sigma[i],
                spectrum.n_p[i],
                1 if spectrum.valid[i] else 0,
            )
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_spectrum_csv(path: str, normalization: str = "contrast") -> Spectrum:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "frequency_hz,value,sigma,n_p,valid":
            raise DataError(f"{path}: unexpected CSV header {header!r}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not rows:
        raise DataError(f"{path}: empty spectrum")
    cols = list(zip(*rows))
    return Spectrum(
        freq_axis_hz=np.asarray([int(v) for v in cols[0]], dtype=np.int64),
        values=np.asarray([float(v) for v in cols[1]]),
        sigma=np.asarray([float(v) for v in cols[2]]),
        n_p=np.asarray([int(v) for v in cols[3]], dtype=np.int64),
        valid=np.asarray([v == "1" for v in cols[4]], dtype=bool),
        normalization=normalization,
    )


def write_spectrogram_csv(path: str, sg):
    head = "time_s," + ",".join(str(int(f)) for f in sg.freq_axis_hz)
    lines = [head]
    for i, t in enumerate(sg.time_axis_s):
        lines.append(
            "%.9g," % t + ",".join("%.17g" % v for v in sg.values[i])
        )
    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def read_spectrogram_csv(path: str):
    from .analysis import Spectrogram

    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "time_s":
            raise DataError(f"{path}: unexpected spectrogram header")
        freqs = np.asarray([int(v) for v in header[1:]], dtype=np.int64)
        times = []
        rows = []
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            times.append(float(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    return Spectrogram(
        freq_axis_hz=freqs,
        time_axis_s=np.asarray(times),
        values=np.asarray(rows),
    )


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: str, obj):
    data = json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n"
    _atomic_write(path, data.encode())


def tones_to_dicts(tones):
    return [
        {
            "frequency_hz": t.frequency_hz,
            "contrast": t.contrast,
            "snr": t.snr,
            "first_seen_s": t.first_seen_s,
            "last_seen_s": t.last_seen_s,
        }
        for t in tones
    ]
