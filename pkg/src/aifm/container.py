"""Binary container for volumes, vector volumes and trace sets.

Every file is an 80-byte little-endian header followed by the payload::

    offset size  field
    0      8     magic            b"AIFMVOL\\x00"
    8      2     version          uint16, currently 1
    10     2     kind             uint16: 1 scalar volume, 2 vector volume, 3 traces
    12     2     element type     uint16: 1 float32, 2 float64
    14     2     reserved         zero
    16     24    dims             3 x uint64: (n1, n2, n3) or (M, N, n_t)
    40     4     components       uint32: 1, or 3 for vector volumes
    44     4     padding          zero
    48     8     spacing          float64 meters (traces: sample interval dt)
    56     24    origin           3 x float64 meters (traces: zeros)

The payload holds ``components * d1 * d2 * d3`` elements, component-major,
then C order within each component (the last dim varies fastest).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .volume import DomainSpec, ScalarVolume, VectorVolume

MAGIC = b"AIFMVOL\x00"
VERSION = 1
HEADER = struct.Struct("<8sHHHH3QI4xd3d")
KIND_SCALAR, KIND_VECTOR, KIND_TRACES = 1, 2, 3
ELEM_F32, ELEM_F64 = 1, 2
_DTYPES = {ELEM_F32: np.dtype("<f4"), ELEM_F64: np.dtype("<f8")}
MAX_ELEMENTS = 1 << 36

assert HEADER.size == 80


def _write(path, kind, dims, ncomp, spacing, origin, payload: np.ndarray, elem: int):
    dtype = _DTYPES[elem]
    header = HEADER.pack(MAGIC, VERSION, kind, elem, 0, *dims, ncomp, spacing, *origin)
    data = np.ascontiguousarray(payload, dtype=dtype)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes(order="C"))


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    return _parse_header(raw)


def _parse_header(raw: bytes) -> dict:
    if len(raw) < HEADER.size:
        raise FormatError(f"header truncated: {len(raw)} of {HEADER.size} bytes", len(raw))
    magic, version, kind, elem, _, d1, d2, d3, ncomp, spacing, o1, o2, o3 = HEADER.unpack(
        raw[: HEADER.size]
    )
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 8)
    if kind not in (KIND_SCALAR, KIND_VECTOR, KIND_TRACES):
        raise FormatError(f"unknown kind {kind}", 10)
    if elem not in _DTYPES:
        raise FormatError(f"unknown element type {elem}", 12)
    dims = (d1, d2, d3)
    if min(dims) == 0:
        raise FormatError(f"zero dimension in {dims}", 16)
    if ncomp not in (1, 3) or (kind == KIND_VECTOR) != (ncomp == 3):
        raise FormatError(f"component count {ncomp} inconsistent with kind {kind}", 40)
    count = ncomp
    for d in dims:
        count *= d
        if count > MAX_ELEMENTS:
            raise FormatError(f"dimensions {dims} x {ncomp} overflow the element limit", 16)
    if kind != KIND_TRACES and not spacing > 0:
        raise FormatError(f"non-positive spacing {spacing}", 48)
    return {
        "kind": kind,
        "dtype": _DTYPES[elem],
        "dims": dims,
        "ncomp": ncomp,
        "spacing": spacing,
        "origin": (o1, o2, o3),
        "count": count,
    }


def _read(path, expect_kind: int):
    raw = Path(path).read_bytes()
    hdr = _parse_header(raw)
    if hdr["kind"] != expect_kind:
        raise FormatError(f"expected container kind {expect_kind}, found {hdr['kind']}", 10)
    expected = hdr["count"] * hdr["dtype"].itemsize
    actual = len(raw) - HEADER.size
    if actual != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, found {actual}",
            HEADER.size + min(actual, expected),
        )
    data = np.frombuffer(raw, dtype=hdr["dtype"], offset=HEADER.size).astype(np.float64)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data))[0])
        raise FormatError("non-finite payload value", HEADER.size + bad * hdr["dtype"].itemsize)
    return hdr, data


def write_volume(vol: ScalarVolume, path, elem: int = ELEM_F32) -> None:
    """Write a scalar volume; values are stored as float32 unless ``elem`` says otherwise."""
    d = vol.domain
    _write(path, KIND_SCALAR, d.shape, 1, d.spacing, d.origin, vol.values, elem)


def read_volume(path) -> ScalarVolume:
    hdr, data = _read(path, KIND_SCALAR)
    domain = DomainSpec.from_shape(hdr["dims"], hdr["spacing"], hdr["origin"])
    return ScalarVolume(domain, data.reshape(hdr["dims"]))


def write_vector_volume(vec: VectorVolume, path, elem: int = ELEM_F32) -> None:
    d = vec.domain
    _write(path, KIND_VECTOR, d.shape, 3, d.spacing, d.origin, vec.as_array(), elem)


def read_vector_volume(path) -> VectorVolume:
    hdr, data = _read(path, KIND_VECTOR)
    domain = DomainSpec.from_shape(hdr["dims"], hdr["spacing"], hdr["origin"])
    return VectorVolume.from_array(domain, data.reshape((3,) + hdr["dims"]))


def write_traces(samples: np.ndarray, dt: float, path, elem: int = ELEM_F64) -> None:
    """Write an (M, N, n_t) trace array. Float64 by default so data round-trips exactly."""
    samples = np.asarray(samples)
    if samples.ndim != 3:
        raise ValueError("trace samples must have shape (M, N, n_t)")
    _write(path, KIND_TRACES, samples.shape, 1, dt, (0.0, 0.0, 0.0), samples, elem)


def read_traces(path) -> tuple[np.ndarray, float]:
    hdr, data = _read(path, KIND_TRACES)
    return data.reshape(hdr["dims"]), hdr["spacing"]


def export_vtk(vol: ScalarVolume | VectorVolume, path, name: str = "field") -> None:
    """Legacy VTK structured-points text file (x varies fastest, as VTK expects)."""
    d = vol.domain
    n1, n2, n3 = d.shape
    lines = [
        "# vtk DataFile Version 3.0",
        name,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {n1} {n2} {n3}",
        "ORIGIN {} {} {}".format(*d.origin),
        f"SPACING {d.spacing} {d.spacing} {d.spacing}",
        f"POINT_DATA {d.size}",
    ]
    if isinstance(vol, VectorVolume):
        lines.append(f"VECTORS {name} double")
        arr = vol.as_array().transpose(3, 2, 1, 0).reshape(-1, 3)
        lines.extend(f"{a:.9g} {b:.9g} {c:.9g}" for a, b, c in arr)
    else:
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines.extend(f"{v:.9g}" for v in vol.values.transpose(2, 1, 0).ravel())
    Path(path).write_text("\n".join(lines) + "\n")


def export_trace_csv(trace: np.ndarray, dt: float, path, header=("t", "value")) -> None:
    """One 1D trace (or several as columns) against time."""
    trace = np.atleast_2d(trace)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = list(header) if trace.shape[0] == 1 else ["t"] + [f"trace{k}" for k in range(trace.shape[0])]
        w.writerow(cols)
        for n in range(trace.shape[1]):
            w.writerow([repr(n * dt)] + [repr(float(v)) for v in trace[:, n]])
