"""Binary file formats for grids, masks and denoiser checkpoints.

Grid (``RSDG``) and mask (``RSDM``) files are little-endian::

    magic[4] version:u16 rows:u32 cols:u32 [dtype:u8]  payload  crc32:u32

Grid dtype 0 is complex64, 1 is complex128, stored as interleaved (re, im).
Mask payload is one byte (0/1) per location in centred (DC-at-centre) layout;
:func:`read_mask` converts back to the DC-at-(0, 0) layout used in memory.
The trailing CRC-32 covers every preceding byte.
"""

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError
from .operator import SamplingMask, as_grid

GRID_MAGIC = b"RSDG"
MASK_MAGIC = b"RSDM"
NET_MAGIC = b"RSDN"
VERSION = 1

_GRID_HEADER = struct.Struct("<4sHIIB")
_MASK_HEADER = struct.Struct("<4sHII")
_CRC = struct.Struct("<I")
_GRID_DTYPES = {0: np.dtype("<c8"), 1: np.dtype("<c16")}


def _seal(body):
    return body + _CRC.pack(zlib.crc32(body))


def _check_frame(raw, header_size, payload_size, kind):
    expected = header_size + payload_size + _CRC.size
    if len(raw) < expected:
        raise FormatError(
            f"truncated {kind} file: expected {expected} bytes, got {len(raw)}", len(raw)
        )
    if len(raw) > expected:
        raise FormatError(
            f"trailing garbage in {kind} file: expected {expected} bytes, got {len(raw)}", expected
        )
    (stored,) = _CRC.unpack_from(raw, expected - _CRC.size)
    if zlib.crc32(raw[: expected - _CRC.size]) != stored:
        raise FormatError(f"{kind} checksum mismatch", expected - _CRC.size)


def _check_header(raw, header, magic, kind):
    if len(raw) < header.size:
        raise FormatError(
            f"truncated {kind} header: expected {header.size} bytes, got {len(raw)}", len(raw)
        )
    fields = header.unpack_from(raw, 0)
    if fields[0] != magic:
        raise FormatError(f"bad magic {fields[0]!r}, expected {magic!r}", 0)
    if fields[1] != VERSION:
        raise FormatError(f"unsupported {kind} version {fields[1]}", 4)
    if fields[2] == 0 or fields[3] == 0:
        raise FormatError(f"{kind} has a zero dimension ({fields[2]}x{fields[3]})", 6)
    return fields


def grid_to_bytes(grid, dtype=1):
    grid = as_grid(grid)
    if dtype not in _GRID_DTYPES:
        raise ValueError(f"grid dtype must be 0 (complex64) or 1 (complex128), got {dtype}")
    rows, cols = grid.shape
    header = _GRID_HEADER.pack(GRID_MAGIC, VERSION, rows, cols, dtype)
    payload = np.ascontiguousarray(grid, dtype=_GRID_DTYPES[dtype]).tobytes()
    return _seal(header + payload)


def grid_from_bytes(raw):
    raw = bytes(raw)
    _, _, rows, cols, dtype = _check_header(raw, _GRID_HEADER, GRID_MAGIC, "grid")
    if dtype not in _GRID_DTYPES:
        raise FormatError(f"unknown grid dtype code {dtype}", 14)
    dt = _GRID_DTYPES[dtype]
    _check_frame(raw, _GRID_HEADER.size, rows * cols * dt.itemsize, "grid")
    data = np.frombuffer(raw, dtype=dt, count=rows * cols, offset=_GRID_HEADER.size)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data))[0])
        raise FormatError("grid payload holds a non-finite value", _GRID_HEADER.size + bad * dt.itemsize)
    return data.reshape(rows, cols).astype(np.complex128)


def mask_to_bytes(mask):
    centred = np.fft.fftshift(mask.keep)
    header = _MASK_HEADER.pack(MASK_MAGIC, VERSION, mask.rows, mask.cols)
    return _seal(header + centred.astype(np.uint8).tobytes())


def mask_from_bytes(raw):
    raw = bytes(raw)
    _, _, rows, cols = _check_header(raw, _MASK_HEADER, MASK_MAGIC, "mask")
    _check_frame(raw, _MASK_HEADER.size, rows * cols, "mask")
    payload = np.frombuffer(raw, dtype=np.uint8, count=rows * cols, offset=_MASK_HEADER.size)
    if payload.max() > 1:
        bad = int(np.flatnonzero(payload > 1)[0])
        raise FormatError("mask payload byte is not 0 or 1", _MASK_HEADER.size + bad)
    if not payload.any():
        raise FormatError("mask samples no k-space location", _MASK_HEADER.size)
    return SamplingMask(np.fft.ifftshift(payload.reshape(rows, cols).astype(bool)))


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path, data):
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_grid(path, grid, dtype=1):
    _write(path, grid_to_bytes(grid, dtype))


def read_grid(path):
    return grid_from_bytes(_read(path))


def write_mask(path, mask):
    _write(path, mask_to_bytes(mask))


def read_mask(path):
    return mask_from_bytes(_read(path))


def write_pgm(path, image, scale=None):
    """Dump ``|image|`` as an 8-bit binary PGM, linearly mapped to [0, 255].

    ``scale`` is the magnitude mapped to 255 (defaults to the image maximum).
    """
    mag = np.abs(np.asarray(image))
    top = float(mag.max()) if scale is None else float(scale)
    px = np.zeros(mag.shape) if top <= 0 else np.clip(mag / top, 0.0, 1.0) * 255.0
    rows, cols = mag.shape
    _write(path, f"P5\n{cols} {rows}\n255\n".encode() + np.rint(px).astype(np.uint8).tobytes())
