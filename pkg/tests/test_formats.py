import numpy as np
import pytest

from reside.data import MaskSpec, gen_mask
from reside.errors import FormatError
from reside.formats import (
    grid_from_bytes,
    grid_to_bytes,
    mask_from_bytes,
    mask_to_bytes,
    read_grid,
    read_mask,
    write_grid,
    write_mask,
    write_pgm,
)

from .conftest import crandn


def test_grid_roundtrip_bit_exact(tmp_path, rng):
    x = crandn(rng, (17, 9))
    write_grid(tmp_path / "x.rsdg", x)
    back = read_grid(tmp_path / "x.rsdg")
    assert back.tobytes() == x.tobytes()


def test_grid_header_layout(rng):
    raw = grid_to_bytes(crandn(rng, (3, 5)), dtype=0)
    assert raw[:4] == b"RSDG"
    assert int.from_bytes(raw[4:6], "little") == 1
    assert int.from_bytes(raw[6:10], "little") == 3
    assert int.from_bytes(raw[10:14], "little") == 5
    assert raw[14] == 0
    assert len(raw) == 15 + 15 * 8 + 4


def test_complex64_roundtrip_precision(rng):
    x = crandn(rng, (20, 20))
    back = grid_from_bytes(grid_to_bytes(x, dtype=0))
    np.testing.assert_allclose(back, x, rtol=1e-6, atol=1e-7)
    assert grid_from_bytes(grid_to_bytes(back, dtype=1)).tobytes() == back.tobytes()


def test_truncated_grid_names_lengths(rng):
    raw = grid_to_bytes(crandn(rng, (4, 4)))
    with pytest.raises(FormatError, match=r"expected \d+ bytes, got \d+"):
        grid_from_bytes(raw[:-5])
    with pytest.raises(FormatError, match="trailing"):
        grid_from_bytes(raw + b"\0")
    with pytest.raises(FormatError, match="magic"):
        grid_from_bytes(b"XXXX" + raw[4:])


def test_mask_roundtrip_and_centred_storage(tmp_path):
    mask = gen_mask(MaskSpec("m1", 2.0, 8, 5), 32, 24)
    write_mask(tmp_path / "m.rsdm", mask)
    back = read_mask(tmp_path / "m.rsdm")
    np.testing.assert_array_equal(back.keep, mask.keep)
    raw = mask_to_bytes(mask)
    payload = np.frombuffer(raw[14:-4], np.uint8).reshape(32, 24)
    np.testing.assert_array_equal(payload.astype(bool), np.fft.fftshift(mask.keep))


def test_mask_rejects_bad_bytes():
    mask = gen_mask(MaskSpec("full"), 4, 4)
    raw = bytearray(mask_to_bytes(mask))
    with pytest.raises(FormatError):
        mask_from_bytes(bytes(raw[:10]))
    raw[20] = 7
    with pytest.raises(FormatError):
        mask_from_bytes(bytes(raw))


def test_pgm_dump(tmp_path, rng):
    write_pgm(tmp_path / "a.pgm", crandn(rng, (6, 4)))
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n4 6\n255\n") and len(data) == 11 + 24


def test_io_errors_carry_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        read_grid(tmp_path / "missing.rsdg")
