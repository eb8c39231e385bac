"""Radiance RGBE (.hdr) reader and writer.

Reads flat and new-style RLE scanlines; writes flat scanlines so output
bytes are trivially reproducible.  Pixel data is linear RGB float64.
"""
from __future__ import annotations

import numpy as np

from ..errors import FormatError

_SIGNATURES = (b"#?RADIANCE", b"#?RGBE")


def _rgbe_to_float(rgbe: np.ndarray) -> np.ndarray:
    rgbe = rgbe.astype(np.int32)
    exp = rgbe[..., 3]
    scale = np.where(exp == 0, 0.0, np.ldexp(1.0, exp - 136))
    return rgbe[..., :3] * scale[..., None]


def _float_to_rgbe(rgb: np.ndarray) -> np.ndarray:
    rgb = np.maximum(np.asarray(rgb, dtype=np.float64), 0.0)
    v = rgb.max(axis=-1)
    out = np.zeros(rgb.shape[:-1] + (4,), dtype=np.uint8)
    nz = v >= 1e-32
    if np.any(nz):
        mant, exp = np.frexp(v[nz])
        scale = mant * 256.0 / v[nz]
        quant = np.minimum(np.floor(rgb[nz] * scale[..., None]), 255.0)
        out[nz, :3] = quant.astype(np.uint8)
        out[nz, 3] = (exp + 128).astype(np.uint8)
    return out


def read_hdr(path) -> np.ndarray:
    """Read a Radiance HDR file into an (H, W, 3) linear float64 array."""
    with open(path, "rb") as fh:
        data = fh.read()

    if not any(data.startswith(sig) for sig in _SIGNATURES):
        raise FormatError(f"{path}: not a Radiance HDR file")

    # header ends at the first blank line; the resolution line follows
    pos = 0
    while True:
        eol = data.find(b"\n", pos)
        if eol < 0:
            raise FormatError(f"{path}: truncated header")
        line = data[pos:eol]
        pos = eol + 1
        if line == b"":
            break
    eol = data.find(b"\n", pos)
    if eol < 0:
        raise FormatError(f"{path}: missing resolution line")
    res = data[pos:eol].split()
    pos = eol + 1
    if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
        raise FormatError(f"{path}: unsupported resolution line {b' '.join(res)!r}")
    height, width = int(res[1]), int(res[3])
    if height < 1 or width < 1:
        raise FormatError(f"{path}: bad dimensions {width}x{height}")

    out = np.zeros((height, width, 4), dtype=np.uint8)
    for y in range(height):
        pos = _read_scanline(data, pos, out[y], path)
    return _rgbe_to_float(out)


def _read_scanline(data: bytes, pos: int, row: np.ndarray, path) -> int:
    width = row.shape[0]
    if pos + 4 > len(data):
        raise FormatError(f"{path}: truncated scanline")
    b0, b1, b2, b3 = data[pos:pos + 4]
    if b0 == 2 and b1 == 2 and (b2 << 8 | b3) == width and width >= 8:
        # new-style RLE: four channel-separated runs
        pos += 4
        for ch in range(4):
            x = 0
            while x < width:
                if pos >= len(data):
                    raise FormatError(f"{path}: truncated RLE data")
                count = data[pos]
                pos += 1
                if count > 128:          # run of a repeated byte
                    run = count - 128
                    if pos >= len(data) or x + run > width:
                        raise FormatError(f"{path}: bad RLE run")
                    row[x:x + run, ch] = data[pos]
                    pos += 1
                    x += run
                else:                    # literal bytes
                    if count == 0 or x + count > width or pos + count > len(data):
                        raise FormatError(f"{path}: bad RLE literal")
                    row[x:x + count, ch] = np.frombuffer(
                        data[pos:pos + count], dtype=np.uint8)
                    pos += count
                    x += count
        return pos
    # flat RGBE records (old-style run lengths are not produced by this
    # package; literal records cover the files we read back)
    need = width * 4
    if pos + need > len(data):
        raise FormatError(f"{path}: truncated flat scanline")
    row[:] = np.frombuffer(data[pos:pos + need], dtype=np.uint8).reshape(width, 4)
    return pos + need


def write_hdr(path, image: np.ndarray) -> None:
    """Write linear RGB radiance as an uncompressed Radiance HDR file."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(f"expected (H, W, 3) image, got shape {image.shape}")
    if not np.all(np.isfinite(image)) or np.any(image < 0):
        raise FormatError("radiance values must be finite and non-negative")
    height, width = image.shape[:2]
    rgbe = _float_to_rgbe(image)
    magic = bytes([2, 2, (width >> 8) & 0xFF, width & 0xFF])
    with open(path, "wb") as fh:
        fh.write(b"#?RADIANCE\n")
        fh.write(b"FORMAT=32-bit_rle_rgbe\n")
        fh.write(b"\n")
        fh.write(f"-Y {height} +X {width}\n".encode("ascii"))
        for y in range(height):
            row = rgbe[y].tobytes()
            if 8 <= width < 32768 and row[:4] == magic:
                # flat row would mimic an RLE header; emit it as literal RLE
                fh.write(magic)
                for ch in range(4):
                    col = rgbe[y, :, ch].tobytes()
                    for x in range(0, width, 128):
                        chunk = col[x:x + 128]
                        fh.write(bytes([len(chunk)]))
                        fh.write(chunk)
            else:
                fh.write(row)
