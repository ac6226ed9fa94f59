"""Raster image container and PGM/PPM/PNG file I/O.

PGM (P5) and PPM (P6) with maxval <= 255 are read and written bit-exactly.
8-bit non-interlaced grayscale/RGB PNG is supported for reading only.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Raised when a file is not a supported image or uses an unsupported feature."""


@dataclass(eq=False)
class RasterImage:
    """8-bit image stored as a ``(height, width, channels)`` uint8 array.

    The array is C-contiguous so that ``pixels.tobytes()`` is the row-major,
    channel-interleaved sample stream.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("pixel samples must lie in 0..255")
            px = px.astype(np.uint8)
        self.pixels = np.ascontiguousarray(px)

    @classmethod
    def from_bytes(cls, width: int, height: int, channels: int, data) -> "RasterImage":
        buf = np.frombuffer(bytes(data), dtype=np.uint8)
        if buf.size != width * height * channels:
            raise ValueError(
                f"data length {buf.size} != {width}x{height}x{channels}"
            )
        return cls(buf.reshape(height, width, channels).copy())

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    @property
    def gray(self) -> np.ndarray:
        """2-D view of a single-channel image."""
        if self.channels != 1:
            raise ValueError("image is not single-channel")
        return self.pixels[:, :, 0]

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(
            self.pixels, other.pixels
        )

    def __repr__(self):
        return f"RasterImage({self.width}x{self.height}x{self.channels})"


# --- Netpbm ---------------------------------------------------------------

def _read_netpbm(raw: bytes, path) -> RasterImage:
    magic = raw[:2]
    channels = 1 if magic == b"P5" else 3
    fields = []
    pos = 2
    # header: width, height, maxval separated by whitespace, '#' comments allowed
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(raw):
            raise ImageFormatError(f"{path}: truncated header")
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: malformed header")
        fields.append(int(raw[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: invalid dimensions {width}x{height}")
    if maxval > 255:
        raise ImageFormatError(
            f"{path}: unsupported bit depth (maxval {maxval}); only 8-bit samples are supported"
        )
    if maxval < 1:
        raise ImageFormatError(f"{path}: invalid maxval {maxval}")
    n = width * height * channels
    body = raw[pos : pos + n]
    if len(body) != n:
        raise ImageFormatError(f"{path}: truncated pixel data ({len(body)} of {n} bytes)")
    return RasterImage.from_bytes(width, height, channels, body)


# --- PNG (read only) --------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(data: bytes, width: int, height: int, bpp: int) -> np.ndarray:
    stride = width * bpp
    out = np.zeros((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    pos = 0
    for y in range(height):
        ftype = data[pos]
        line = np.frombuffer(data, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int64)
        pos += stride + 1
        if ftype == 0:
            cur = line
        elif ftype == 1:
            cur = line.copy()
            for c in range(bpp):
                cur[c::bpp] = np.cumsum(line[c::bpp]) & 0xFF
        elif ftype == 2:
            cur = (line + prev) & 0xFF
        elif ftype in (3, 4):
            cur = line.copy()
            lst = cur.tolist()
            up = prev.tolist()
            for i in range(stride):
                a = lst[i - bpp] if i >= bpp else 0
                if ftype == 3:
                    lst[i] = (lst[i] + ((a + up[i]) >> 1)) & 0xFF
                else:
                    c = up[i - bpp] if i >= bpp else 0
                    lst[i] = (lst[i] + _paeth(a, up[i], c)) & 0xFF
            cur = np.array(lst, dtype=np.int64)
        else:
            raise ImageFormatError(f"invalid PNG filter type {ftype} on row {y}")
        out[y] = cur
        prev = cur
    return out


def _read_png(raw: bytes, path) -> RasterImage:
    pos = 8
    ihdr = None
    idat = []
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise ImageFormatError(f"{path}: truncated PNG chunk")
        length, ctype = struct.unpack(">I4s", raw[pos : pos + 8])
        payload = raw[pos + 8 : pos + 8 + length]
        if len(payload) != length:
            raise ImageFormatError(f"{path}: truncated PNG chunk {ctype!r}")
        pos += 12 + length
        if ctype == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif ctype == b"IDAT":
            idat.append(payload)
        elif ctype == b"IEND":
            break
    if ihdr is None:
        raise ImageFormatError(f"{path}: missing IHDR chunk")
    width, height, depth, color, _comp, _filt, interlace = ihdr
    if depth != 8:
        raise ImageFormatError(f"{path}: unsupported PNG bit depth {depth}")
    if color not in (0, 2):
        raise ImageFormatError(
            f"{path}: unsupported PNG color type {color}; only gray (0) and RGB (2)"
        )
    if interlace:
        raise ImageFormatError(f"{path}: interlaced PNG is not supported")
    channels = 1 if color == 0 else 3
    try:
        data = zlib.decompress(b"".join(idat))
    except zlib.error as exc:
        raise ImageFormatError(f"{path}: corrupt PNG data: {exc}") from None
    if len(data) < height * (width * channels + 1):
        raise ImageFormatError(f"{path}: truncated PNG image data")
    rows = _unfilter(data, width, height, channels)
    return RasterImage(rows.reshape(height, width, channels))


# --- public API ------------------------------------------------------------

def load_image(path) -> RasterImage:
    """Read a P5/P6 Netpbm file or an 8-bit gray/RGB PNG."""
    raw = Path(path).read_bytes()
    if raw[:2] in (b"P5", b"P6"):
        return _read_netpbm(raw, path)
    if raw[:8] == _PNG_SIG:
        return _read_png(raw, path)
    raise ImageFormatError(f"{path}: unrecognized image format (magic {raw[:2]!r})")


def save_image(img: RasterImage, path) -> None:
    """Write ``img`` as binary PGM (1 channel) or PPM (3 channels), maxval 255."""
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (img.width, img.height)
    Path(path).write_bytes(header + img.data)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


GRAY_WEIGHTS = (0.2989, 0.5870, 0.1140)


def to_grayscale(img: RasterImage) -> RasterImage:
    if img.channels == 1:
        return img
    px = img.pixels.astype(np.float64)
    r, g, b = GRAY_WEIGHTS
    gray = r * px[:, :, 0] + g * px[:, :, 1] + b * px[:, :, 2]
    gray = np.clip(round_half_away(gray), 0, 255).astype(np.uint8)
    return RasterImage(gray)
