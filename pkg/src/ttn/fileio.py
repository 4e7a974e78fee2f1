"""Low-level file plumbing: atomic writes, the binary tensor container, images.

All binary artifacts share one container layout: 8 magic bytes, a uint64
little-endian header length, a UTF-8 JSON header, then raw little-endian
float64 payloads whose shapes the caller derives from the header. Every
writer goes through atomic_write so a crashed run never leaves a half-written
artifact behind.
"""

from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile

import numpy as np

from .errors import CorruptFile, DataError, FormatVersionMismatch

MAGIC_LDA = b"TTNLDA1\x00"
MAGIC_NET = b"TTNNET1\x00"
MAGIC_FEATURES = b"TTNFEA1\x00"


def ttn_threads():
    """Worker cap from the TTN_THREADS environment variable (default 1)."""
    raw = os.environ.get("TTN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise DataError(f"TTN_THREADS must be an integer, got {raw!r}")
    return max(1, n)


@contextlib.contextmanager
def atomic_write(path, mode="wb"):
    """Write to a temp file in the target directory, then rename into place.

    The target is only ever replaced by a fully written file; on any error the
    temp file is removed and the previous target (if any) is left untouched.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=os.path.basename(path) + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def dump_json(obj):
    """Canonical JSON bytes: sorted keys, no whitespace drift between runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def write_header(fh, magic, header):
    body = dump_json(header)
    fh.write(magic)
    fh.write(struct.pack("<Q", len(body)))
    fh.write(body)


def read_header(fh, magic):
    got = fh.read(len(magic))
    if len(got) < len(magic):
        raise CorruptFile("file too short to contain a header")
    if got != magic:
        raise FormatVersionMismatch(
            f"expected magic {magic!r}, found {got!r}"
        )
    raw_len = fh.read(8)
    if len(raw_len) < 8:
        raise CorruptFile("truncated header length")
    (n,) = struct.unpack("<Q", raw_len)
    body = fh.read(n)
    if len(body) < n:
        raise CorruptFile("truncated JSON header")
    try:
        return json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"unreadable JSON header: {exc}")


def write_array(fh, arr):
    fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_array(fh, shape):
    count = int(np.prod(shape)) if shape else 1
    raw = fh.read(count * 8)
    if len(raw) < count * 8:
        raise CorruptFile("truncated tensor payload")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()


def expect_eof(fh):
    if fh.read(1) != b"":
        raise CorruptFile("trailing bytes after declared payload")


def write_tensor_file(path, magic, header, arrays):
    """One-shot container write: header plus arrays in the given order.

    The header gains a "shapes" field recording each array's shape so the
    reader needs no out-of-band knowledge.
    """
    header = dict(header)
    header["shapes"] = [list(a.shape) for a in arrays]
    with atomic_write(path) as fh:
        write_header(fh, magic, header)
        for arr in arrays:
            write_array(fh, arr)


def read_tensor_file(path, magic):
    with open(path, "rb") as fh:
        header = read_header(fh, magic)
        if "shapes" not in header:
            raise CorruptFile("header lacks tensor shapes")
        arrays = [read_array(fh, tuple(s)) for s in header["shapes"]]
        expect_eof(fh)
    return header, arrays


# ---------------------------------------------------------------------------
# Images. PPM (binary P6, maxval 255) is the native format; PNG decoding is a
# narrow adapter around Pillow and only needed when a corpus references .png
# files.


def _read_ppm_token(fh):
    # Tokens are separated by whitespace; '#' starts a comment to end of line.
    token = b""
    while True:
        ch = fh.read(1)
        if ch == b"":
            raise CorruptFile("unexpected end of PPM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = fh.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_ppm(path):
    """Decode a binary PPM (P6) file to a float64 (3, H, W) array in [0, 1]."""
    with open(path, "rb") as fh:
        if fh.read(2) != b"P6":
            raise FormatVersionMismatch(f"{path}: not a binary PPM (P6) file")
        width = int(_read_ppm_token(fh))
        height = int(_read_ppm_token(fh))
        maxval = int(_read_ppm_token(fh))
        if maxval != 255:
            raise CorruptFile(f"{path}: only maxval 255 is supported, got {maxval}")
        raw = fh.read(width * height * 3)
        if len(raw) < width * height * 3:
            raise CorruptFile(f"{path}: truncated pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, image):
    """Write a (3, H, W) float array in [0, 1] as binary PPM."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"expected a (3, H, W) image, got shape {image.shape}")
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    _, h, w = pixels.shape
    with atomic_write(path) as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(pixels.transpose(1, 2, 0).tobytes())


def _read_png(path):
    try:
        from PIL import Image
    except ImportError:
        raise DataError("PNG decoding requires the optional Pillow dependency")
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    return rgb.transpose(2, 0, 1) / 255.0


def decode_image(path):
    """Decode an image file by extension: .ppm natively, .png via Pillow."""
    lower = os.fspath(path).lower()
    if lower.endswith(".ppm"):
        return read_ppm(path)
    if lower.endswith(".png"):
        return _read_png(path)
    raise DataError(f"unsupported image format: {path}")
