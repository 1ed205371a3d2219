"""Minimal binary PGM (P5, 8-bit) reader and writer.

Images travel through the pipeline as float arrays in [0, 1]; pixel
values are scaled back to 0..255 on write with round-half-away-from-zero.
"""

import numpy as np


def _next_token(data, pos):
    """Return the next whitespace-delimited token, skipping # comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            eol = data.find(b"\n", pos)
            pos = n if eol < 0 else eol + 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PGM header")
    return data[start:pos], pos


def read_pgm(path):
    """Read a binary 8-bit PGM file into a float array scaled to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        fields.append(int(tok))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError(f"{path}: bad dimensions {width} x {height}")
    if not 0 < maxval < 256:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 8-bit)")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise ValueError(f"{path}: truncated raster")
    img = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return img.astype(np.float64) / maxval


def write_pgm(path, img):
    """Write a float image in [0, 1] as binary 8-bit PGM.

    Values are clipped to [0, 1], scaled by 255 and rounded half away
    from zero.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got ndim={img.ndim}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    scaled = np.clip(img, 0.0, 1.0) * 255.0
    pixels = np.floor(scaled + 0.5).astype(np.uint8)
    height, width = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
