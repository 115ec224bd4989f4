"""Binary PPM (P6) image I/O; images are (H,W,3) float arrays in [0,1]."""

import numpy as np

from .errors import ParseError, ValidationError


def quantize(image):
    """8-bit quantization used for every image written: round(255*clamp(c,0,1))."""
    arr = np.asarray(image, dtype=np.float64)
    return np.round(255.0 * np.clip(arr, 0.0, 1.0)).astype(np.uint8)


def write_ppm(path, image):
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"expected an (H,W,3) image, got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantize(arr).tobytes())


def read_ppm(path):
    """Load a P6 file to floats in [0,1]; values are clamped by construction."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P6"):
        raise ParseError(f"{path}: not a binary PPM (P6) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment runs to end of line
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ParseError(f"{path}: bad PPM header") from exc
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 is supported, got {maxval}")
    expected = w * h * 3
    data = np.frombuffer(blob, dtype=np.uint8, count=expected, offset=pos)
    if data.size != expected:
        raise ParseError(f"{path}: truncated pixel data")
    return data.reshape(h, w, 3).astype(np.float64) / 255.0
