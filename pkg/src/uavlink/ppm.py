"""Binary PPM/PGM (P5/P6) image I/O, 8-bit.

P5 loads as grayscale directly; P6 converts to grayscale with BT.601 luma
weights. Writing always emits P5. Values cross the API as floats in [0, 1].
"""

import numpy as np

_LUMA = np.array([0.299, 0.587, 0.114])


def read_image(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, fields, offset = _parse_header(data)
    width, height, maxval = fields
    if maxval > 255:
        raise ValueError("only 8-bit PPM/PGM supported")
    if magic == b"P5":
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=offset)
        img = raw.reshape(height, width).astype(float)
    elif magic == b"P6":
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=offset)
        img = raw.reshape(height, width, 3).astype(float) @ _LUMA
    else:
        raise ValueError(f"unsupported magic {magic!r}; need binary P5 or P6")
    return np.clip(img / maxval, 0.0, 1.0)


def _parse_header(data: bytes):
    """Magic + three decimal fields, honoring '#' comments and whitespace."""
    magic = data[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    return magic, tuple(fields), pos + 1  # single whitespace byte after maxval


def write_image(path: str, img: np.ndarray):
    """Write a float [0, 1] grayscale image as binary P5."""
    levels = np.round(np.clip(np.asarray(img, dtype=float), 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = levels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(levels.tobytes())
