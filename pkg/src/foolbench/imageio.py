"""Dependency-free image file I/O: binary PGM/PPM plus a montage helper.

Grayscale images are uint8 arrays of shape (H, W) or (H, W, 1); color images
are (H, W, 3). All writers emit binary (P5/P6) variants with maxval 255.
"""

import numpy as np

from .errors import FormatError, DataError, ShapeError


def write_pgm(path, image):
    """Write a grayscale uint8 image as binary PGM."""
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim == 3:
        if arr.shape[2] != 1:
            raise DataError(f"write_pgm expects 1 channel, got {arr.shape[2]}")
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise DataError(f"write_pgm expects a 2-D image, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def write_ppm(path, image):
    """Write an RGB uint8 image as binary PPM."""
    arr = np.asarray(image, dtype=np.uint8)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DataError(f"write_ppm expects shape (H, W, 3), got {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())


def write_image(path, image):
    """Dispatch on channel count: 1 channel -> PGM, 3 channels -> PPM."""
    arr = np.asarray(image)
    if arr.ndim == 2 or arr.shape[2] == 1:
        write_pgm(path, arr)
    else:
        write_ppm(path, arr)


def _read_header_tokens(fh, count):
    # Netpbm headers are whitespace-separated tokens; '#' starts a comment.
    tokens = []
    while len(tokens) < count:
        line = fh.readline()
        if not line:
            raise FormatError("truncated netpbm header")
        text = line.split(b"#", 1)[0]
        tokens.extend(text.split())
    return tokens[:count]


def read_pgm(path):
    """Read a binary PGM file into a uint8 array of shape (H, W, 1)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != b"P5":
            raise FormatError(f"not a binary PGM file: magic {magic!r}")
        w, h, maxval = (int(t) for t in _read_header_tokens(fh, 3))
        if maxval != 255:
            raise FormatError(f"unsupported PGM maxval {maxval}")
        payload = fh.read(w * h)
    if len(payload) != w * h:
        raise FormatError(f"PGM payload has {len(payload)} bytes, expected {w * h}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 1).copy()


def read_ppm(path):
    """Read a binary PPM file into a uint8 array of shape (H, W, 3)."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
        if magic != b"P6":
            raise FormatError(f"not a binary PPM file: magic {magic!r}")
        w, h, maxval = (int(t) for t in _read_header_tokens(fh, 3))
        if maxval != 255:
            raise FormatError(f"unsupported PPM maxval {maxval}")
        payload = fh.read(w * h * 3)
    if len(payload) != w * h * 3:
        raise FormatError(f"PPM payload has {len(payload)} bytes, expected {w * h * 3}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


# 3x5 bitmap glyphs for caption strips; each glyph is 5 rows of 3 bits.
_FONT = {
    "0": (0b111, 0b101, 0b101, 0b101, 0b111),
    "1": (0b010, 0b110, 0b010, 0b010, 0b111),
    "2": (0b111, 0b001, 0b111, 0b100, 0b111),
    "3": (0b111, 0b001, 0b111, 0b001, 0b111),
    "4": (0b101, 0b101, 0b111, 0b001, 0b001),
    "5": (0b111, 0b100, 0b111, 0b001, 0b111),
    "6": (0b111, 0b100, 0b111, 0b101, 0b111),
    "7": (0b111, 0b001, 0b001, 0b010, 0b010),
    "8": (0b111, 0b101, 0b111, 0b101, 0b111),
    "9": (0b111, 0b101, 0b111, 0b001, 0b111),
    ".": (0b000, 0b000, 0b000, 0b000, 0b010),
    "%": (0b101, 0b001, 0b010, 0b100, 0b101),
    "-": (0b000, 0b000, 0b111, 0b000, 0b000),
    ":": (0b000, 0b010, 0b000, 0b010, 0b000),
    " ": (0b000, 0b000, 0b000, 0b000, 0b000),
    "a": (0b010, 0b101, 0b111, 0b101, 0b101),
    "b": (0b110, 0b101, 0b110, 0b101, 0b110),
    "c": (0b011, 0b100, 0b100, 0b100, 0b011),
    "d": (0b110, 0b101, 0b101, 0b101, 0b110),
    "e": (0b111, 0b100, 0b110, 0b100, 0b111),
    "f": (0b111, 0b100, 0b110, 0b100, 0b100),
    "g": (0b011, 0b100, 0b101, 0b101, 0b011),
    "h": (0b101, 0b101, 0b111, 0b101, 0b101),
    "i": (0b111, 0b010, 0b010, 0b010, 0b111),
    "j": (0b001, 0b001, 0b001, 0b101, 0b010),
    "k": (0b101, 0b110, 0b100, 0b110, 0b101),
    "l": (0b100, 0b100, 0b100, 0b100, 0b111),
    "m": (0b101, 0b111, 0b111, 0b101, 0b101),
    "n": (0b110, 0b101, 0b101, 0b101, 0b101),
    "o": (0b010, 0b101, 0b101, 0b101, 0b010),
    "p": (0b110, 0b101, 0b110, 0b100, 0b100),
    "q": (0b010, 0b101, 0b101, 0b110, 0b011),
    "r": (0b110, 0b101, 0b110, 0b110, 0b101),
    "s": (0b011, 0b100, 0b010, 0b001, 0b110),
    "t": (0b111, 0b010, 0b010, 0b010, 0b010),
    "u": (0b101, 0b101, 0b101, 0b101, 0b111),
    "v": (0b101, 0b101, 0b101, 0b101, 0b010),
    "w": (0b101, 0b101, 0b111, 0b111, 0b101),
    "x": (0b101, 0b101, 0b010, 0b101, 0b101),
    "y": (0b101, 0b101, 0b010, 0b010, 0b010),
    "z": (0b111, 0b001, 0b010, 0b100, 0b111),
}

CAPTION_HEIGHT = 7


def render_text(text, width):
    """Rasterize text into a (CAPTION_HEIGHT, width) uint8 strip.

    Characters outside the builtin 3x5 font render blank; text that does not
    fit is truncated.
    """
    strip = np.zeros((CAPTION_HEIGHT, width), dtype=np.uint8)
    x = 1
    for ch in text.lower():
        if x + 3 > width:
            break
        glyph = _FONT.get(ch)
        if glyph is not None:
            for row, bits in enumerate(glyph):
                for col in range(3):
                    if bits & (0b100 >> col):
                        strip[1 + row, x + col] = 255
        x += 4
    return strip


def montage(images, captions=None, columns=10, pad=2):
    """Tile same-sized uint8 images into one grid image with caption strips.

    Returns an array of shape (grid_h, grid_w, C) where C matches the inputs.
    """
    if len(images) == 0:
        raise DataError("montage needs at least one image")
    arrs = [np.asarray(im, dtype=np.uint8) for im in images]
    first = arrs[0]
    if first.ndim == 2:
        arrs = [a[:, :, None] for a in arrs]
        first = arrs[0]
    h, w, c = first.shape
    for a in arrs:
        if a.shape != (h, w, c):
            raise ShapeError(f"montage images differ in shape: {a.shape} vs {(h, w, c)}")
    if captions is None:
        captions = [""] * len(arrs)
    if len(captions) != len(arrs):
        raise DataError("montage needs one caption per image")

    cols = min(columns, len(arrs))
    rows = (len(arrs) + cols - 1) // cols
    cell_h = h + CAPTION_HEIGHT + pad
    cell_w = w + pad
    grid = np.zeros((rows * cell_h + pad, cols * cell_w + pad, c), dtype=np.uint8)
    for i, (a, cap) in enumerate(zip(arrs, captions)):
        r, col = divmod(i, cols)
        y = pad + r * cell_h
        x = pad + col * cell_w
        grid[y : y + h, x : x + w] = a
        strip = render_text(cap, w)
        grid[y + h : y + h + CAPTION_HEIGHT, x : x + w] = strip[:, :, None]
    return grid
