"""Bitmap views of the coefficient matrix and bit-exact PGM/PPM export.

A pixel is 255 (white) where the matrix has a nonzero, 0 (black) elsewhere.
Permutations map image position to original index: pixel (i, j) shows
A[row_perm[i], col_perm[j]].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MilpInstance

# PPM tint palette for human inspection of borders (see write_ppm_tinted):
#   plain background        (0, 0, 0)
#   plain nonzero           (255, 255, 255)
#   tinted background       (0, 0, 96)    master row or border col
#   tinted nonzero          (255, 200, 0)
_TINT_BG = (0, 0, 96)
_TINT_FG = (255, 200, 0)


@dataclass(frozen=True)
class CcmImage:
    pixels: np.ndarray  # uint8, values 0 or 255, shape (height, width)
    row_perm: tuple[int, ...]
    col_perm: tuple[int, ...]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "row_perm", tuple(int(i) for i in self.row_perm))
        object.__setattr__(self, "col_perm", tuple(int(j) for j in self.col_perm))

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


def _check_perm(perm, size: int, what: str) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(size)):
        raise ValueError(f"{what} permutation is not a bijection on [0, {size})")
    return perm


def to_ccm_image(inst: MilpInstance, row_perm=None, col_perm=None) -> CcmImage:
    m, n = inst.num_rows, inst.num_cols
    row_perm = _check_perm(row_perm if row_perm is not None else range(m), m, "row")
    col_perm = _check_perm(col_perm if col_perm is not None else range(n), n, "column")

    dense = np.zeros((m, n), dtype=bool)
    for r, c, v in zip(inst.ccm_rows, inst.ccm_cols, inst.ccm_vals):
        if float(v) != 0.0:
            dense[int(r), int(c)] = True
    if m and n:
        dense = dense[np.ix_(row_perm, col_perm)]
    pixels = np.where(dense, 255, 0).astype(np.uint8)
    return CcmImage(pixels=pixels, row_perm=row_perm, col_perm=col_perm)


def image_from_pattern(pixels) -> CcmImage:
    """Wrap a 0/255 (or boolean) matrix as an image with identity perms."""
    arr = np.asarray(pixels)
    if arr.dtype == bool:
        arr = np.where(arr, 255, 0)
    arr = arr.astype(np.uint8)
    return CcmImage(
        pixels=arr,
        row_perm=tuple(range(arr.shape[0])),
        col_perm=tuple(range(arr.shape[1])),
    )


def write_pgm(img: CcmImage) -> bytes:
    if img.height == 0 or img.width == 0:
        raise ValueError("cannot write a zero-dimension image")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def write_ppm_tinted(img: CcmImage, border_rows=(), border_cols=()) -> bytes:
    """P6 color variant with master rows / border columns tinted.

    border_rows/border_cols are positions in image coordinates.
    """
    if img.height == 0 or img.width == 0:
        raise ValueError("cannot write a zero-dimension image")
    h, w = img.height, img.width
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    white = img.pixels == 255
    rgb[white] = (255, 255, 255)

    tinted = np.zeros((h, w), dtype=bool)
    for i in border_rows:
        tinted[int(i), :] = True
    for j in border_cols:
        tinted[:, int(j)] = True
    rgb[tinted & ~white] = _TINT_BG
    rgb[tinted & white] = _TINT_FG

    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + rgb.tobytes()
