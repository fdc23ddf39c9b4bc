"""Desk-scale image sourcing and bit/pixel conversion.

Images are 8-bit grayscale stored as float arrays in [0, 1] (value =
byte / 255). Bitstreams are raster scan, MSB first. The soft
reconstruction path turns per-bit probabilities into expected pixel
values and stays differentiable for the task loss.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import LengthMismatch

BITS_PER_PIXEL = 8


@dataclass(frozen=True)
class ImageSource:
    """Synthetic or file-backed grayscale source of fixed dimensions."""

    kind: str = "gradient"      # "gradient", "checker", or "file"
    width: int = 8
    height: int = 8
    path: str = None

    def make_image(self) -> np.ndarray:
        """(height, width) float image in [0, 1], quantized to 8 bits."""
        if self.kind == "gradient":
            i = np.arange(self.height)[:, None]
            j = np.arange(self.width)[None, :]
            span = max(self.height + self.width - 2, 1)
            img = (i + j) / span
        elif self.kind == "checker":
            i = np.arange(self.height)[:, None] // 2
            j = np.arange(self.width)[None, :] // 2
            img = ((i + j) % 2).astype(float)
        elif self.kind == "file":
            from .ppm import read_image
            img = read_image(self.path)
            if img.shape != (self.height, self.width):
                raise LengthMismatch(
                    f"file image {img.shape} != configured {(self.height, self.width)}")
        else:
            raise ValueError(f"unknown image source kind '{self.kind}'")
        return np.round(img * 255.0) / 255.0

    @property
    def n_bits(self) -> int:
        return self.width * self.height * BITS_PER_PIXEL


def image_to_bits(img: np.ndarray) -> np.ndarray:
    """Float [0,1] image -> MSB-first bitstream of length h*w*8."""
    levels = np.round(np.asarray(img, dtype=float) * 255.0).astype(np.uint8)
    bits = np.unpackbits(levels.reshape(-1, 1), axis=1)  # MSB first
    return bits.reshape(-1)


def bits_to_image(bits: np.ndarray, height: int, width: int) -> np.ndarray:
    """Hard bits -> float image; inverse of image_to_bits."""
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    if bits.size != height * width * BITS_PER_PIXEL:
        raise LengthMismatch(
            f"expected {height * width * BITS_PER_PIXEL} bits, got {bits.size}")
    levels = np.packbits(bits.reshape(-1, BITS_PER_PIXEL), axis=1).reshape(height, width)
    return levels.astype(float) / 255.0


_BIT_WEIGHTS = (2.0 ** np.arange(BITS_PER_PIXEL - 1, -1, -1) / 255.0).reshape(BITS_PER_PIXEL, 1)


def bits_to_image_soft(p_one: Tensor, height: int, width: int) -> Tensor:
    """Differentiable reconstruction from bit probabilities P(bit = 1).

    pixel = sum_k p_k 2^(7-k) / 255, the expected pixel value under
    independent bit posteriors.
    """
    if p_one.size != height * width * BITS_PER_PIXEL:
        raise LengthMismatch(
            f"expected {height * width * BITS_PER_PIXEL} probabilities, got {p_one.size}")
    mat = ad.reshape(p_one, (height * width, BITS_PER_PIXEL))
    px = ad.matmul(mat, ad.tensor(_BIT_WEIGHTS))
    return ad.reshape(px, (height, width))
