"""Link and image quality metrics: PSNR, Wilson intervals, throughput."""

import numpy as np

SLOT_DURATION_S = 1e-3  # 14 symbols x 1/14 ms


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE) in dB; +inf for identical images."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def wilson_interval(errors: int, trials: int, z: float = 1.959964) -> tuple:
    """95% Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = errors / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def throughput_bps(bler: float, info_bits_per_slot: int,
                   slot_duration_s: float = SLOT_DURATION_S) -> float:
    """Effective rate T = (1 - BLER) * info bits / slot duration."""
    return (1.0 - bler) * info_bits_per_slot / slot_duration_s
