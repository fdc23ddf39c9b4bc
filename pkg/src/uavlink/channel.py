"""Geometry-based stochastic air-to-ground MIMO channel.

The per-RE channel matrix is a superposition of a deterministic LoS part
(steering vectors, LoS Doppler and delay phase) and K stochastic clusters,
weighted by an elevation-dependent Rician factor and an optional
large-scale gain:

    H(s, c) = sqrt(beta) * ( sqrt(k/(k+1)) * a_bs a_uav^H e^{j2pi nu t_s} e^{-j2pi f_c tau}
                           + sqrt(1/(k+1)) * (1/sqrt(K)) sum_k g_k a_bs,k a_uav,k^H
                             e^{j2pi nu_k t_s} e^{-j2pi f_c tau_k} )

Cluster delays make the 72-subcarrier grid frequency selective (the
narrowband model alone would be flat); they default to i.i.d. exponential
with a 100 ns mean. The channel is held constant within one OFDM symbol,
so Doppler enters purely as a per-symbol phase rotation (no ICI).

Everything is pure given (configs, rng seed); identical seeds produce
bit-identical realizations.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigMismatch
from .geometry import GeometryState, elevation_azimuth, slant_distance, unit_direction

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class ArrayConfig:
    """BS UPA (n_y x n_z) and UAV ULA (n_uav) geometry.

    d_a is the element spacing in meters, wavelength the carrier wavelength.
    UPA elements flatten as (n_y, n_z) -> n_y * N_z + n_z (z-major within y);
    this order is fixed so golden vectors stay stable.
    """

    n_y: int = 8
    n_z: int = 8
    n_uav: int = 4
    d_a: float = SPEED_OF_LIGHT / 3.5e9 / 2.0  # lambda/2 at 3.5 GHz
    wavelength: float = SPEED_OF_LIGHT / 3.5e9

    def __post_init__(self):
        if self.n_y < 1 or self.n_z < 1 or self.n_uav < 1:
            raise ConfigMismatch("array dimensions must be >= 1")
        if self.d_a <= 0 or self.wavelength <= 0:
            raise ConfigMismatch("d_a and wavelength must be positive")

    @property
    def n_bs(self) -> int:
        return self.n_y * self.n_z


@dataclass(frozen=True)
class LargeScaleParams:
    """Rician factor law, shadowing, LoS probability, and excess losses.

    kappa = a_rician * exp(b_rician * theta) with theta in radians; the
    defaults span 0 dB at the horizon to ~10.2 dB at zenith. P_LoS uses the
    logistic elevation form with the usual urban constants (9.61, 0.16).
    None of these values come from measurement here; all are configurable.
    """

    a_rician: float = 1.0
    b_rician: float = 1.5          # 1/radian
    sigma_sh_db: float = 4.0       # shadowing std, dB
    plos_a: float = 9.61
    plos_b: float = 0.16
    excess_los_db: float = 1.0
    excess_nlos_db: float = 20.0
    carrier_hz: float = 3.5e9

    def __post_init__(self):
        if self.a_rician <= 0:
            raise ConfigMismatch("a_rician must be positive")
        if self.sigma_sh_db < 0:
            raise ConfigMismatch("sigma_sh_db must be >= 0")


@dataclass
class ClusterSet:
    """K propagation clusters: complex gains, angle pairs, Doppler, delay."""

    gains: np.ndarray        # (K,) complex, CN(0,1) draws
    aoa_az: np.ndarray       # (K,) radians, BS side
    aoa_el: np.ndarray       # (K,) radians
    aod_az: np.ndarray       # (K,) radians, UAV side
    aod_el: np.ndarray       # (K,) radians
    doppler_hz: np.ndarray   # (K,)
    delay_s: np.ndarray      # (K,) >= 0

    def __post_init__(self):
        k = len(self.gains)
        if k < 1:
            raise ConfigMismatch("need at least one cluster")
        for name in ("aoa_az", "aoa_el", "aod_az", "aod_el", "doppler_hz", "delay_s"):
            if len(getattr(self, name)) != k:
                raise ConfigMismatch(f"cluster field {name} length != K")
        if np.any(self.delay_s < 0):
            raise ConfigMismatch("cluster delays must be >= 0")

    @property
    def k_clusters(self) -> int:
        return len(self.gains)


def sample_clusters(rng: np.random.Generator, k: int, los_elevation: float,
                    speed: float, wavelength: float,
                    delay_spread_s: float = 100e-9,
                    elevation_spread_rad: float = np.deg2rad(10.0)) -> ClusterSet:
    """Draw a ClusterSet around the LoS geometry.

    Azimuths uniform on [-pi, pi); elevations Laplacian around the LoS
    elevation with the given spread, reflected back into [0, pi/2]; Doppler
    follows the classical cosine law nu_k = (speed/lambda) cos psi_k with
    psi_k uniform; delays i.i.d. exponential with mean ``delay_spread_s``.
    """
    gains = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
    aoa_az = rng.uniform(-np.pi, np.pi, size=k)
    aod_az = rng.uniform(-np.pi, np.pi, size=k)
    aoa_el = _reflect_into_quadrant(rng.laplace(los_elevation, elevation_spread_rad, size=k))
    aod_el = _reflect_into_quadrant(rng.laplace(los_elevation, elevation_spread_rad, size=k))
    nu_max = speed / wavelength
    doppler = nu_max * np.cos(rng.uniform(0.0, 2.0 * np.pi, size=k))
    delays = rng.exponential(delay_spread_s, size=k)
    return ClusterSet(gains, aoa_az, aoa_el, aod_az, aod_el, doppler, delays)


def _reflect_into_quadrant(angles: np.ndarray) -> np.ndarray:
    """Mirror-reflect angles into [0, pi/2]."""
    a = np.mod(angles, 2.0 * np.pi)
    a = np.where(a > np.pi, 2.0 * np.pi - a, a)       # fold into [0, pi]
    a = np.where(a > np.pi / 2.0, np.pi - a, a)       # fold into [0, pi/2]
    return np.abs(a)


@dataclass
class ChannelRealization:
    """Per-symbol, per-subcarrier channel matrices.

    h has shape (n_symbols, n_subcarriers, n_bs, n_uav); beta and kappa are
    the linear large-scale gain and Rician factor used to build it.
    """

    h: np.ndarray
    beta: float
    kappa: float

    @property
    def n_symbols(self) -> int:
        return self.h.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.h.shape[1]


# ---------------------------------------------------------------------------
# Elementary quantities
# ---------------------------------------------------------------------------


def rician_factor(theta: float, p: LargeScaleParams) -> float:
    """kappa = A exp(B theta), linear ratio of LoS to aggregate NLoS power."""
    return float(p.a_rician * np.exp(p.b_rician * theta))


def steering_upa(phi, theta, a: ArrayConfig) -> np.ndarray:
    """BS UPA response, unit l2 norm; supports broadcast angle arrays.

    Element (n_y, n_z) carries phase (2 pi d_a / lambda)
    (n_y sin(phi) sin(theta) + n_z cos(theta)); flattening is z-major
    within y: (n_y, n_z) -> n_y * N_z + n_z.
    """
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    ky = np.arange(a.n_y)
    kz = np.arange(a.n_z)
    coef = 2.0 * np.pi * a.d_a / a.wavelength
    phase_y = coef * np.sin(phi)[..., None] * np.sin(theta)[..., None] * ky  # (..., n_y)
    phase_z = coef * np.cos(theta)[..., None] * kz                            # (..., n_z)
    phase = phase_y[..., :, None] + phase_z[..., None, :]                     # (..., n_y, n_z)
    vec = np.exp(1j * phase) / np.sqrt(a.n_bs)
    return vec.reshape(phase.shape[:-2] + (a.n_bs,))


def steering_ula(phi, theta, a: ArrayConfig) -> np.ndarray:
    """UAV ULA response with phase n (2 pi d_a / lambda) sin(phi) sin(theta)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n = np.arange(a.n_uav)
    coef = 2.0 * np.pi * a.d_a / a.wavelength
    phase = coef * (np.sin(phi) * np.sin(theta))[..., None] * n
    return np.exp(1j * phase) / np.sqrt(a.n_uav)


def doppler_shift(v: np.ndarray, direction: np.ndarray, wavelength: float) -> float:
    """nu = v . r / lambda for a unit direction vector r, in Hz."""
    return float(np.dot(np.asarray(v, dtype=float), np.asarray(direction, dtype=float)) / wavelength)


def fspl_db(distance_m: float, freq_hz: float) -> float:
    """Free-space path loss 20 log10(4 pi d f / c) in dB."""
    return 20.0 * np.log10(4.0 * np.pi * distance_m * freq_hz / SPEED_OF_LIGHT)


def plos_probability(theta: float, p: LargeScaleParams) -> float:
    """Logistic LoS probability in the elevation angle (degrees inside)."""
    theta_deg = np.rad2deg(theta)
    return float(1.0 / (1.0 + p.plos_a * np.exp(-p.plos_b * (theta_deg - p.plos_a))))


def large_scale_gain(g: GeometryState, p: LargeScaleParams,
                     rng: np.random.Generator) -> tuple:
    """Linear power gain beta = 10^{-(L + xi)/10} and the shadowing draw in dB.

    L blends LoS/NLoS excess losses on top of FSPL by the elevation-driven
    LoS probability; xi ~ N(0, sigma_sh^2).
    """
    d = slant_distance(g)
    if d <= 0:
        raise ConfigMismatch("slant distance must be positive")
    theta, _ = elevation_azimuth(g)
    base = fspl_db(d, p.carrier_hz)
    p_los = plos_probability(theta, p)
    loss = p_los * (base + p.excess_los_db) + (1.0 - p_los) * (base + p.excess_nlos_db)
    shadow_db = float(rng.normal(0.0, p.sigma_sh_db)) if p.sigma_sh_db > 0 else 0.0
    beta = 10.0 ** (-(loss + shadow_db) / 10.0)
    return beta, shadow_db


# ---------------------------------------------------------------------------
# Full realization
# ---------------------------------------------------------------------------


def los_angles(g: GeometryState) -> tuple:
    """(aoa_az, aoa_el, aod_az, aod_el) for the LoS ray.

    Arrival at the BS uses the geometric (phi, theta); departure at the UAV
    mirrors the azimuth (phi + pi, wrapped) at the same elevation.
    """
    theta, phi = elevation_azimuth(g)
    phi_dep = np.arctan2(-np.sin(phi), -np.cos(phi))  # phi + pi wrapped to (-pi, pi]
    return phi, theta, float(phi_dep), theta


def realize_channel(g: GeometryState, a: ArrayConfig, p: LargeScaleParams,
                    clusters: ClusterSet, grid_dims: tuple, numerology: tuple,
                    rng: np.random.Generator,
                    normalized_snr_mode: bool = False,
                    tau_los_s: float = None) -> ChannelRealization:
    """Generate H(s, c) on an (n_subcarriers x n_symbols) grid.

    grid_dims = (n_subcarriers, n_symbols); numerology = (scs_hz,
    symbol_duration_s). Subcarrier c sits at frequency offset c * scs_hz
    from subcarrier 0; symbol s at time s * symbol_duration_s. In
    normalized_snr_mode beta is forced to 1 (no rng draw for shadowing).
    tau_los_s overrides the geometric LoS delay d/c (zero it for
    flat-reference golden tests).
    """
    n_c, n_s = grid_dims
    scs_hz, t_sym = numerology
    if n_c < 1 or n_s < 1:
        raise ConfigMismatch(f"grid dims must be positive, got {grid_dims}")
    if scs_hz <= 0 or t_sym <= 0:
        raise ConfigMismatch("numerology entries must be positive")

    theta, _ = elevation_azimuth(g)
    kappa = rician_factor(theta, p)
    if normalized_snr_mode:
        beta = 1.0
    else:
        beta, _ = large_scale_gain(g, p, rng)

    phi_a, th_a, phi_d, th_d = los_angles(g)
    a_bs = steering_upa(phi_a, th_a, a)                # (n_bs,)
    a_uav = steering_ula(phi_d, th_d, a)               # (n_uav,)
    nu_los = doppler_shift(g.velocity, unit_direction(g), a.wavelength)
    tau_los = slant_distance(g) / SPEED_OF_LIGHT if tau_los_s is None else float(tau_los_s)

    t = np.arange(n_s) * t_sym                         # (n_s,)
    f = np.arange(n_c) * scs_hz                        # (n_c,)

    los_outer = np.outer(a_bs, a_uav.conj())           # (n_bs, n_uav)
    los_phase = np.exp(1j * 2.0 * np.pi * (nu_los * t[:, None] - f[None, :] * tau_los))
    h_los = los_phase[:, :, None, None] * los_outer    # (n_s, n_c, n_bs, n_uav)

    k = clusters.k_clusters
    a_bs_k = steering_upa(clusters.aoa_az, clusters.aoa_el, a)    # (K, n_bs)
    a_uav_k = steering_ula(clusters.aod_az, clusters.aod_el, a)   # (K, n_uav)
    outer_k = a_bs_k[:, :, None] * a_uav_k.conj()[:, None, :]     # (K, n_bs, n_uav)
    phase_k = np.exp(1j * 2.0 * np.pi * (
        clusters.doppler_hz[:, None, None] * t[None, :, None]
        - clusters.delay_s[:, None, None] * f[None, None, :]))    # (K, n_s, n_c)
    h_nlos = np.einsum("k,ksc,kij->scij", clusters.gains, phase_k, outer_k) / np.sqrt(k)

    w_los = np.sqrt(kappa / (kappa + 1.0))
    w_nlos = np.sqrt(1.0 / (kappa + 1.0))
    h = np.sqrt(beta) * (w_los * h_los + w_nlos * h_nlos)
    return ChannelRealization(h=h, beta=float(beta), kappa=float(kappa))


def los_nlos_power_ratio_mc(g: GeometryState, a: ArrayConfig, p: LargeScaleParams,
                            n_draws: int, rng: np.random.Generator,
                            k_clusters: int = 8, chunk: int = 10_000) -> tuple:
    """Monte-Carlo LoS/NLoS power ratio of the composed channel at beta = 1.

    Redraws the cluster set ``n_draws`` times at fixed geometry and t = 0,
    f = 0, and returns (measured ratio, kappa). Uses the same steering and
    cluster-sampling code as realize_channel, chunked for memory.
    """
    theta, _ = elevation_azimuth(g)
    kappa = rician_factor(theta, p)
    phi_a, th_a, phi_d, th_d = los_angles(g)
    a_bs = steering_upa(phi_a, th_a, a)
    a_uav = steering_ula(phi_d, th_d, a)
    # Unit steering vectors make the LoS Frobenius norm exactly 1.
    los_power = (kappa / (kappa + 1.0)) * (np.linalg.norm(np.outer(a_bs, a_uav.conj()), "fro") ** 2)

    # Doppler and delay draws are irrelevant at t = 0, f = 0 and skipped.
    total = 0.0
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        gains = (rng.standard_normal((m, k_clusters)) + 1j * rng.standard_normal((m, k_clusters))) / np.sqrt(2.0)
        aoa_az = rng.uniform(-np.pi, np.pi, size=(m, k_clusters))
        aod_az = rng.uniform(-np.pi, np.pi, size=(m, k_clusters))
        aoa_el = _reflect_into_quadrant(rng.laplace(theta, np.deg2rad(10.0), size=(m, k_clusters)))
        aod_el = _reflect_into_quadrant(rng.laplace(theta, np.deg2rad(10.0), size=(m, k_clusters)))
        ab = steering_upa(aoa_az, aoa_el, a)            # (m, K, n_bs)
        au = steering_ula(aod_az, aod_el, a)            # (m, K, n_uav)
        gram_b = np.einsum("mki,mli->mkl", ab.conj(), ab)
        gram_u = np.einsum("mki,mli->mkl", au.conj(), au)
        cross = np.einsum("mk,ml->mkl", gains.conj(), gains)
        fro2 = np.einsum("mkl,mkl,mlk->m", cross, gram_b, gram_u).real / k_clusters
        total += fro2.sum()
        done += m
    nlos_power = total / n_draws / (kappa + 1.0)
    return float(los_power / nlos_power), float(kappa)


# ---------------------------------------------------------------------------
# Golden-vector dump (regression format)
# ---------------------------------------------------------------------------

_GOLDEN_MAGIC = b"UAVCHAN1"


def write_golden(path, real: ChannelRealization, seed: int):
    """Binary dump: magic, dims (u32 LE), seed (u64 LE), beta/kappa (f64),
    then interleaved (re, im) float64 per entry in (s, c, i, j) order."""
    h = real.h
    n_s, n_c, n_bs, n_uav = h.shape
    with open(path, "wb") as fh:
        fh.write(_GOLDEN_MAGIC)
        fh.write(struct.pack("<IIII", n_s, n_c, n_bs, n_uav))
        fh.write(struct.pack("<Q", seed))
        fh.write(struct.pack("<dd", real.beta, real.kappa))
        inter = np.empty(h.size * 2, dtype="<f8")
        inter[0::2] = h.real.reshape(-1)
        inter[1::2] = h.imag.reshape(-1)
        fh.write(inter.tobytes())


def read_golden(path) -> tuple:
    """Inverse of write_golden; returns (ChannelRealization, seed)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _GOLDEN_MAGIC:
            raise ValueError(f"not a golden channel dump: magic {magic!r}")
        n_s, n_c, n_bs, n_uav = struct.unpack("<IIII", fh.read(16))
        (seed,) = struct.unpack("<Q", fh.read(8))
        beta, kappa = struct.unpack("<dd", fh.read(16))
        count = n_s * n_c * n_bs * n_uav * 2
        inter = np.frombuffer(fh.read(count * 8), dtype="<f8")
    h = (inter[0::2] + 1j * inter[1::2]).reshape(n_s, n_c, n_bs, n_uav)
    return ChannelRealization(h=h, beta=beta, kappa=kappa), seed
