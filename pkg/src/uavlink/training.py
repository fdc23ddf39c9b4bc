"""Joint Tx/Rx training: task-driven loss and the end-to-end loop.

Per iteration: sample an image, a channel realization, and an SNR; map the
payload to QAM, perturb it row-by-row with the Moduformer, pass it through
the (frozen, per-iteration) channel + sparse-pilot combining, run Deep-Rx,
and minimize

    L_total = L_BCE + psi * ((1 - alpha) * L1 + alpha * (1 - SSIM))

over both parameter sets at once. The training path is uncoded: bits map
straight to symbols and the soft image comes from sigmoid(-LLR), keeping
the whole graph differentiable; the LDPC chain returns at evaluation time.

Channel, noise, and pilot handling are exactly what deeprx_features does
at inference: because the received grid is affine in the transmitted data
symbols (y = h_eff x + n per RE), the differentiable path only needs the
per-RE combined gain a = h_hat^H h_eff / ||h_hat||^2 and combined noise,
both precomputed with numpy.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeMismatch, WindowTooLarge
from .harness import LinkConfig, data_row_spans, draw_channel
from .imaging import ImageSource, bits_to_image_soft, image_to_bits
from .modulation import ConstellationSpec, qam_map
from .moduformer import ModuformerParams, moduformer_apply
from .ofdm import RxSlot, effective_channel, ezf_precode_slot, noise_variance_for_snr
from .optim import Adam, SGD
from .rx_classical import interpolate, ls_estimate
from .rx_neural import DeepRxParams, deeprx_apply
from .seeding import substream


@dataclass(frozen=True)
class LossConfig:
    """Task loss weights: psi scales the photometric term, alpha blends
    L1 against (1 - SSIM)."""

    psi: float = 1.0
    alpha: float = 0.2
    ssim_window: int = 7
    dynamic_range: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.psi < 0.0:
            raise ValueError(f"psi must be >= 0, got {self.psi}")


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 500
    batch_size: int = 1
    learning_rate: float = 2e-3
    seed: int = 7
    snr_range_db: tuple = (-4.0, 4.0)
    pattern: str = "sparse"
    optimizer: str = "adam"        # "adam" | "sgd"
    use_moduformer: bool = True    # False freezes delta_x at 0
    freeze_batch: bool = False     # reuse the first sampled batch every iteration
    checkpoint_every: int = 0      # 0 disables periodic checkpoints

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be positive")


# ---------------------------------------------------------------------------
# Differentiable SSIM and the combined loss
# ---------------------------------------------------------------------------


def ssim(a, b, window: int = 7, c1: float = 0.01 ** 2, c2: float = 0.03 ** 2) -> Tensor:
    """Mean SSIM over sliding uniform windows (stride 1, valid placement).

    Accepts numpy arrays or Tensors of equal 2D shape with values in
    [0, 1]; returns a scalar Tensor in (-1, 1].
    """
    at = a if isinstance(a, Tensor) else ad.tensor(a)
    bt = b if isinstance(b, Tensor) else ad.tensor(b)
    if at.shape != bt.shape or len(at.shape) != 2:
        raise ShapeMismatch(f"ssim needs equal 2D images, got {at.shape} vs {bt.shape}")
    h, w = at.shape
    if window > h or window > w:
        raise WindowTooLarge(f"window {window} exceeds image {at.shape}")
    mu_a = ad.avg_pool2d(at, window)
    mu_b = ad.avg_pool2d(bt, window)
    var_a = ad.sub(ad.avg_pool2d(ad.mul(at, at), window), ad.mul(mu_a, mu_a))
    var_b = ad.sub(ad.avg_pool2d(ad.mul(bt, bt), window), ad.mul(mu_b, mu_b))
    cov = ad.sub(ad.avg_pool2d(ad.mul(at, bt), window), ad.mul(mu_a, mu_b))
    two = ad.tensor(2.0)
    num = ad.mul(ad.add(ad.mul(two, ad.mul(mu_a, mu_b)), ad.tensor(c1)),
                 ad.add(ad.mul(two, cov), ad.tensor(c2)))
    den = ad.mul(ad.add(ad.add(ad.mul(mu_a, mu_a), ad.mul(mu_b, mu_b)), ad.tensor(c1)),
                 ad.add(ad.add(var_a, var_b), ad.tensor(c2)))
    return ad.mean(ad.div(num, den))


def bce_from_llrs(bits_true: np.ndarray, llrs: Tensor) -> Tensor:
    """Mean binary cross-entropy; L = log(P0/P1) so P(b=1) = sigmoid(-L).

    Uses log-sigmoid directly, finite for any LLR magnitude.
    """
    b = np.asarray(bits_true, dtype=np.float64).reshape(-1)
    if llrs.size != b.size:
        raise ShapeMismatch(f"{llrs.size} LLRs vs {b.size} bits")
    flat = ad.reshape(llrs, (b.size,))
    # -[b log P1 + (1-b) log P0] with log P1 = logsig(-L), log P0 = logsig(L)
    loss_vec = ad.sub(ad.tensor(np.zeros(b.size)),
                      ad.add(ad.mul(ad.tensor(b), ad.log_sigmoid(ad.neg(flat))),
                             ad.mul(ad.tensor(1.0 - b), ad.log_sigmoid(flat))))
    return ad.mean(loss_vec)


def loss_total(bits_true: np.ndarray, llrs: Tensor, img_true: np.ndarray,
               img_soft: Tensor, cfg: LossConfig) -> tuple:
    """Combined task loss; returns (scalar Tensor, component floats dict)."""
    l_bce = bce_from_llrs(bits_true, llrs)
    c1 = (0.01 * cfg.dynamic_range) ** 2
    c2 = (0.03 * cfg.dynamic_range) ** 2
    l1 = ad.mean(ad.abs_(ad.sub(ad.tensor(img_true), img_soft)))
    l_ssim = ad.sub(ad.tensor(1.0), ssim(img_true, img_soft, cfg.ssim_window, c1, c2))
    photometric = ad.add(ad.mul(ad.tensor(1.0 - cfg.alpha), l1),
                         ad.mul(ad.tensor(cfg.alpha), l_ssim))
    total = ad.add(l_bce, ad.mul(ad.tensor(cfg.psi), photometric))
    parts = {"L_total": total.item(), "L_BCE": l_bce.item(),
             "L1": l1.item(), "L_SSIM": l_ssim.item()}
    return total, parts


# ---------------------------------------------------------------------------
# One differentiable end-to-end sample
# ---------------------------------------------------------------------------


@dataclass
class SlotSample:
    """Frozen per-iteration randomness: image payload + channel constants."""

    image: np.ndarray
    payload_bits: np.ndarray
    snr_db: float
    gain: np.ndarray          # (n_data,) complex: combined channel on data REs
    noise_combined: np.ndarray  # (n_data,) complex
    pilot_combined: np.ndarray  # (n_c, n_s) complex, zero off pilot REs
    mask: np.ndarray          # (n_c, n_s)
    anchor: np.ndarray        # (n_c, n_s) complex


def draw_sample(link: LinkConfig, pattern, spec: ConstellationSpec,
                source: ImageSource, snr_range: tuple, seed: int, it: int) -> SlotSample:
    """Sample (image, channel, noise, SNR) and reduce the channel to the
    per-RE combined-gain constants the training graph needs."""
    rng_chan = substream(seed, 7, it, 0)
    rng_noise = substream(seed, 7, it, 1)
    rng_pay = substream(seed, 7, it, 2)
    rng_snr = substream(seed, 7, it, 3)

    image = source.make_image()
    img_bits = image_to_bits(image)
    n_payload_bits = pattern.data_capacity * spec.m_order
    if img_bits.size > n_payload_bits:
        raise ShapeMismatch(f"image needs {img_bits.size} bits > slot payload "
                            f"{n_payload_bits}")
    filler = rng_pay.integers(0, 2, size=n_payload_bits - img_bits.size).astype(np.uint8)
    payload = np.concatenate([img_bits, filler])

    snr_db = float(rng_snr.uniform(*snr_range))
    chan = draw_channel(link, rng_chan)
    w = ezf_precode_slot(chan)
    heff = effective_channel(chan, w)                       # (n_c, n_s, n_bs)
    noise_var = noise_variance_for_snr(chan, w, snr_db)
    n_c, n_s, n_bs = heff.shape
    noise = (rng_noise.standard_normal((n_c, n_s, n_bs))
             + 1j * rng_noise.standard_normal((n_c, n_s, n_bs))) * np.sqrt(noise_var / 2.0)

    # Receiver-side estimate from pilots only (pilot REs carry known symbols).
    pilot_grid = np.zeros((n_c, n_s), dtype=complex)
    for (c, s), p in zip(pattern.pilot_res, pattern.pilot_seq):
        pilot_grid[c, s] = p
    y_pilot_only = heff * pilot_grid[:, :, None] + noise
    est = interpolate(ls_estimate(RxSlot(y=y_pilot_only, noise_var=noise_var), pattern),
                      pattern)
    hhat = est.h_eff
    hh_gain = np.sum(np.abs(hhat) ** 2, axis=-1)
    hh_gain = np.where(hh_gain == 0.0, 1.0, hh_gain)
    # Combined channel a(re) and combined noise for every RE.
    a_full = np.sum(hhat.conj() * heff, axis=-1) / hh_gain
    n_full = np.sum(hhat.conj() * noise, axis=-1) / hh_gain

    coords = pattern.data_res()
    cs = np.array([c for c, _ in coords])
    ss = np.array([s for _, s in coords])
    gain = a_full[cs, ss]
    noise_combined = n_full[cs, ss]

    pilot_combined = np.zeros((n_c, n_s), dtype=complex)
    mask = np.zeros((n_c, n_s))
    anchor = np.zeros((n_c, n_s), dtype=complex)
    for (c, s), p in zip(pattern.pilot_res, pattern.pilot_seq):
        z_p = a_full[c, s] * p + n_full[c, s]
        pilot_combined[c, s] = z_p
        mask[c, s] = 1.0
        anchor[c, s] = z_p * np.conj(p) / (abs(p) ** 2)

    return SlotSample(image=image, payload_bits=payload, snr_db=snr_db,
                      gain=gain, noise_combined=noise_combined,
                      pilot_combined=pilot_combined, mask=mask, anchor=anchor)


def forward_sample(sample: SlotSample, pattern, spec: ConstellationSpec,
                   tx_params: ModuformerParams, rx_params: DeepRxParams,
                   loss_cfg: LossConfig, use_moduformer: bool = True) -> tuple:
    """Build the differentiable graph for one sample; returns (loss, parts)."""
    n_c, n_s = pattern.n_c, pattern.n_s
    symbols = qam_map(sample.payload_bits, spec)

    rows = []
    for start, stop in data_row_spans(pattern):
        if stop == start:
            continue
        row = ad.tensor(ad.to_pairs(symbols[start:stop]))
        rows.append(moduformer_apply(row, tx_params) if use_moduformer else row)
    x_hat = rows[0] if len(rows) == 1 else ad.concat(rows, axis=0)   # (n_data, 2)

    z = ad.add(ad.complex_mul(ad.tensor(ad.to_pairs(sample.gain)), x_hat),
               ad.tensor(ad.to_pairs(sample.noise_combined)))

    coords = pattern.data_res()
    flat_idx = np.array([c * n_s + s for c, s in coords])
    re_grid = ad.add(ad.scatter_flat(ad.slice_(z, (slice(None), slice(0, 1))),
                                     flat_idx, n_c * n_s),
                     ad.tensor(sample.pilot_combined.real.reshape(-1)))
    im_grid = ad.add(ad.scatter_flat(ad.slice_(z, (slice(None), slice(1, 2))),
                                     flat_idx, n_c * n_s),
                     ad.tensor(sample.pilot_combined.imag.reshape(-1)))
    const = np.stack([sample.mask, sample.anchor.real, sample.anchor.imag])  # (3,nc,ns)
    feats = ad.concat([ad.reshape(re_grid, (1, n_c, n_s)),
                       ad.reshape(im_grid, (1, n_c, n_s)),
                       ad.tensor(const)], axis=0)                  # (5, nc, ns)
    llr_grid = deeprx_apply(ad.transpose(feats, (1, 2, 0)), rx_params)

    m = spec.m_order
    bit_idx = (flat_idx[:, None] * m + np.arange(m)[None, :]).reshape(-1)
    llrs = ad.gather_flat(llr_grid, bit_idx)                       # payload order

    h, w = sample.image.shape
    n_img_bits = h * w * 8
    p_one = ad.sigmoid(ad.neg(ad.slice_(llrs, (slice(0, n_img_bits),))))
    img_soft = bits_to_image_soft(p_one, h, w)

    return loss_total(sample.payload_bits, llrs, sample.image, img_soft, loss_cfg)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def train_e2e(train_cfg: TrainConfig, loss_cfg: LossConfig = LossConfig(),
              channel_cfg: LinkConfig = None, source: ImageSource = ImageSource(),
              checkpoint_hook=None) -> tuple:
    """Joint optimization of Moduformer and Deep-Rx parameters.

    Returns (tx_params, rx_params, history) where history is a list of
    per-iteration dicts. Fixed seeds give bit-identical histories.
    """
    link = channel_cfg or LinkConfig()
    pattern = link.pattern(train_cfg.pattern)
    spec = ConstellationSpec.qam(4)

    rng_init = substream(train_cfg.seed, 11)
    tx_params = ModuformerParams.init(rng_init)
    rx_params = DeepRxParams.init(rng_init)

    params = {}
    if train_cfg.use_moduformer:
        params.update(tx_params.named("tx."))
    params.update(rx_params.named("rx."))
    opt_cls = {"adam": Adam, "sgd": SGD}[train_cfg.optimizer]
    opt = opt_cls(params, learning_rate=train_cfg.learning_rate)

    history = []
    frozen = None
    for it in range(train_cfg.iterations):
        if train_cfg.freeze_batch:
            if frozen is None:
                frozen = [draw_sample(link, pattern, spec, source,
                                      train_cfg.snr_range_db, train_cfg.seed, b)
                          for b in range(train_cfg.batch_size)]
            batch = frozen
        else:
            batch = [draw_sample(link, pattern, spec, source, train_cfg.snr_range_db,
                                 train_cfg.seed, it * train_cfg.batch_size + b)
                     for b in range(train_cfg.batch_size)]

        acc_parts = None
        total = None
        for sample in batch:
            loss, parts = forward_sample(sample, pattern, spec, tx_params, rx_params,
                                         loss_cfg, use_moduformer=train_cfg.use_moduformer)
            total = loss if total is None else ad.add(total, loss)
            if acc_parts is None:
                acc_parts = {k: v / len(batch) for k, v in parts.items()}
            else:
                for k, v in parts.items():
                    acc_parts[k] += v / len(batch)
        if len(batch) > 1:
            total = ad.mul(ad.tensor(1.0 / len(batch)), total)
        ad.backward(total)
        opt.step()

        row = {"iter": it, "L_total": acc_parts["L_total"], "L_BCE": acc_parts["L_BCE"],
               "L1": acc_parts["L1"], "L_SSIM": acc_parts["L_SSIM"],
               "snr_db": batch[0].snr_db, "seed": train_cfg.seed}
        history.append(row)
        if checkpoint_hook and train_cfg.checkpoint_every and \
                (it + 1) % train_cfg.checkpoint_every == 0:
            checkpoint_hook(it + 1, tx_params, rx_params)

    return tx_params, rx_params, history


def history_csv(history: list) -> str:
    """Stable-format training history CSV."""
    lines = ["iter,L_total,L_BCE,L1,L_SSIM,snr_db,seed"]
    for r in history:
        lines.append(f"{r['iter']},{r['L_total']:.17g},{r['L_BCE']:.17g},"
                     f"{r['L1']:.17g},{r['L_SSIM']:.17g},{r['snr_db']:.17g},{r['seed']}")
    return "\n".join(lines) + "\n"


def smoothed(series: list, window: int = 25) -> tuple:
    """(mean of first window, mean of last window) for convergence checks."""
    arr = np.asarray(series, dtype=float)
    w = min(window, arr.size)
    return float(arr[:w].mean()), float(arr[-w:].mean())
