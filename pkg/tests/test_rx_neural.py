import numpy as np
import pytest

from helpers_grad import check_param_grads
from uavlink import autodiff as ad
from uavlink.channel import ArrayConfig, LargeScaleParams, realize_channel, sample_clusters
from uavlink.errors import DimMismatch, ShapeMismatch
from uavlink.geometry import GeometryState, elevation_azimuth
from uavlink.modulation import ConstellationSpec, qam_map
from uavlink.ofdm import PilotPattern, RxSlot, TxSlot, apply_channel, build_grid, ezf_precode_slot
from uavlink.rx_neural import DeepRxParams, deeprx_apply, deeprx_features, deeprx_forward
from uavlink.training import bce_from_llrs

NUMEROLOGY = (15e3, 1e-3 / 14)


def _slot(seed=0, snr_db=5.0):
    g = GeometryState(p_uav=(60.0, 45.0, 80.0), v_uav=(10.0, 5.0, 0.0), h_bs=25.0)
    a = ArrayConfig(n_y=2, n_z=2, n_uav=2)
    rng = np.random.default_rng(seed)
    theta, _ = elevation_azimuth(g)
    cl = sample_clusters(rng, 8, theta, 11.2, a.wavelength)
    chan = realize_channel(g, a, LargeScaleParams(), cl, (72, 14), NUMEROLOGY, rng,
                           normalized_snr_mode=True)
    pat = PilotPattern.sparse()
    spec = ConstellationSpec.qam(4)
    bits = rng.integers(0, 2, size=pat.data_capacity * 4).astype(np.uint8)
    tx = TxSlot(grid=build_grid(qam_map(bits, spec), pat), w=ezf_precode_slot(chan))
    rx = apply_channel(tx, chan, snr_db, rng)
    return rx, pat, bits


def test_features_shape_and_mask():
    rx, pat, _ = _slot()
    feats = deeprx_features(rx, pat)
    assert feats.shape == (72, 14, 5)
    assert feats[:, :, 2].sum() == pat.n_pilots
    # anchors only at pilot REs
    anchor_energy = np.abs(feats[:, :, 3]) + np.abs(feats[:, :, 4])
    assert np.all((anchor_energy > 0) <= (feats[:, :, 2] > 0))


def test_features_zero_slot():
    rx, pat, _ = _slot()
    zero = RxSlot(y=np.zeros_like(rx.y), noise_var=rx.noise_var)
    feats = deeprx_features(zero, pat)
    assert np.array_equal(feats[:, :, 2], pat.mask() == 1)
    assert not np.any(feats[:, :, [0, 1, 3, 4]])


def test_features_deterministic():
    rx, pat, _ = _slot(seed=3)
    f1 = deeprx_features(rx, pat)
    f2 = deeprx_features(rx, pat)
    assert np.array_equal(f1, f2)


def test_features_dim_mismatch():
    rx, pat, _ = _slot()
    bad = RxSlot(y=rx.y[:50], noise_var=rx.noise_var)
    with pytest.raises(DimMismatch):
        deeprx_features(bad, pat)


def test_zero_head_gives_zero_llrs():
    rng = np.random.default_rng(91)
    params = DeepRxParams.init(rng, head_scale=0.0)
    rx, pat, _ = _slot()
    out = deeprx_forward(deeprx_features(rx, pat), params)
    assert out.shape == (72, 14, 4)
    assert not np.any(out)


def test_output_shape_default_config():
    rng = np.random.default_rng(92)
    params = DeepRxParams.init(rng)
    rx, pat, _ = _slot()
    out = deeprx_forward(deeprx_features(rx, pat), params)
    assert out.shape == (72, 14, 4)
    assert np.all(np.isfinite(out))


def test_feature_channel_mismatch_raises():
    rng = np.random.default_rng(93)
    params = DeepRxParams.init(rng)
    with pytest.raises(ShapeMismatch):
        deeprx_apply(ad.tensor(np.zeros((72, 14, 3))), params)


def test_translation_consistency_interior():
    """Shifting features one subcarrier shifts interior outputs identically."""
    rng = np.random.default_rng(94)
    params = DeepRxParams.init(rng)
    rx, pat, _ = _slot(seed=5)
    feats = deeprx_features(rx, pat)
    shifted = np.roll(feats, 1, axis=0)
    out = deeprx_forward(feats, params)
    out_shifted = deeprx_forward(shifted, params)
    # receptive field of stem + 2 blocks (5 convs of 3x3) = 5 REs each side
    margin = 6
    assert np.allclose(out_shifted[margin:-margin], np.roll(out, 1, axis=0)[margin:-margin],
                       atol=1e-9)


def test_forward_is_pure():
    rng = np.random.default_rng(95)
    params = DeepRxParams.init(rng)
    rx, pat, _ = _slot(seed=6)
    feats = deeprx_features(rx, pat)
    before = {k: t.values.copy() for k, t in params.tensors.items()}
    deeprx_forward(feats, params)
    for k, t in params.tensors.items():
        assert np.array_equal(before[k], t.values)


def test_bce_gradients_vs_finite_differences():
    """Reduced-size Deep-Rx + BCE graph passes the FD check on every param."""
    rng = np.random.default_rng(96)
    params = DeepRxParams.init(rng, width=6, n_blocks=1, m_bits=2, f_in=5,
                               head_scale=0.05)
    feats = rng.standard_normal((10, 6, 5)) * 0.5
    bits = rng.integers(0, 2, size=10 * 6 * 2).astype(np.uint8)

    def loss_fn():
        llr = deeprx_apply(ad.tensor(feats), params)
        return bce_from_llrs(bits, ad.reshape(llr, (10 * 6 * 2,)))

    worst = check_param_grads(loss_fn, params.tensors, rel_tol=1e-6)
    assert worst < 1e-6
