import math

import numpy as np
import pytest

from fetaug.augment import (
    AugmentConfig,
    LabeledSample,
    additive_noise,
    anisotropize,
    apply_pipeline,
    apply_bias_field,
    apply_gamma,
    bias_field,
    bias_monomials,
    crop_sample,
    gamma_adjust,
    inject_spikes,
    kspace_spike,
    noise_sigma,
    resample_axis_down_up,
    rotate_by,
    rotate_sample,
    scale_by,
    scale_sample,
)
from fetaug.errors import DataError, ParameterError
from fetaug.grid import RigidTransform, Volume, warp_rigid
from fetaug.heatmap import KEYPOINT_NAMES, KeypointSet, extract, synthesize
from fetaug.seeding import substream


def sample_from(data, sigma=2.0, spacing=(1.0, 1.0, 1.0), visible_at=None):
    vol = Volume(np.asarray(data, dtype=np.float32), spacing)
    pos = np.full((15, 3), 1.0)
    vis = np.zeros(15, dtype=bool)
    if visible_at is not None:
        for name, p in visible_at.items():
            i = KEYPOINT_NAMES.index(name)
            pos[i] = p
            vis[i] = True
    return LabeledSample(volume=vol, keypoints=KeypointSet(pos, vis), heatmap_sigma=sigma)


def volumes_equal(a: LabeledSample, b: LabeledSample) -> bool:
    return np.array_equal(a.volume.data, b.volume.data)


# ---------------------------------------------------------------------------
# additive noise
# ---------------------------------------------------------------------------


def test_noise_zero_fraction_identity(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)))
    out = additive_noise(s, substream(0, 0), (0.0, 0.0))
    assert volumes_equal(out, s)


def test_noise_constant_volume_identity():
    s = sample_from(np.full((16, 16, 16), 100.0))
    out = additive_noise(s, substream(0, 0), (0.0, 0.3))
    assert volumes_equal(out, s)  # p99 - p1 = 0 -> sigma 0


def test_noise_statistics_two_level_volume():
    # Values 90/110: mean 100, p99 - p1 = 20, so fraction 0.25 -> sigma 5.
    data = np.empty(64 * 64 * 64, dtype=np.float32)
    data[0::2] = 90.0
    data[1::2] = 110.0
    data = data.reshape(64, 64, 64)
    s = sample_from(data)
    assert noise_sigma(s.volume, 0.25) == pytest.approx(5.0, abs=1e-6)
    out = additive_noise(s, substream(42, 0), (0.25, 0.25))
    assert float(out.volume.data.mean()) == pytest.approx(100.0, abs=0.2)
    added = out.volume.data.astype(np.float64) - data
    assert float(added.std()) == pytest.approx(5.0, abs=0.2)


def test_noise_keeps_keypoints_bitwise(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)), visible_at={"bladder": (4, 5, 6)})
    out = additive_noise(s, substream(3, 0), (0.05, 0.1))
    assert out.keypoints is s.keypoints
    assert out.volume.spacing == s.volume.spacing


# ---------------------------------------------------------------------------
# bias field
# ---------------------------------------------------------------------------


def test_bias_zero_coeffs_identity(rng):
    s = sample_from(rng.uniform(0, 100, (12, 12, 12)))
    out = bias_field(s, substream(0, 0), order=3, coeff_range=(0.0, 0.0))
    assert volumes_equal(out, s)


def test_bias_field_positive(rng):
    ones = sample_from(np.ones((12, 12, 12)))
    out = bias_field(ones, substream(5, 0), order=3, coeff_range=(-0.3, 0.3))
    assert float(out.volume.data.min()) > 0.0


def test_bias_analytic_single_coefficient():
    ones = Volume(np.ones((9, 9, 9), dtype=np.float32))
    monos = bias_monomials(3)
    coeffs = np.zeros(len(monos))
    coeffs[monos.index((1, 0, 0))] = 0.5
    out = apply_bias_field(ones, 3, coeffs)
    # x_hat = +1 at the last x slab, so the factor there is e^0.5.
    assert out.data[8, 4, 4] == pytest.approx(math.exp(0.5), rel=1e-6)
    assert out.data[0, 4, 4] == pytest.approx(math.exp(-0.5), rel=1e-6)
    assert out.data[4, 4, 4] == pytest.approx(1.0, rel=1e-6)


def test_bias_monomial_count():
    assert len(bias_monomials(3)) == 20
    assert len(bias_monomials(4)) == 35


# ---------------------------------------------------------------------------
# gamma
# ---------------------------------------------------------------------------


def test_gamma_one_identity(rng):
    s = sample_from(rng.uniform(0, 100, (12, 12, 12)))
    out = gamma_adjust(s, substream(0, 0), (0.0, 0.0))
    assert volumes_equal(out, s)


def test_gamma_preserves_endpoints(rng):
    vol = Volume(rng.uniform(5, 95, (12, 12, 12)).astype(np.float32))
    for gamma in (0.5, 1.7, 2.0):
        out = apply_gamma(vol, gamma)
        assert float(out.data.min()) == pytest.approx(float(vol.data.min()), abs=1e-4)
        assert float(out.data.max()) == pytest.approx(float(vol.data.max()), abs=1e-4)


def test_gamma_midpoint_analytic():
    vol = Volume(np.array([[[0.0, 0.5, 1.0]]], dtype=np.float32))
    out = apply_gamma(vol, 2.0)
    assert out.data[0, 0, 1] == pytest.approx(0.25, abs=1e-7)


def test_gamma_constant_volume_guard():
    vol = Volume(np.full((8, 8, 8), 42.0, dtype=np.float32))
    assert np.array_equal(apply_gamma(vol, 2.0).data, vol.data)


# ---------------------------------------------------------------------------
# k-space spikes
# ---------------------------------------------------------------------------


def test_spike_zero_strength_identity(rng):
    vol = Volume(rng.uniform(0, 100, (16, 16, 16)).astype(np.float32))
    out = inject_spikes(vol, [(3, 4, 5)], [0.0], [0.0])
    assert np.array_equal(out.data, vol.data)


def test_spike_spectral_locality(rng):
    vol = Volume(rng.uniform(0, 100, (32, 32, 32)).astype(np.float32))
    coords = [(5, 7, 9), (20, 3, 11)]
    out = inject_spikes(vol, coords, [0.1, 0.08], [0.3, 1.1])
    diff = np.fft.fftn(out.data.astype(np.float64) - vol.data.astype(np.float64))
    mag = np.abs(diff)
    injected = set(coords) | {tuple((-c) % 32 for c in p) for p in coords}
    peak = mag.max()
    for p in injected:
        mag[p] = 0.0
    # Residual spectrum >= 60 dB below the spike peak.
    assert mag.max() <= peak * 1e-3


def test_spike_output_real_and_finite(rng):
    vol = Volume(rng.uniform(0, 50, (16, 16, 16)).astype(np.float32))
    out = inject_spikes(vol, [(2, 2, 2)], [0.15], [0.9])
    assert np.isfinite(out.data).all()


def test_spike_hermitian_imaginary_residue(rng):
    # Rebuild the spiked spectrum the way the op does: the Hermitian
    # pairing must keep the inverse transform real to fp roundoff.
    import scipy.fft

    from fetaug.augment import hermitian_partner

    vol = Volume(rng.uniform(0, 100, (32, 32, 32)).astype(np.float32))
    spectrum = scipy.fft.fftn(vol.data.astype(np.float64))
    peak = np.abs(spectrum).max()
    for point, r, phi in (((5, 7, 9), 0.1, 0.4), ((20, 3, 11), 0.12, 2.2)):
        value = r * peak * np.exp(1j * phi)
        spectrum[point] += value
        spectrum[hermitian_partner(point, vol.dims)] += np.conj(value)
    full = scipy.fft.ifftn(spectrum)
    span = float(vol.data.max() - vol.data.min())
    assert np.abs(full.imag).max() <= 1e-6 * span


@pytest.mark.parametrize("dims", [(16, 16, 16), (16, 16, 15), (8, 12, 10)])
def test_spike_half_spectrum_matches_full_oracle(rng, dims):
    # The rfftn bookkeeping must equal an explicit full-spectrum build.
    import scipy.fft

    from fetaug.augment import hermitian_partner

    vol = Volume(rng.uniform(0, 100, dims).astype(np.float32))
    coords = [(3, 4, 5), (0, 2, 0), (1, 1, dims[2] // 2)]
    coords = [c for c in coords if hermitian_partner(c, dims) != c]
    strengths = [0.1] * len(coords)
    phases = [0.7] * len(coords)
    got = inject_spikes(vol, coords, strengths, phases)
    full = scipy.fft.fftn(vol.data.astype(np.float64))
    peak = np.abs(scipy.fft.rfftn(vol.data)).max()
    for c, r, ph in zip(coords, strengths, phases):
        v = np.complex64(r * peak * np.exp(1j * ph))
        full[c] += v
        full[hermitian_partner(c, dims)] += np.conj(v)
    want = scipy.fft.ifftn(full).real
    span = float(vol.data.max() - vol.data.min())
    assert np.abs(got.data - want).max() <= 1e-6 * span


def test_spike_rejects_self_conjugate():
    vol = Volume(np.ones((8, 8, 8), dtype=np.float32))
    with pytest.raises(ParameterError):
        inject_spikes(vol, [(0, 4, 0)], [0.1], [0.0])


def test_spike_op_excludes_dc(rng):
    s = sample_from(rng.uniform(0, 100, (8, 8, 8)))
    for seed in range(20):
        out = kspace_spike(s, substream(seed, 0), (1, 3), (0.05, 0.15))
        assert np.isfinite(out.volume.data).all()


# ---------------------------------------------------------------------------
# anisotropy
# ---------------------------------------------------------------------------


def test_anisotropy_factor_one_identity(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)))
    out = anisotropize(s, substream(0, 0), (1.0, 1.0))
    assert volumes_equal(out, s)


def test_anisotropy_constant_volume(rng):
    s = sample_from(np.full((16, 16, 16), 37.0))
    for seed in range(5):
        out = anisotropize(s, substream(seed, 0), (1.5, 2.0))
        assert np.allclose(out.volume.data, 37.0, atol=1e-4)


def resample_1d_oracle(line, factor):
    """Scalar slab-average downsample + np.interp upsample."""
    n = len(line)
    m = max(2, int(round(n / factor)))
    width = n / m
    pooled = np.zeros(m)
    for p in range(m):
        lo, hi = p * width, (p + 1) * width
        total = 0.0
        for i in range(n):
            overlap = max(0.0, min(hi, i + 1.0) - max(lo, float(i)))
            total += overlap * float(line[i])
        pooled[p] = total / width
    up_pos = (np.arange(n) + 0.5) / width - 0.5
    return np.interp(up_pos, np.arange(m), pooled)


@pytest.mark.parametrize("factor", [1.5, 2.0])
def test_anisotropy_nyquist_attenuation_and_oracle(factor):
    n = 64
    line = ((-1.0) ** np.arange(n)).astype(np.float32)
    data = np.broadcast_to(line[:, None, None], (n, 16, 16)).copy()
    vol = Volume(data)
    out = resample_axis_down_up(vol, 0, factor)
    rms_before = float(np.sqrt(np.mean(data**2)))
    rms_after = float(np.sqrt(np.mean(out.data**2)))
    assert rms_after <= 0.5 * rms_before
    oracle_line = resample_1d_oracle(line, factor)
    assert np.abs(out.data[:, 0, 0].astype(np.float64) - oracle_line).max() < 1e-5


def test_anisotropy_oracle_random_signal(rng):
    line = rng.uniform(-5, 5, size=49).astype(np.float32)
    data = np.broadcast_to(line[:, None, None], (49, 4, 4)).copy()
    out = resample_axis_down_up(Volume(data), 0, 1.7)
    oracle_line = resample_1d_oracle(line, 1.7)
    assert np.abs(out.data[:, 0, 0].astype(np.float64) - oracle_line).max() < 1e-5


def test_anisotropy_keypoints_and_dims_unchanged(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)), visible_at={"bladder": (3, 3, 3)})
    out = anisotropize(s, substream(1, 0), (1.5, 2.0))
    assert out.volume.dims == s.volume.dims
    assert out.keypoints is s.keypoints


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------


def test_rotate_zero_identity(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)))
    out = rotate_sample(s, substream(0, 0), (0.0, 0.0))
    assert out is s


def test_rotate_90z_keypoint_analytic():
    data = np.zeros((64, 64, 64), dtype=np.float32)
    s = sample_from(data, visible_at={"bladder": (40.0, 32.0, 32.0)})
    out = rotate_by(s, (0.0, 0.0, 90.0))
    i = KEYPOINT_NAMES.index("bladder")
    assert np.allclose(out.keypoints.positions[i], (31.0, 40.0, 32.0), atol=1e-9)


def test_rotate_heatmap_commutation(rng):
    # Synthesizing after rotation must agree with rotating pre-synthesized
    # channels, to within interpolation error.
    pos = np.array([30.0, 36.0, 33.0])
    s = sample_from(np.zeros((64, 64, 64)), visible_at={"bladder": pos})
    angles = (11.0, -17.0, 23.0)
    rotated = rotate_by(s, angles)
    hm_after = synthesize(rotated.keypoints, (64, 64, 64), 2.0)

    hm_before = synthesize(s.keypoints, (64, 64, 64), 2.0)
    t = RigidTransform.from_euler_deg(angles, s.volume.center)
    i = KEYPOINT_NAMES.index("bladder")
    warped_channel = warp_rigid(Volume(hm_before.data[i]), t, "trilinear", 0.0)
    stack = hm_after.data.copy()
    stack[i] = warped_channel.data
    from fetaug.heatmap import HeatmapStack

    k_resynth = extract(hm_after).positions[i]
    k_warped = extract(HeatmapStack(stack, 2.0, hm_after.valid)).positions[i]
    assert np.linalg.norm(k_resynth - k_warped) <= 0.5


def test_rotate_keypoint_leaving_grid_hidden():
    # Near-corner point: a 45 degree turn pushes it out of the cube.
    s = sample_from(np.zeros((32, 32, 32)), visible_at={"bladder": (30.5, 30.5, 15.5)})
    out = rotate_by(s, (0.0, 0.0, 45.0))
    i = KEYPOINT_NAMES.index("bladder")
    assert not out.keypoints.visible[i]


# ---------------------------------------------------------------------------
# scale
# ---------------------------------------------------------------------------


def test_scale_one_identity(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)))
    out = scale_sample(s, substream(0, 0), (1.0, 1.0))
    assert out is s


def test_scale_sigma_coupling():
    s = sample_from(np.zeros((32, 32, 32)), sigma=2.0, visible_at={"bladder": (16, 16, 16)})
    out = scale_by(s, 0.5)
    assert out.heatmap_sigma == pytest.approx(1.0)


def test_scale_heatmap_second_moment():
    s = sample_from(np.zeros((64, 64, 64)), sigma=2.0, visible_at={"bladder": (31.5, 31.5, 31.5)})
    out = scale_by(s, 0.5)
    hm = synthesize(out.keypoints, out.volume.dims, out.heatmap_sigma)
    i = KEYPOINT_NAMES.index("bladder")
    channel = hm.data[i].astype(np.float64)
    w = channel.sum()
    for axis in range(3):
        coords = np.arange(64, dtype=np.float64)
        marg = channel.sum(axis=tuple(a for a in range(3) if a != axis))
        mean = (marg * coords).sum() / w
        var = (marg * (coords - mean) ** 2).sum() / w
        assert var == pytest.approx((0.5 * 2.0) ** 2, rel=0.05)


def test_scale_keypoint_affine():
    s = sample_from(np.zeros((32, 32, 32)), visible_at={"bladder": (20.0, 10.0, 25.0)})
    out = scale_by(s, 0.5)
    center = s.volume.center
    i = KEYPOINT_NAMES.index("bladder")
    assert np.allclose(out.keypoints.positions[i], center + 0.5 * (np.array([20, 10, 25]) - center))


# ---------------------------------------------------------------------------
# crop
# ---------------------------------------------------------------------------


def test_crop_identity_when_already_sized(rng):
    s = sample_from(rng.uniform(0, 100, (64, 64, 64)), visible_at={"bladder": (32, 32, 32)})
    out = crop_sample(s, substream(0, 0), 64)
    assert volumes_equal(out, s)
    assert np.array_equal(out.keypoints.positions, s.keypoints.positions)


def test_crop_keypoint_near_corner_stays_visible(rng):
    s = sample_from(np.zeros((96, 96, 96)), visible_at={"bladder": (48, 48, 48)})
    out = crop_sample(s, substream(7, 0), 64)
    i = KEYPOINT_NAMES.index("bladder")
    assert out.keypoints.visible[i]
    start = np.array([48.0, 48.0, 48.0]) - out.keypoints.positions[i]
    assert np.allclose(np.round(start), start)  # integer shift


def test_crop_without_anchor_errors(rng):
    s = sample_from(np.zeros((32, 32, 32)))
    with pytest.raises(DataError):
        crop_sample(s, substream(0, 0), 16)


def test_crop_pads_small_volumes(rng):
    s = sample_from(rng.uniform(10, 20, (48, 48, 48)), visible_at={"bladder": (24, 24, 24)})
    out = crop_sample(s, substream(0, 0), 64)
    assert out.volume.dims == (64, 64, 64)
    i = KEYPOINT_NAMES.index("bladder")
    assert out.keypoints.visible[i]


def test_crop_trunk_retention_monte_carlo(phantom64):
    # Jittered crops must retain the trunk keypoints virtually always.
    s = phantom64.sample
    trunk = [KEYPOINT_NAMES.index(n) for n in
             ("bladder", "shoulder_L", "shoulder_R", "hip_L", "hip_R")]
    kept = 0
    for i in range(1000):
        out = crop_sample(s, substream(1000, i), 48)
        if out.keypoints.visible[trunk].all():
            kept += 1
    assert kept >= 990


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


def all_off() -> AugmentConfig:
    return AugmentConfig(
        rotation_prob=0, scale_prob=0, bias_prob=0, gamma_prob=0,
        noise_prob=0, spike_prob=0, anisotropy_prob=0, crop_size=32,
    )


def all_on(crop=32) -> AugmentConfig:
    return AugmentConfig(
        rotation_prob=1, scale_prob=1, bias_prob=1, gamma_prob=1,
        noise_prob=1, spike_prob=1, anisotropy_prob=1, crop_size=crop,
    )


def test_pipeline_all_zero_probs_crop_only(rng):
    s = sample_from(rng.uniform(0, 100, (48, 48, 48)), visible_at={"bladder": (24, 24, 24)})
    out, log = apply_pipeline(s, all_off(), substream(0, 0))
    assert [e["op"] for e in log] == ["crop"]
    assert out.volume.dims == (32, 32, 32)


def test_pipeline_inpainted_crop_only(rng):
    s = sample_from(rng.uniform(0, 100, (48, 48, 48)), visible_at={"bladder": (24, 24, 24)})
    s = LabeledSample(
        volume=s.volume, keypoints=s.keypoints, heatmap_sigma=s.heatmap_sigma,
        provenance="inpainted",
    )
    out, log = apply_pipeline(s, all_on(), substream(0, 0))
    assert [e["op"] for e in log] == ["crop"]


def test_pipeline_deterministic(rng, phantom64):
    s = phantom64.sample
    cfg = all_on(crop=48)
    out1, log1 = apply_pipeline(s, cfg, substream(11, 4))
    out2, log2 = apply_pipeline(s, cfg, substream(11, 4))
    assert np.array_equal(out1.volume.data, out2.volume.data)
    assert np.array_equal(out1.keypoints.positions, out2.keypoints.positions)
    assert log1 == log2


def test_pipeline_log_order(phantom64):
    s = phantom64.sample
    out, log = apply_pipeline(s, all_on(crop=48), substream(2, 0))
    ops = [e["op"] for e in log]
    expected_order = ["rotate", "scale", "bias_field", "gamma", "noise", "spike", "anisotropy", "crop"]
    assert ops == [o for o in expected_order if o in ops]
    assert ops[-1] == "crop"


def test_pipeline_geometric_consistency(phantom64):
    # A delta placed at a keypoint must follow it through the geometry.
    s = phantom64.sample
    i = KEYPOINT_NAMES.index("bladder")
    data = np.zeros(s.volume.dims, dtype=np.float32)
    kp = s.keypoints.positions[i]
    data[tuple(np.round(kp).astype(int))] = 100.0
    probe = LabeledSample(volume=Volume(data, s.volume.spacing), keypoints=s.keypoints,
                          heatmap_sigma=2.0, body_mask=s.body_mask)
    out = rotate_by(probe, (9.0, -12.0, 31.0))
    peak = np.unravel_index(np.argmax(out.volume.data), out.volume.dims)
    assert np.linalg.norm(np.asarray(peak) - out.keypoints.positions[i]) <= 1.0


def test_config_validation():
    with pytest.raises(ParameterError):
        AugmentConfig(noise_prob=1.2)
    with pytest.raises(ParameterError):
        AugmentConfig(noise_sigma_frac_range=(0.0, 0.5))
    with pytest.raises(ParameterError):
        AugmentConfig(log_gamma_range=(-2.0, 0.0))
    with pytest.raises(ParameterError):
        AugmentConfig(anisotropy_factor_range=(0.5, 2.0))
    with pytest.raises(ParameterError):
        AugmentConfig(bias_order=5)
    with pytest.raises(ParameterError):
        AugmentConfig(scale_range=(0.3, 1.0))


def test_intensity_ops_leave_structure(rng):
    s = sample_from(rng.uniform(0, 100, (16, 16, 16)), visible_at={"bladder": (8, 8, 8)})
    for op in (
        lambda x: additive_noise(x, substream(5, 0), (0.01, 0.1)),
        lambda x: bias_field(x, substream(5, 1)),
        lambda x: gamma_adjust(x, substream(5, 2)),
        lambda x: kspace_spike(x, substream(5, 3)),
        lambda x: anisotropize(x, substream(5, 4)),
    ):
        out = op(s)
        assert out.keypoints is s.keypoints
        assert out.volume.dims == s.volume.dims
        assert out.volume.spacing == s.volume.spacing
        assert out.heatmap_sigma == s.heatmap_sigma
