import numpy as np
import pytest

from conftest import random_volume
from msrd.errors import DataError
from msrd.metrics import (
    DEFAULT_SSIM,
    SsimParams,
    adapted_ssim_params,
    gaussian_window,
    psnr,
    rel_error,
    ssim,
    volume_ssim,
)
from msrd.types import ComplexVolume


def brute_force_ssim(ref, tst, size=11, sigma=1.5):
    """Independent double-loop oracle with explicit window sums."""
    window = gaussian_window(size, sigma)
    data_range = ref.max() - ref.min()
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    rows, cols = ref.shape
    values = []
    for i in range(rows - size + 1):
        for j in range(cols - size + 1):
            pr = ref[i : i + size, j : j + size]
            pt = tst[i : i + size, j : j + size]
            mr = float((window * pr).sum())
            mt = float((window * pt).sum())
            vr = float((window * pr * pr).sum()) - mr * mr
            vt = float((window * pt * pt).sum()) - mt * mt
            cov = float((window * pr * pt).sum()) - mr * mt
            values.append(
                ((2 * mr * mt + c1) * (2 * cov + c2))
                / ((mr * mr + mt * mt + c1) * (vr + vt + c2))
            )
    return float(np.mean(values))


def checkerboard(n, contrast=1.0):
    idx = np.indices((n, n)).sum(axis=0)
    return contrast * ((idx % 2) * 2.0 - 1.0)


def test_window_normalized():
    w = gaussian_window(11, 1.5)
    assert w.shape == (11, 11)
    assert abs(w.sum() - 1.0) < 1e-12


def test_identical_images_score_one():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 32))
    assert abs(ssim(x, x) - 1.0) < 1e-12


def test_sign_flip_of_locally_zero_mean_image_is_nonpositive():
    # window means vanish on a checkerboard, so the structure term dominates
    x = checkerboard(32) + 0.01 * np.random.default_rng(1).normal(size=(32, 32))
    assert ssim(x, -x) <= 0.0


def test_checkerboard_contrast_matches_brute_force():
    ref = checkerboard(24)
    test = checkerboard(24, contrast=0.5)
    assert abs(ssim(ref, test) - brute_force_ssim(ref, test)) < 1e-10


def test_random_pairs_match_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(3):
        ref = rng.normal(size=(20, 20))
        test = ref + 0.4 * rng.normal(size=(20, 20))
        assert abs(ssim(ref, test) - brute_force_ssim(ref, test)) < 1e-10


def test_symmetry_when_ranges_agree():
    rng = np.random.default_rng(3)
    a = rng.uniform(0.0, 1.0, size=(24, 24))
    b = rng.uniform(0.0, 1.0, size=(24, 24))
    # pin equal data ranges exactly
    a[0, 0], a[0, 1] = 0.0, 1.0
    b[0, 0], b[0, 1] = 0.0, 1.0
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_common_offset_behaviour():
    # The contrast/structure statistics are exactly shift-invariant; the full
    # SSIM is not (its luminance term depends on the absolute means), so only
    # the identical-image case carries over a common offset unchanged.
    rng = np.random.default_rng(4)
    a = rng.normal(size=(24, 24))
    b = a + 0.2 * rng.normal(size=(24, 24))
    assert abs(ssim(a + 5.0, a + 5.0) - ssim(a, a)) < 1e-12
    w = gaussian_window(11, 1.5)
    from msrd.metrics import _local_stats

    var_base = _local_stats(a * a, w) - _local_stats(a, w) ** 2
    shifted = a + 5.0
    var_shift = _local_stats(shifted * shifted, w) - _local_stats(shifted, w) ** 2
    assert np.abs(var_base - var_shift).max() < 1e-10
    cov_base = _local_stats(a * b, w) - _local_stats(a, w) * _local_stats(b, w)
    cov_shift = _local_stats((a + 5.0) * (b + 5.0), w) - _local_stats(a + 5.0, w) * _local_stats(
        b + 5.0, w
    )
    assert np.abs(cov_base - cov_shift).max() < 1e-9


def test_ssim_preconditions():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(16, 16))
    with pytest.raises(DataError):
        ssim(x, rng.normal(size=(16, 18)))
    with pytest.raises(DataError):
        ssim(np.ones((16, 16)), x)  # constant reference
    with pytest.raises(DataError):
        ssim(rng.normal(size=(8, 8)), rng.normal(size=(8, 8)))  # below window size


def test_adapted_params_shrink_window():
    params = adapted_ssim_params((8, 8), DEFAULT_SSIM)
    assert params.window_size == 7
    assert adapted_ssim_params((32, 32)).window_size == 11
    with pytest.raises(DataError):
        adapted_ssim_params((2, 2))


def test_volume_ssim_identical_is_one():
    vol = random_volume(3, 16, seed=6)
    assert volume_ssim(vol, vol) == pytest.approx(1.0, abs=1e-12)


def test_volume_ssim_is_slice_mean():
    rng = np.random.default_rng(7)
    ref = np.abs(rng.normal(size=(2, 24, 24))) + 0.1
    test = ref.copy()
    test[1] = ref[1] + 0.5 * rng.normal(size=(24, 24))
    ref_v, test_v = ComplexVolume(ref.astype(complex)), ComplexVolume(test.astype(complex))
    per_slice = [ssim(ref[s], np.abs(test[s])) for s in range(2)]
    assert volume_ssim(ref_v, test_v) == pytest.approx(np.mean(per_slice), abs=1e-12)


def test_volume_ssim_monotone_in_perturbation():
    vol = random_volume(2, 24, seed=8)
    rng = np.random.default_rng(9)
    noise = rng.normal(size=vol.data.shape) + 1j * rng.normal(size=vol.data.shape)
    scale = float(np.abs(vol.data).max())
    scores = [
        volume_ssim(vol, ComplexVolume(vol.data + eps * scale * noise))
        for eps in (1e-3, 1e-2, 1e-1)
    ]
    assert scores[0] > scores[1] > scores[2]


def test_psnr_and_rel_error_basics():
    rng = np.random.default_rng(10)
    ref = rng.normal(size=(16, 16))
    assert rel_error(ref, ref) == 0.0
    assert psnr(ref, ref) == np.inf
    offset = ref + 0.5
    expected = 10.0 * np.log10((ref.max() - ref.min()) ** 2 / 0.25)
    assert psnr(ref, offset) == pytest.approx(expected, rel=1e-12)


def test_psnr_rel_error_against_direct_oracle():
    rng = np.random.default_rng(11)
    ref = rng.normal(size=(16, 16))
    test = ref + 0.2 * rng.normal(size=(16, 16))
    mse = float(np.mean((ref - test) ** 2))
    data_range = float(ref.max() - ref.min())
    assert psnr(ref, test) == pytest.approx(10 * np.log10(data_range**2 / mse), rel=1e-12)
    direct = np.sqrt(np.sum((ref - test) ** 2)) / np.sqrt(np.sum(ref**2))
    assert rel_error(ref, test) == pytest.approx(direct, rel=1e-12)


def test_rel_error_zero_reference_rejected():
    with pytest.raises(DataError):
        rel_error(np.zeros((4, 4)), np.ones((4, 4)))


def test_ssim_params_validation():
    with pytest.raises(DataError):
        SsimParams(window_size=10)
    with pytest.raises(DataError):
        SsimParams(sigma=0.0)
