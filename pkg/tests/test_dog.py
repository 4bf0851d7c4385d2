import math

import mpmath as mp
import numpy as np
import pytest

from gbmseg.conv import convolve_fft
from gbmseg.dog import (
    DEFAULT_SIGMAS,
    DoGSpec,
    build_bank,
    dog_filter,
    gaussian3d,
)
from gbmseg.volume import Volume3D

mp.mp.dps = 40


def _gauss_center(sigma):
    """High-precision center value of the normalized 3-D Gaussian."""
    return float((2 * mp.pi * mp.mpf(sigma) ** 2) ** mp.mpf("-1.5"))


def _dog_center(sigma):
    """High-precision center value of the raw two-term difference."""
    s2 = mp.mpf(sigma) ** 2
    return float((2 * mp.pi * s2) ** mp.mpf("-1.5") - (mp.pi * s2) ** mp.mpf("-1.5"))


class TestGaussian:
    def test_center_value_sigma_one(self):
        g = gaussian3d(1.0, 5)
        c = g.data[2, 2, 2]
        assert c == pytest.approx(0.06349363593424097, rel=1e-13)
        assert c == pytest.approx(_gauss_center(1.0), rel=1e-13)

    def test_discrete_normalization_sums_to_one(self):
        for sigma, support in [(1.0, 5), (2.0, 9), (16.0, 33)]:
            g = gaussian3d(sigma, support, normalize=True)
            assert abs(g.data.sum() - 1.0) <= 1e-14

    def test_octahedral_symmetry_exact(self):
        g = gaussian3d(1.7, 7).data
        c = 3
        for (a, b, d) in [(1, 2, 3), (2, 0, 1), (3, 3, 2)]:
            base = g[c + a, c + b, c + d]
            for perm in [(a, b, d), (a, d, b), (b, a, d), (b, d, a), (d, a, b), (d, b, a)]:
                for sx in (-1, 1):
                    for sy in (-1, 1):
                        for sz in (-1, 1):
                            assert g[c + sx * perm[0], c + sy * perm[1], c + sz * perm[2]] == base

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError, match="sigma"):
            gaussian3d(-1.0, 5)
        with pytest.raises(ValueError, match="odd"):
            gaussian3d(1.0, 4)


class TestDoGFilter:
    def test_center_value_closed_form(self):
        # raw sampling (no DC correction) at the smallest ladder scale
        f = dog_filter(math.sqrt(2.0), 33, zero_dc=False)
        c = f.data[16, 16, 16]
        assert c == pytest.approx(-0.041045245668595150, rel=1e-12)
        assert c == pytest.approx(_dog_center(math.sqrt(2.0)), rel=1e-12)

    def test_zero_dc_sum(self):
        for sigma in DEFAULT_SIGMAS:
            f = dog_filter(sigma, 33, zero_dc=True)
            assert abs(f.data.sum()) <= 1e-12

    def test_truncation_breaks_raw_dc_at_large_sigma(self):
        # the discrete re-normalization exists because of this
        raw = dog_filter(16.0, 33, zero_dc=False)
        assert abs(raw.data.sum()) > 1e-3

    def test_center_negative_positive_annulus(self):
        for sigma in DEFAULT_SIGMAS:
            f = dog_filter(sigma, 33).data
            assert f[16, 16, 16] < 0.0
            assert f.max() > 0.0

    def test_signed_permutation_invariance(self):
        f = dog_filter(2.0, 9).data
        c = 4
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b, d = rng.integers(-4, 5, size=3)
            base = f[c + a, c + b, c + d]
            assert f[c - a, c - b, c - d] == base
            assert f[c + b, c + d, c + a] == base
            assert f[c + d, c + a, c - b] == base

    def test_value_depends_only_on_radius(self):
        f = dog_filter(2.0, 9).data
        by_r2 = {}
        for x in range(-4, 5):
            for y in range(-4, 5):
                for z in range(-4, 5):
                    by_r2.setdefault(x * x + y * y + z * z, set()).add(
                        f[4 + x, 4 + y, 4 + z]
                    )
        assert all(len(values) == 1 for values in by_r2.values())

    def test_annihilates_constant_volumes(self):
        f = dog_filter(math.sqrt(2.0), 9)
        img = Volume3D(np.full((16, 16, 16), 3.5))
        out = convolve_fft(img, f, "same")
        interior = out.data[4:-4, 4:-4, 4:-4]
        assert np.abs(interior).max() <= 1e-10


class TestBank:
    def test_default_bank_shape(self):
        bank = build_bank()
        assert len(bank) == 8
        assert all(f.dims == (33, 33, 33) for f in bank.filters)
        assert bank.sigmas == list(DEFAULT_SIGMAS)
        assert bank.kinds == ["dog"] * 8

    def test_default_ladder_values(self):
        expected = [math.sqrt(2), 2, 2 * math.sqrt(2), 4, 4 * math.sqrt(2), 8, 8 * math.sqrt(2), 16]
        np.testing.assert_allclose(DEFAULT_SIGMAS, expected, rtol=1e-15)

    def test_single_sigma_bank(self):
        bank = build_bank(DoGSpec(sigmas=(2.0,), support=9))
        assert len(bank) == 1
        assert bank.filters[0].dims == (9, 9, 9)

    def test_deterministic_construction(self):
        a = build_bank(DoGSpec(support=9))
        b = build_bank(DoGSpec(support=9))
        for fa, fb in zip(a.filters, b.filters):
            assert np.array_equal(fa.data, fb.data)

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="odd"):
            DoGSpec(support=32)
        with pytest.raises(ValueError, match="increasing"):
            DoGSpec(sigmas=(2.0, 2.0))
        with pytest.raises(ValueError, match="positive"):
            DoGSpec(sigmas=(-1.0, 2.0))
        with pytest.raises(ValueError, match="at least one"):
            DoGSpec(sigmas=())
