import numpy as np
import pytest

from gbmseg.volume import (
    LabelVolume,
    MultiChannelVolume,
    Volume3D,
    gradient_magnitude,
    linear_index,
    unravel_index,
    zscore_normalize,
)


def _gradient_oracle(a):
    """Independent per-voxel finite differences: central interior, one-sided faces."""
    nx, ny, nz = a.shape
    out = np.zeros(a.shape)
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                def diff(axis, i, n):
                    idx = [x, y, z]
                    if i == 0:
                        lo, hi, denom = 0, 1, 1.0
                    elif i == n - 1:
                        lo, hi, denom = n - 2, n - 1, 1.0
                    else:
                        lo, hi, denom = i - 1, i + 1, 2.0
                    idx[axis] = hi
                    high = a[tuple(idx)]
                    idx[axis] = lo
                    low = a[tuple(idx)]
                    return (high - low) / denom

                gx = diff(0, x, nx)
                gy = diff(1, y, ny)
                gz = diff(2, z, nz)
                out[x, y, z] = np.sqrt(gx * gx + gy * gy + gz * gz)
    return out


class TestGradientMagnitude:
    def test_constant_volume_is_zero(self):
        v = Volume3D(np.full((5, 4, 6), 7.0))
        g = gradient_magnitude(v)
        assert np.array_equal(g.data, np.zeros((5, 4, 6)))

    def test_unit_ramp_interior(self):
        x = np.arange(5, dtype=float)
        v = Volume3D(np.broadcast_to(x[:, None, None], (5, 5, 5)).copy())
        g = gradient_magnitude(v)
        assert np.array_equal(g.data[1:-1, :, :], np.ones((3, 5, 5)))

    def test_matches_per_voxel_oracle(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((8, 8, 8))
        g = gradient_magnitude(Volume3D(a))
        np.testing.assert_allclose(g.data, _gradient_oracle(a), atol=1e-12, rtol=0)

    def test_nonnegative_everywhere(self):
        for seed in range(5):
            a = np.random.default_rng(seed).standard_normal((6, 5, 7))
            assert gradient_magnitude(Volume3D(a)).data.min() >= 0.0

    def test_invariant_under_constant_shift(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((6, 6, 6))
        g0 = gradient_magnitude(Volume3D(a))
        g1 = gradient_magnitude(Volume3D(a + 123.25))
        np.testing.assert_allclose(g0.data, g1.data, atol=1e-12, rtol=0)

    def test_thin_axis_rejected(self):
        with pytest.raises(ValueError):
            gradient_magnitude(Volume3D(np.zeros((1, 5, 5))))


class TestZscoreNormalize:
    def test_two_point_standardization(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = 1.0
        a[1, 1, 1] = 3.0
        mask = a != 0
        out = zscore_normalize(Volume3D(a), mask)
        assert out.data[0, 0, 0] == -1.0
        assert out.data[1, 1, 1] == 1.0
        assert np.all(out.data[~mask] == 0.0)

    def test_idempotent_on_standardized_input(self):
        rng = np.random.default_rng(11)
        a = rng.standard_normal((6, 6, 6))
        mask = np.ones(a.shape, dtype=bool)
        once = zscore_normalize(Volume3D(a), mask)
        twice = zscore_normalize(once, mask)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-9, rtol=0)

    def test_moments_after_normalization(self):
        rng = np.random.default_rng(5)
        a = rng.normal(40.0, 13.0, size=(9, 8, 7))
        mask = rng.random(a.shape) < 0.6
        out = zscore_normalize(Volume3D(a), mask)
        vals = out.data[mask]
        assert abs(vals.mean()) <= 1e-12
        assert abs(vals.std() - 1.0) <= 1e-12

    def test_default_mask_is_nonzero_voxels(self):
        a = np.zeros((4, 4, 4))
        a[:2, 0, 0] = [2.0, 4.0]
        out = zscore_normalize(Volume3D(a))
        assert out.data[0, 0, 0] == -1.0
        assert out.data[1, 0, 0] == 1.0
        assert np.all(out.data.ravel()[2:] == 0.0) or np.count_nonzero(out.data) == 2

    def test_zero_variance_rejected(self):
        a = np.full((3, 3, 3), 5.0)
        with pytest.raises(ValueError, match="variance"):
            zscore_normalize(Volume3D(a))

    def test_tiny_mask_rejected(self):
        a = np.zeros((3, 3, 3))
        a[0, 0, 0] = 1.0
        with pytest.raises(ValueError, match="at least 2"):
            zscore_normalize(Volume3D(a))


class TestContainers:
    def test_linear_index_round_trips(self):
        dims = (3, 4, 5)
        seen = set()
        for x in range(dims[0]):
            for y in range(dims[1]):
                for z in range(dims[2]):
                    i = linear_index(dims, x, y, z)
                    assert unravel_index(dims, i) == (x, y, z)
                    seen.add(i)
        assert seen == set(range(3 * 4 * 5))

    def test_volume_rejects_nan(self):
        a = np.zeros((2, 2, 2))
        a[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            Volume3D(a)

    def test_volume_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            Volume3D(np.zeros((2, 2)))

    def test_multichannel_requires_matching_dims(self):
        a = Volume3D(np.zeros((2, 2, 2)))
        b = Volume3D(np.zeros((2, 3, 2)))
        with pytest.raises(ValueError, match="dims"):
            MultiChannelVolume([a, b], ["one", "two"])

    def test_multichannel_requires_unique_names(self):
        a = Volume3D(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError, match="unique"):
            MultiChannelVolume([a, a], ["same", "same"])

    def test_labels_must_be_in_range(self):
        with pytest.raises(ValueError, match="outside"):
            LabelVolume(np.full((2, 2, 2), 9))

    def test_labels_must_be_integral(self):
        with pytest.raises(ValueError, match="integer"):
            LabelVolume(np.full((2, 2, 2), 1.5))

    def test_labels_accept_integral_floats(self):
        lv = LabelVolume(np.full((2, 2, 2), 3.0))
        assert lv.labels.dtype == np.uint8
        assert np.all(lv.labels == 3)
