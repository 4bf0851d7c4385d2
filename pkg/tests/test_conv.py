import numpy as np
import pytest

from gbmseg.conv import convolve_bank, convolve_direct, convolve_fft
from gbmseg.dog import FilterBank
from gbmseg.volume import MultiChannelVolume, Volume3D


def _conv_full_oracle(img, ker):
    """Literal triple-loop evaluation of the zero-padded convolution sum."""
    nx, ny, nz = img.shape
    mx, my, mz = ker.shape
    out = np.zeros((nx + mx - 1, ny + my - 1, nz + mz - 1))
    for x in range(out.shape[0]):
        for y in range(out.shape[1]):
            for z in range(out.shape[2]):
                s = 0.0
                for tx in range(max(0, x - mx + 1), min(nx, x + 1)):
                    for ty in range(max(0, y - my + 1), min(ny, y + 1)):
                        for tz in range(max(0, z - mz + 1), min(nz, z + 1)):
                            s += img[tx, ty, tz] * ker[x - tx, y - ty, z - tz]
                out[x, y, z] = s
    return out


def _impulse(shape):
    k = np.zeros(shape)
    k[tuple(s // 2 for s in shape)] = 1.0
    return Volume3D(k)


class TestDirect:
    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        img = rng.standard_normal((6, 6, 6))
        ker = rng.standard_normal((3, 3, 3))
        got = convolve_direct(Volume3D(img), Volume3D(ker), "full")
        np.testing.assert_allclose(got.data, _conv_full_oracle(img, ker), atol=1e-12, rtol=0)

    def test_oracle_with_nonsquare_dims(self):
        rng = np.random.default_rng(1)
        img = rng.standard_normal((5, 7, 4))
        ker = rng.standard_normal((3, 1, 5))
        got = convolve_direct(Volume3D(img), Volume3D(ker), "full")
        np.testing.assert_allclose(got.data, _conv_full_oracle(img, ker), atol=1e-12, rtol=0)

    def test_impulse_identity_exact(self):
        rng = np.random.default_rng(2)
        img = rng.standard_normal((7, 6, 5))
        got = convolve_direct(Volume3D(img), _impulse((3, 3, 3)), "same")
        assert np.array_equal(got.data, img)

    def test_zero_sum_kernel_kills_constants(self):
        rng = np.random.default_rng(3)
        ker = rng.standard_normal((3, 3, 3))
        ker -= ker.mean()
        img = np.full((8, 8, 8), 4.25)
        got = convolve_direct(Volume3D(img), Volume3D(ker), "same")
        assert np.abs(got.data[1:-1, 1:-1, 1:-1]).max() <= 1e-12

    def test_even_kernel_same_mode_rejected(self):
        img = Volume3D(np.zeros((4, 4, 4)))
        ker = Volume3D(np.zeros((2, 3, 3)))
        with pytest.raises(ValueError, match="odd"):
            convolve_direct(img, ker, "same")

    def test_unknown_mode_rejected(self):
        img = Volume3D(np.zeros((4, 4, 4)))
        ker = Volume3D(np.zeros((3, 3, 3)))
        with pytest.raises(ValueError, match="mode"):
            convolve_direct(img, ker, "valid")


class TestFFT:
    def test_impulse_identity(self):
        rng = np.random.default_rng(4)
        img = rng.standard_normal((7, 6, 5))
        got = convolve_fft(Volume3D(img), _impulse((3, 3, 3)), "same")
        np.testing.assert_allclose(got.data, img, atol=1e-10, rtol=0)

    def test_agrees_with_direct(self):
        rng = np.random.default_rng(5)
        img = rng.standard_normal((16, 16, 16))
        ker = rng.standard_normal((5, 5, 5))
        d = convolve_direct(Volume3D(img), Volume3D(ker), "same")
        f = convolve_fft(Volume3D(img), Volume3D(ker), "same")
        assert np.abs(d.data - f.data).max() <= 1e-9

    @pytest.mark.parametrize("mode", ["same", "full"])
    def test_output_dims_contract(self, mode):
        img = Volume3D(np.zeros((6, 7, 8)))
        ker = Volume3D(np.zeros((3, 5, 1)))
        out = convolve_fft(img, ker, mode)
        if mode == "same":
            assert out.dims == (6, 7, 8)
        else:
            assert out.dims == (8, 11, 8)

    def test_random_pairs_both_modes(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            idims = tuple(rng.integers(4, 13, size=3))
            kdims = tuple(int(k) | 1 for k in rng.integers(1, 6, size=3))
            img = Volume3D(rng.standard_normal(idims))
            ker = Volume3D(rng.standard_normal(kdims))
            for mode in ("same", "full"):
                d = convolve_direct(img, ker, mode)
                f = convolve_fft(img, ker, mode)
                assert np.abs(d.data - f.data).max() <= 1e-9

    def test_workers_do_not_change_result(self):
        rng = np.random.default_rng(7)
        img = Volume3D(rng.standard_normal((10, 9, 8)))
        ker = Volume3D(rng.standard_normal((3, 3, 3)))
        a = convolve_fft(img, ker, "same", workers=1)
        b = convolve_fft(img, ker, "same", workers=4)
        assert np.array_equal(a.data, b.data)


class TestProperties:
    def test_linearity(self):
        rng = np.random.default_rng(8)
        i1 = rng.standard_normal((8, 8, 8))
        i2 = rng.standard_normal((8, 8, 8))
        ker = Volume3D(rng.standard_normal((3, 3, 3)))
        a, b = 2.5, -1.25
        lhs = convolve_fft(Volume3D(a * i1 + b * i2), ker, "same")
        rhs = a * convolve_fft(Volume3D(i1), ker, "same").data \
            + b * convolve_fft(Volume3D(i2), ker, "same").data
        assert np.abs(lhs.data - rhs).max() <= 1e-9

    def test_commutativity_full_mode(self):
        rng = np.random.default_rng(9)
        img = Volume3D(rng.standard_normal((6, 5, 7)))
        ker = Volume3D(rng.standard_normal((4, 4, 3)))
        ab = convolve_direct(img, ker, "full")
        ba = convolve_direct(ker, img, "full")
        assert np.abs(ab.data - ba.data).max() <= 1e-9
        ab_f = convolve_fft(img, ker, "full")
        ba_f = convolve_fft(ker, img, "full")
        assert np.abs(ab_f.data - ba_f.data).max() <= 1e-9


class TestBank:
    def _bank(self, kernels, sigmas):
        return FilterBank([Volume3D(k) for k in kernels], sigmas)

    def test_single_impulse_filter_returns_input(self):
        rng = np.random.default_rng(10)
        img = rng.standard_normal((6, 6, 6))
        bank = self._bank([_impulse((3, 3, 3)).data], [1.0])
        image = MultiChannelVolume([Volume3D(img)], ["only"])
        (out,) = convolve_bank(image, bank, "same")
        np.testing.assert_allclose(out.data, img, atol=1e-10, rtol=0)

    def test_matches_individual_calls(self):
        rng = np.random.default_rng(11)
        chans = [Volume3D(rng.standard_normal((7, 6, 8))) for _ in range(2)]
        image = MultiChannelVolume(chans, ["a", "b"])
        kernels = [rng.standard_normal((3, 3, 3)) for _ in range(3)]
        bank = self._bank(kernels, [1.0, 2.0, 3.0])
        outs = convolve_bank(image, bank, "same")
        assert len(outs) == 6
        k = 0
        for ch in chans:
            for ker in kernels:
                single = convolve_fft(ch, Volume3D(ker), "same")
                assert np.abs(outs[k].data - single.data).max() <= 1e-10
                k += 1

    def test_empty_bank_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            FilterBank([], [])
        bank = self._bank([np.zeros((3, 3, 3))], [1.0])
        bank.filters = []  # simulate a degenerate bank bypassing validation
        image = MultiChannelVolume([Volume3D(np.zeros((4, 4, 4)))], ["only"])
        with pytest.raises(ValueError, match="empty"):
            convolve_bank(image, bank, "same")
