"""True 3-D linear convolution: a direct reference path and an FFT fast path.

Both paths compute the same zero-padded linear convolution

    out[x, y, z] = sum_t image[t] * kernel[(x, y, z) - t]

and differ only in cost: the direct path is O(m^3 n^3) for an n^3 image and
m^3 kernel, the FFT path is O(n^3 log n).  Two output modes are supported:

``"full"``
    The complete linear-convolution extent, dims (nx+mx-1, ny+my-1, nz+mz-1).
``"same"``
    The centered crop of the full result back to the image dims.  Requires
    odd kernel dims so the center voxel is unambiguous.

The FFT path zero-pads both operands to the full extent rounded up to
FFT-efficient lengths (products of small primes), multiplies the real-input
forward transforms element-wise, and inverse-transforms.  Agreement between
the two paths is the correctness contract; see the test suite.
"""

import numpy as np
import scipy.fft

from .volume import Volume3D, MultiChannelVolume
from .dog import FilterBank

MODES = ("same", "full")


def _check_mode(mode, kernel_dims):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "same" and any(m % 2 == 0 for m in kernel_dims):
        raise ValueError(f"'same' mode requires odd kernel dims, got {kernel_dims}")


def _crop(full: np.ndarray, image_dims, kernel_dims, mode):
    if mode == "full":
        return full
    starts = [(m - 1) // 2 for m in kernel_dims]
    sl = tuple(slice(s, s + n) for s, n in zip(starts, image_dims))
    return full[sl]


def convolve_direct(image: Volume3D, kernel: Volume3D, mode="same") -> Volume3D:
    """Space-domain 3-D convolution; the slow reference implementation.

    Accumulates one shifted, scaled copy of the larger operand per tap of the
    smaller one, which is the literal convolution sum evaluated in O(m^3 n^3)
    operations.
    """
    _check_mode(mode, kernel.dims)
    a, b = image.data, kernel.data
    # Loop over the operand with fewer taps; full-mode convolution commutes.
    if b.size > a.size:
        a, b = b, a
    full_dims = tuple(n + m - 1 for n, m in zip(image.dims, kernel.dims))
    full = np.zeros(full_dims)
    shifted = np.empty_like(a)
    nx, ny, nz = a.shape
    for kx in range(b.shape[0]):
        for ky in range(b.shape[1]):
            for kz in range(b.shape[2]):
                np.multiply(a, b[kx, ky, kz], out=shifted)
                full[kx : kx + nx, ky : ky + ny, kz : kz + nz] += shifted
    return Volume3D(_crop(full, image.dims, kernel.dims, mode))


def _fft_shape(image_dims, kernel_dims):
    return tuple(
        scipy.fft.next_fast_len(n + m - 1) for n, m in zip(image_dims, kernel_dims)
    )


def _fft_forward(data: np.ndarray, shape, workers=None):
    return scipy.fft.rfftn(data, s=shape, workers=workers)


def _fft_finish(product, shape, image_dims, kernel_dims, mode, workers=None):
    full_dims = tuple(n + m - 1 for n, m in zip(image_dims, kernel_dims))
    out = scipy.fft.irfftn(product, s=shape, workers=workers)
    out = out[tuple(slice(0, d) for d in full_dims)]
    return _crop(out, image_dims, kernel_dims, mode)


def convolve_fft(image: Volume3D, kernel: Volume3D, mode="same", workers=None) -> Volume3D:
    """Fourier-space 3-D convolution; same contract as :func:`convolve_direct`.

    Parameters
    ----------
    workers : int, optional
        Thread count passed to the FFT backend.  The result is independent
        of the worker count.
    """
    _check_mode(mode, kernel.dims)
    shape = _fft_shape(image.dims, kernel.dims)
    fi = _fft_forward(image.data, shape, workers)
    fk = _fft_forward(kernel.data, shape, workers)
    out = _fft_finish(fi * fk, shape, image.dims, kernel.dims, mode, workers)
    return Volume3D(out)


def convolve_bank(image: MultiChannelVolume, bank: FilterBank, mode="same",
                  workers=None) -> list:
    """Convolve every image channel with every filter of a bank.

    The forward transform of each channel is computed once and reused across
    all filters, as is each filter's transform across channels.  Returns one
    volume per (channel, filter) pair, channel-major: outputs of channel 0
    with filters 0..F-1 first, then channel 1, and so on.
    """
    if len(bank) == 0:
        raise ValueError("filter bank is empty")
    kernel_dims = bank.filters[0].dims
    _check_mode(mode, kernel_dims)
    shape = _fft_shape(image.dims, kernel_dims)
    filter_ffts = [_fft_forward(f.data, shape, workers) for f in bank.filters]
    outputs = []
    for channel in image.channels:
        fc = _fft_forward(channel.data, shape, workers)
        for ff in filter_ffts:
            out = _fft_finish(fc * ff, shape, image.dims, kernel_dims, mode, workers)
            outputs.append(Volume3D(out))
    return outputs
