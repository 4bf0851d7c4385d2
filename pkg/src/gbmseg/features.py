"""Per-voxel feature extraction: intensities, gradients, and DoG responses.

For each input channel, 2 + 2 * bank_size feature volumes are produced in a
fixed order:

    intensity,
    |gradient(intensity)|,
    filter_1 * intensity, ..., filter_F * intensity,
    filter_1 * |gradient|, ..., filter_F * |gradient|

Channels are concatenated in input order, so a 4-channel image with an
8-filter bank yields 72 features per voxel (18 per channel).  All
convolutions are centered ("same" mode) and run through the FFT path, with
each volume's forward transform computed once and reused across filters.
"""

from dataclasses import dataclass

import numpy as np

from . import conv
from .dog import FilterBank
from .volume import MultiChannelVolume, Volume3D, gradient_magnitude


@dataclass(eq=False)
class FeatureTensor:
    """Per-voxel feature vectors over a volume grid.

    data has shape (nx, ny, nz, F), voxel-major: the F features of one voxel
    are contiguous.  feature_names documents the fixed feature order.
    """

    data: np.ndarray
    feature_names: list

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.feature_names = [str(n) for n in self.feature_names]
        if self.data.ndim != 4:
            raise ValueError(f"feature data must be 4-D, got shape {self.data.shape}")
        if self.data.shape[3] != len(self.feature_names):
            raise ValueError(
                f"{self.data.shape[3]} feature columns but "
                f"{len(self.feature_names)} names"
            )
        if not np.isfinite(self.data).all():
            raise ValueError("feature data contains NaN or Inf")

    @property
    def dims(self):
        return self.data.shape[:3]

    @property
    def feature_count(self):
        return self.data.shape[3]


def feature_names(channel_names, bank: FilterBank) -> list:
    """The feature-order contract for a channel set and filter bank."""
    names = []
    for ch in channel_names:
        names.append(f"{ch}.intensity")
        names.append(f"{ch}.gradmag")
        for i in range(len(bank)):
            names.append(f"{ch}.filt{i + 1}.intensity")
        for i in range(len(bank)):
            names.append(f"{ch}.filt{i + 1}.gradmag")
    return names


def extract_features(image: MultiChannelVolume, bank: FilterBank,
                     workers=None) -> FeatureTensor:
    """Build the per-voxel feature tensor for a (normalized) image.

    Intensity normalization is the caller's responsibility; see
    :func:`gbmseg.volume.zscore_normalize`.
    """
    if len(bank) == 0:
        raise ValueError("filter bank is empty")
    kernel_dims = bank.filters[0].dims
    conv._check_mode("same", kernel_dims)
    nf = len(bank)
    block = 2 + 2 * nf
    dims = image.dims
    out = np.empty(dims + (image.n_channels * block,))

    shape = conv._fft_shape(dims, kernel_dims)
    filter_ffts = [conv._fft_forward(f.data, shape, workers) for f in bank.filters]

    for ci, channel in enumerate(image.channels):
        base = channel.data
        grad = gradient_magnitude(channel).data
        off = ci * block
        out[..., off] = base
        out[..., off + 1] = grad
        for src_idx, src in enumerate((base, grad)):
            fsrc = conv._fft_forward(src, shape, workers)
            for fi, ff in enumerate(filter_ffts):
                col = off + 2 + src_idx * nf + fi
                out[..., col] = conv._fft_finish(
                    fsrc * ff, shape, dims, kernel_dims, "same", workers
                )
    return FeatureTensor(out, feature_names(image.channel_names, bank))


def gather_voxels(features: FeatureTensor, coords) -> np.ndarray:
    """Collect the feature vectors at the given (x, y, z) coordinates.

    Returns a matrix with one row per coordinate, in the given order;
    duplicate coordinates yield duplicate rows.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"coords must be (n, 3), got shape {coords.shape}")
    dims = np.asarray(features.dims)
    if coords.size and ((coords < 0) | (coords >= dims)).any():
        bad = coords[((coords < 0) | (coords >= dims)).any(axis=1)][0]
        raise ValueError(f"coordinate {tuple(bad)} outside dims {features.dims}")
    return features.data[coords[:, 0], coords[:, 1], coords[:, 2], :]
