"""Dense 3-D volume containers and elementary voxel operations.

Volumes are dense scalar grids stored as float64 ndarrays of shape
(nx, ny, nz), indexed ``data[x, y, z]``.  The canonical linear order of a
volume is x-fastest: ``index = x + nx * (y + ny * z)``, which is what the
on-disk formats in :mod:`gbmseg.io` use.  All containers are treated as
immutable after construction; operations return new volumes.
"""

from dataclasses import dataclass

import numpy as np

# Per-voxel class taxonomy shared by the whole pipeline.
CLASS_NAMES = ("non-tumor", "necrosis", "edema", "non-enhancing", "enhancing")
N_CLASSES = len(CLASS_NAMES)


def linear_index(dims, x, y, z):
    """Map voxel coordinates to the canonical x-fastest linear index."""
    nx, ny, nz = dims
    return x + nx * (y + ny * z)


def unravel_index(dims, i):
    """Inverse of :func:`linear_index`."""
    nx, ny, nz = dims
    x = i % nx
    y = (i // nx) % ny
    z = i // (nx * ny)
    return (x, y, z)


@dataclass(eq=False)
class Volume3D:
    """A dense 3-D scalar grid.

    Parameters
    ----------
    data : ndarray
        Shape (nx, ny, nz); coerced to float64.  Every value must be finite.
    """

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3-D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"volume dims must be positive, got {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise ValueError("volume data contains NaN or Inf")

    @property
    def dims(self):
        return self.data.shape


@dataclass(eq=False)
class MultiChannelVolume:
    """An ordered stack of same-sized volumes, one per imaging channel."""

    channels: list
    channel_names: list

    def __post_init__(self):
        self.channels = list(self.channels)
        self.channel_names = [str(n) for n in self.channel_names]
        if len(self.channels) < 1:
            raise ValueError("at least one channel is required")
        if len(self.channels) != len(self.channel_names):
            raise ValueError(
                f"{len(self.channels)} channels but {len(self.channel_names)} names"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise ValueError(f"channel names are not unique: {self.channel_names}")
        dims = self.channels[0].dims
        for name, ch in zip(self.channel_names, self.channels):
            if ch.dims != dims:
                raise ValueError(
                    f"channel {name!r} has dims {ch.dims}, expected {dims}"
                )

    @property
    def dims(self):
        return self.channels[0].dims

    @property
    def n_channels(self):
        return len(self.channels)


@dataclass(eq=False)
class LabelVolume:
    """Per-voxel class labels in {0..4} (see :data:`CLASS_NAMES`)."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 3:
            raise ValueError(f"label data must be 3-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(arr == np.round(arr)):
                raise ValueError("label values must be integers")
            arr = arr.astype(np.int64)
        if arr.size and (arr.min() < 0 or arr.max() >= N_CLASSES):
            bad = arr[(arr < 0) | (arr >= N_CLASSES)].flat[0]
            raise ValueError(f"label value {bad} outside 0..{N_CLASSES - 1}")
        self.labels = arr.astype(np.uint8)

    @property
    def dims(self):
        return self.labels.shape


def gradient_magnitude(volume: Volume3D) -> Volume3D:
    """Per-voxel magnitude of the spatial intensity gradient.

    Uses central differences at interior voxels and one-sided differences at
    the faces, with unit voxel spacing.  Output has the same dims as the
    input and is everywhere >= 0.
    """
    if min(volume.dims) < 2:
        raise ValueError(f"gradient needs >= 2 voxels per axis, got {volume.dims}")
    gx, gy, gz = np.gradient(volume.data, edge_order=1)
    return Volume3D(np.sqrt(gx * gx + gy * gy + gz * gz))


def zscore_normalize(volume: Volume3D, mask=None) -> Volume3D:
    """Standardize intensities to zero mean and unit deviation over a mask.

    Parameters
    ----------
    volume : Volume3D
    mask : ndarray of bool, optional
        Voxels over which moments are computed.  Defaults to the nonzero
        voxels, which approximates the brain region of skull-stripped scans.
        Voxels outside the mask are set to 0 in the output.
    """
    if mask is None:
        mask = volume.data != 0.0
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != volume.dims:
            raise ValueError(f"mask shape {mask.shape} != volume dims {volume.dims}")
    values = volume.data[mask]
    if values.size < 2:
        raise ValueError(f"mask selects {values.size} voxels, need at least 2")
    mean = values.mean()
    std = values.std()
    if std == 0.0:
        raise ValueError("zero intensity variance over the mask")
    out = np.zeros(volume.dims)
    out[mask] = (values - mean) / std
    return Volume3D(out)
