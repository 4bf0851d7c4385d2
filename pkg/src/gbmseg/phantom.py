"""Deterministic synthetic multi-modal tumor phantoms with ground truth.

The label geometry is a stack of nested spheres about a tumor center,
painted in order (later spheres overwrite earlier ones):

    1. edema halo        label 2, radius r_edema
    2. non-enhancing rim label 3, radius r_non_enhancing
    3. enhancing core    label 4, radius r_enhancing
    4. necrosis pocket   label 1, a sphere of radius r_edema - necrosis_offset
       centered at tumor center + necrosis_offset along +x

with everything else label 0 (non-tumor tissue).  A voxel belongs to a
sphere when its squared distance to the sphere center is <= radius^2.  The
pocket bites into the rim from one side, so all five classes are present
for any admissible radii.

Channel intensities are a per-(class, channel) mean plus seeded Gaussian
noise; labels depend only on the geometry, never on the noise draws, and
identical specs generate bitwise-identical output.  Nested blobs of
distinct contrast are exactly what a Difference-of-Gaussian feature bank
resolves well, which keeps end-to-end segmentation checks meaningful.
"""

from dataclasses import dataclass

import numpy as np

from .volume import LabelVolume, MultiChannelVolume, Volume3D

DEFAULT_CHANNEL_NAMES = ("t1pre", "t1post", "t2w", "flair")

#: Mean intensity per (class, channel); rows follow the label taxonomy
#: 0 non-tumor, 1 necrosis, 2 edema, 3 non-enhancing, 4 enhancing.
DEFAULT_CONTRAST = (
    (1.00, 1.00, 1.00, 1.00),
    (0.40, 0.45, 1.85, 1.40),
    (1.20, 1.10, 1.60, 2.00),
    (0.70, 0.80, 1.50, 1.70),
    (0.90, 2.20, 1.30, 1.60),
)

#: Default radii as fractions of the smallest volume edge, in the order
#: (r_enhancing, r_non_enhancing, necrosis_offset, r_edema).
_RADIUS_FRACTIONS = (0.12, 0.19, 0.25, 0.34)


@dataclass
class PhantomSpec:
    """Geometry, contrast, and noise parameters of one synthetic case.

    radii is (r_enhancing, r_non_enhancing, necrosis_offset, r_edema),
    strictly increasing; None derives them from the volume size.  center
    defaults to the volume midpoint.
    """

    dims: tuple = (64, 64, 64)
    rng_seed: int = 0
    center: tuple = None
    radii: tuple = None
    contrast: tuple = DEFAULT_CONTRAST
    channel_names: tuple = DEFAULT_CHANNEL_NAMES
    noise_sigma: float = 0.08

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError(f"dims must be three positive ints, got {self.dims}")
        if self.center is None:
            self.center = tuple((d - 1) / 2.0 for d in self.dims)
        else:
            self.center = tuple(float(c) for c in self.center)
        if self.radii is None:
            scale = min(self.dims)
            self.radii = tuple(f * scale for f in _RADIUS_FRACTIONS)
        else:
            self.radii = tuple(float(r) for r in self.radii)
        if len(self.radii) != 4 or any(
            b <= a for a, b in zip(self.radii, self.radii[1:])
        ) or self.radii[0] <= 0:
            raise ValueError(
                f"radii must be four strictly increasing positive values, got {self.radii}"
            )
        table = np.asarray(self.contrast, dtype=np.float64)
        if table.shape != (5, len(self.channel_names)):
            raise ValueError(
                f"contrast table shape {table.shape} does not match 5 classes x "
                f"{len(self.channel_names)} channels"
            )
        if not np.isfinite(table).all():
            raise ValueError("contrast table contains non-finite means")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        r_edema = self.radii[3]
        for axis, (c, d) in enumerate(zip(self.center, self.dims)):
            if c - r_edema < 0 or c + r_edema > d - 1:
                raise ValueError(
                    f"edema radius {r_edema} exceeds volume bounds on axis {axis} "
                    f"(center {c}, {d} voxels)"
                )


def _sphere_mask(dims, center, radius):
    x, y, z = np.ogrid[: dims[0], : dims[1], : dims[2]]
    d2 = (
        (x - center[0]) ** 2
        + (y - center[1]) ** 2
        + (z - center[2]) ** 2
    )
    return d2 <= radius * radius


def phantom_labels(spec: PhantomSpec) -> LabelVolume:
    """The ground-truth label volume of a phantom (no randomness involved)."""
    r_enh, r_non, offset, r_edema = spec.radii
    labels = np.zeros(spec.dims, dtype=np.uint8)
    labels[_sphere_mask(spec.dims, spec.center, r_edema)] = 2
    labels[_sphere_mask(spec.dims, spec.center, r_non)] = 3
    labels[_sphere_mask(spec.dims, spec.center, r_enh)] = 4
    pocket_center = (spec.center[0] + offset, spec.center[1], spec.center[2])
    labels[_sphere_mask(spec.dims, pocket_center, r_edema - offset)] = 1
    return LabelVolume(labels)


def generate(spec: PhantomSpec):
    """Generate one phantom case: (channels, ground-truth labels)."""
    labels = phantom_labels(spec)
    table = np.asarray(spec.contrast, dtype=np.float64)
    rng = np.random.default_rng(spec.rng_seed)
    channels = []
    for ci, name in enumerate(spec.channel_names):
        means = table[labels.labels, ci]
        noise = rng.standard_normal(spec.dims)
        channels.append(Volume3D(means + spec.noise_sigma * noise))
    return MultiChannelVolume(channels, list(spec.channel_names)), labels
