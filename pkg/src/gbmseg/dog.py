"""Analytic 3-D Difference-of-Gaussian filter bank construction.

A DoG filter at scale sigma is the difference of two normalized isotropic
3-D Gaussians sampled on an odd cubic voxel grid:

    (2 pi sigma^2)^{-3/2} exp(-r^2 / (2 sigma^2))
  - (pi sigma^2)^{-3/2}   exp(-r^2 / sigma^2)

i.e. a scale-sigma Gaussian minus a Gaussian of variance sigma^2 / 2 (scale
sigma / sqrt(2)).  The center coefficient is always negative and a positive
annulus surrounds it, giving a rotationally symmetric blob detector.

Truncating to a finite support breaks the analytic zero-integral property,
badly so when the support barely covers the widest scale.  With ``zero_dc``
each Gaussian term is re-normalized to a discrete sum of exactly 1 before
subtraction, restoring a zero filter sum so constant inputs are annihilated.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import Volume3D

#: Default scale ladder: a geometric progression with ratio sqrt(2),
#: from sqrt(2) up to 16.
DEFAULT_SIGMAS = tuple(2.0 ** (k / 2.0) for k in range(1, 9))

#: Default cubic filter edge length.
DEFAULT_SUPPORT = 33


def _check_geometry(sigma, support):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if support < 1 or support % 2 == 0:
        raise ValueError(f"support must be odd and positive, got {support}")


def _radius_squared(support):
    half = (support - 1) // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    return x * x + y * y + z * z


def gaussian3d(sigma: float, support: int, normalize: bool = False) -> Volume3D:
    """Sample the normalized 3-D Gaussian on an odd cubic grid.

    The continuous density (2 pi sigma^2)^{-3/2} exp(-r^2 / (2 sigma^2)) is
    evaluated at integer offsets from the center voxel.  With ``normalize``
    the samples are rescaled so their discrete sum is exactly 1.
    """
    _check_geometry(sigma, support)
    r2 = _radius_squared(support)
    g = (2.0 * math.pi * sigma * sigma) ** -1.5 * np.exp(-r2 / (2.0 * sigma * sigma))
    if normalize:
        g = g / g.sum()
    return Volume3D(g)


def dog_filter(sigma: float, support: int, zero_dc: bool = True) -> Volume3D:
    """Build one Difference-of-Gaussian filter at the given scale.

    With ``zero_dc`` both Gaussian terms are discretely normalized to sum 1
    before subtraction, so the filter coefficients sum to 0.
    """
    _check_geometry(sigma, support)
    wide = gaussian3d(sigma, support, normalize=zero_dc)
    narrow = gaussian3d(sigma / math.sqrt(2.0), support, normalize=zero_dc)
    return Volume3D(wide.data - narrow.data)


@dataclass
class DoGSpec:
    """Parameters of a DoG filter bank.

    sigmas must be strictly increasing; support odd.  The defaults give the
    standard 8-scale bank of 33^3 filters.
    """

    sigmas: tuple = DEFAULT_SIGMAS
    support: int = DEFAULT_SUPPORT
    zero_dc: bool = True

    def __post_init__(self):
        self.sigmas = tuple(float(s) for s in self.sigmas)
        if not self.sigmas:
            raise ValueError("at least one sigma is required")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError(f"sigmas must be positive, got {self.sigmas}")
        if any(b <= a for a, b in zip(self.sigmas, self.sigmas[1:])):
            raise ValueError(f"sigmas must be strictly increasing, got {self.sigmas}")
        _check_geometry(self.sigmas[0], self.support)


@dataclass(eq=False)
class FilterBank:
    """An ordered set of same-sized filters with per-filter scale metadata."""

    filters: list
    sigmas: list
    kinds: list = field(default_factory=list)

    def __post_init__(self):
        self.filters = list(self.filters)
        self.sigmas = [float(s) for s in self.sigmas]
        if not self.kinds:
            self.kinds = ["dog"] * len(self.filters)
        if not (len(self.filters) == len(self.sigmas) == len(self.kinds)):
            raise ValueError("filters, sigmas and kinds must have equal length")
        if not self.filters:
            raise ValueError("filter bank must not be empty")
        dims = self.filters[0].dims
        for f in self.filters:
            if f.dims != dims:
                raise ValueError(f"all filters must share dims {dims}, got {f.dims}")

    def __len__(self):
        return len(self.filters)

    @property
    def support(self):
        return self.filters[0].dims[0]


def build_bank(spec: DoGSpec = None) -> FilterBank:
    """Construct the DoG bank for a spec (default: the 8-scale 33^3 bank)."""
    if spec is None:
        spec = DoGSpec()
    filters = [dog_filter(s, spec.support, spec.zero_dc) for s in spec.sigmas]
    return FilterBank(filters=filters, sigmas=list(spec.sigmas))
