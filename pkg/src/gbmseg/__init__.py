"""gbmseg: volumetric tumor segmentation with analytic DoG features.

A numpy/scipy library covering the full pipeline: 3-D Difference-of-Gaussian
filter banks, FFT-accelerated true 3-D convolution, 72-dimensional per-voxel
featurization, a per-voxel fully connected classifier trained from scratch,
and Dice evaluation over clinical tumor regions.  A batch CLI (``gbmseg``)
ties the stages together; see the README and the demos/ scripts.
"""

from .volume import (
    CLASS_NAMES,
    LabelVolume,
    MultiChannelVolume,
    Volume3D,
    gradient_magnitude,
    linear_index,
    unravel_index,
    zscore_normalize,
)
from .dog import DEFAULT_SIGMAS, DoGSpec, FilterBank, build_bank, dog_filter, gaussian3d
from .conv import convolve_bank, convolve_direct, convolve_fft
from .features import FeatureTensor, extract_features, feature_names, gather_voxels
from .network import (
    NetworkParams,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grad,
    predict_volume,
    save_checkpoint,
    train,
    zero_params,
)
from .metrics import REGIONS, DiceReport, aggregate, dice, evaluate_case, region_mask
from .phantom import PhantomSpec, generate
from . import io

__version__ = "0.1.0"
