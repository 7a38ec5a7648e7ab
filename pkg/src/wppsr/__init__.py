"""Unsupervised single-image superresolution with a Wasserstein patch prior.

The package compares empirical patch distributions of images through
semi-discrete optimal transport and uses that distance both as a
variational regularizer and as an unsupervised training loss for a small
convolutional superresolver.  A forward operator (blur + downsampling)
can be identified from a single registered image pair.
"""

from .errors import (
    CapacityError,
    ConfigError,
    DimensionError,
    EstimationError,
    ZeroMSEError,
)
from .images import (
    PatchDistribution,
    bicubic_upsample,
    extract_patches,
    merge_distributions,
    subsample_distribution,
)
from .metrics import blur_effect, crop_boundary, psnr
from .network import (
    NetworkParams,
    TrainConfig,
    backward_net,
    forward_net,
    init_network,
    load_params,
    merged_batch_loss,
    save_params,
    train,
)
from .operators import (
    FOURIER,
    STRIDED,
    ForwardOperator,
    NoiseModel,
    add_noise,
    apply_adjoint,
    apply_forward,
    estimate_operator,
    fourier_downsample,
    gaussian_kernel,
)
from .textures import grain_texture
from .transport import (
    DualAscentConfig,
    ascend_dual,
    c_transform,
    dual_objective,
    w2_exact_lp,
    w2_gradient_image,
    w2_semidual,
)
from .variational import ReconstructionConfig, gradient, objective, reconstruct

__version__ = "0.1.0"
