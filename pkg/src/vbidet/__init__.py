"""Inverse-free variational Bayesian MIMO detection.

Detectors (classic, iterative, unrolled trainable networks), a training
engine with exact reverse-mode gradients, and a Monte-Carlo SER harness.
"""

from .baselines import (
    MmnetFullParams,
    MmnetIidParams,
    OampnetParams,
    init_baseline_params,
    mmnet_full_forward,
    mmnet_iid_forward,
    oamp_detect,
    oampnet_forward,
)
from .channel import (
    ChannelRealization,
    Sample,
    draw_sample,
    gen_iid,
    gen_kronecker,
    load_channels,
    noise_var_for_snr,
    save_channels,
)
from .classic import DetectionResult, detect_lmmse, detect_ml, detect_zf
from .constellation import (
    Constellation,
    PosteriorMoments,
    hard_decision,
    make_qam,
    posterior_moments,
)
from .ifvb import (
    DetectionTrace,
    IfvbConfig,
    gamma_epsilon_update,
    ifvb_detect,
    improved_ifvb_detect,
    surrogate_g,
)
from .kernels import USING_COMPILED
from .linalg import SvdFactors, hermitian_solve, largest_eigenvalue, truncated_svd
from .training import TrainConfig, adam_step, gradient, layer_loss, train_offline, train_online
from .unrolled import (
    ImprovedVbinetParams,
    VbinetParams,
    improved_vbinet_forward,
    init_params,
    load_params,
    save_params,
    vbinet_forward,
)

__version__ = "0.1.0"
