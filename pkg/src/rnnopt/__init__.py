"""Recurrent network training with clipping, leaky units, rectifiers, NADE outputs and Nesterov momentum."""

from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    InputError,
    NumericalError,
    ParseError,
    RNNOptError,
)
from .gradients import Gradients, JacobianChainReport, bptt, finite_diff_grad, jacobian_chain
from .model import ModelConfig, RNNParams, RNNState, StateTrajectory, activate, forward, init_params, step
from .optim import (
    OptimizerState,
    calibrate_clip_threshold,
    clip_by_norm,
    momentum_step,
    nag_step,
    nesterov_simplified_step,
    sgd_step,
)
from .outputs import (
    BernoulliOutput,
    ClassFactorizedOutput,
    LossResult,
    NadeOutput,
    SoftmaxOutput,
    bernoulli_loss,
    class_softmax_loss,
    frame_accuracy,
    nade_enumerate,
    nade_loss,
    softmax_loss,
)

__version__ = "0.1.0"
