"""Dual-branch margin-softmax training lab.

Library surface: loss functions and gradients (losses), the MLP
encoder/trainer and checkpoint format (encoder), synthetic identities
and the morph pairing protocol (datagen), verification and morph
robustness metrics (metrics), feature-distribution analysis (featviz),
and the experiment driver behind the CLI (experiment, cli).
"""

from .losses import (
    LabelPair,
    MarginConfig,
    MorphGuardResult,
    SampleKind,
    cosine_logits,
    margin_adjust,
    margin_softmax_ce,
    morphguard_loss,
    morphguard_loss_arrays,
    softmax_ce,
)
from .encoder import (
    DualHeadModel,
    TrainConfig,
    TrainHistory,
    adapt,
    batch_gradients,
    forward,
    init_model,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train,
    train_step,
)
from .datagen import (
    IdentityUniverse,
    MorphPair,
    MorphPairProtocol,
    Sample,
    build_training_set,
    group_by_identity,
    load_dataset,
    load_protocol,
    make_morph,
    make_selfmorph,
    pair_protocol,
    save_dataset,
    save_protocol,
    split_identities,
    synth_identities,
)
from .metrics import (
    FROM_ABOVE,
    FROM_BELOW,
    MorphTrial,
    OperatingPoint,
    ThresholdCurve,
    VerificationSet,
    cosine_similarity,
    fnmr_at_fmr,
    fnmr_fmr_curves,
    min_rmmr,
    mmpmr,
    mmpmr_at_fnmr,
    mmpmr_curve,
    rmmr,
    threshold_at,
)
from .featviz import (
    Ellipse,
    RigidTransform,
    Triplet,
    align_triplet,
    chi2_quantile_2dof,
    confidence_ellipse,
    fit_rigid,
    morph_spread,
    project_2d,
)
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
