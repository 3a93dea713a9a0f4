"""Security and sparsity of regularized linear classifiers under evasion."""
from .core import (
    Dataset,
    FeatureCaps,
    FeatureMeta,
    LinearModel,
    RegKind,
    caps_from_training,
    decision_scores,
    discriminant,
    predict,
)
from .regularizers import NormKind, RegularizerSpec, dual_norm, reg_subgradient, reg_value
from .metrics import auc_at_fpr, evenness, roc_auc, security_curve, sparsity
from .training import (
    RobustCheckSpec,
    SelectionConfig,
    SolverSettings,
    TrainConfig,
    cross_validate,
    fit,
    hinge_loss,
    objective,
    train,
    worst_case_hinge,
)
from .attacks import (
    AttackSpec,
    BooleanFlip,
    Box,
    CostNorm,
    IncrementOnly,
    attack_boolean,
    attack_bruteforce,
    attack_dense_l2,
    attack_increment_only,
    attack_pgd,
    attack_sparse_l1,
)

__version__ = "0.1.0"
