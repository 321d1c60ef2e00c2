"""SVM training and biometric authentication on vectors protected by
key-seeded random orthonormal transforms."""
from ._backend import NAME as BACKEND
from .biometric import (
    AttackKind,
    AttackScenario,
    ClassifierBank,
    EvaluationReport,
    authenticate,
    downsample,
    enroll,
    evaluate,
    simulate_attack,
)
from .kernels import KernelClass, KernelKind, KernelSpec, gram, kernel_class, kernel_eval
from .svm import DecisionScore, SolverConfig, SvmModel, TrainingSet, dual_objective, predict, train
from .transform import (
    OrthonormalTransform,
    Scheme,
    SecretKey,
    generate_transform,
    key_fingerprint,
    protect,
    verify_orthonormal,
)

__version__ = "0.1.0"
