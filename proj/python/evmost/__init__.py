"""Evidential multimodal classification with mixture-of-Student's-t fusion."""

from ._evmost import (
    FusedStudentT,
    NIGParams,
    StudentT,
    accuracy,
    cohen_kappa,
    cross_entropy,
    ece,
    evidential_objective,
    fuse,
    fuse_pair,
    fused_prediction,
    generate_synthetic,
    load_checkpoint,
    nig_aleatoric,
    nig_epistemic,
    nig_marginal_pdf_quadrature,
    nig_nll,
    nig_to_student_t,
    student_t_nll,
    student_t_pdf,
    student_t_variance,
    __version__,
)

__all__ = [
    "FusedStudentT",
    "NIGParams",
    "StudentT",
    "accuracy",
    "cohen_kappa",
    "cross_entropy",
    "ece",
    "evidential_objective",
    "fuse",
    "fuse_pair",
    "fused_prediction",
    "generate_synthetic",
    "load_checkpoint",
    "nig_aleatoric",
    "nig_epistemic",
    "nig_marginal_pdf_quadrature",
    "nig_nll",
    "nig_to_student_t",
    "student_t_nll",
    "student_t_pdf",
    "student_t_variance",
]
