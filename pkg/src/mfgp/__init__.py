"""Multi-fidelity Gaussian-process solvers for linear integro-differential equations.

A GP prior on the solution ``u`` induces, through a linear operator ``L``,
a GP prior on the forcing ``f = L u``. Training on noisy low/high-fidelity
forcing data plus a few anchor values of ``u`` gives a posterior over both.
"""

from .kernels import KernelParams, se_eval, se_grad, se_matrix
from .model import (
    HyperParams,
    MultiFidelityDataset,
    NumericalError,
    TrainConfig,
    TrainedModel,
    assemble_K,
    build_model,
    make_dataset,
    nlml,
    nlml_and_grad,
    nlml_grad,
    train,
)
from .operators import (
    LinearOperatorSpec,
    QuadratureSpec,
    QuadratureWarning,
    advection_diffusion_reaction,
    first_derivative,
    fractional,
    fractional_kernel_ff,
    fractional_kernel_uf,
    identity,
    integro_differential,
    kernel_matrix,
    laplacian,
    op_kernel_ff,
    op_kernel_numeric_oracle,
    op_kernel_uf,
)
from .posterior import (
    ActiveLearningError,
    ActiveLearningHistory,
    PosteriorPrediction,
    predict_f,
    predict_u,
    run_active_loop,
    select_next,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveLearningError",
    "ActiveLearningHistory",
    "HyperParams",
    "KernelParams",
    "LinearOperatorSpec",
    "MultiFidelityDataset",
    "NumericalError",
    "PosteriorPrediction",
    "QuadratureSpec",
    "QuadratureWarning",
    "TrainConfig",
    "TrainedModel",
    "advection_diffusion_reaction",
    "assemble_K",
    "build_model",
    "first_derivative",
    "fractional",
    "fractional_kernel_ff",
    "fractional_kernel_uf",
    "identity",
    "integro_differential",
    "kernel_matrix",
    "laplacian",
    "make_dataset",
    "nlml",
    "nlml_and_grad",
    "nlml_grad",
    "op_kernel_ff",
    "op_kernel_numeric_oracle",
    "op_kernel_uf",
    "predict_f",
    "predict_u",
    "run_active_loop",
    "se_eval",
    "se_grad",
    "se_matrix",
    "select_next",
    "train",
]
