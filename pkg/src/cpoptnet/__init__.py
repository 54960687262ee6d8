"""Gradient-based CP decomposition of sparse activity tensors and latent-factor forecasting."""

__version__ = "0.1.0"

from cpoptnet.als import AlsConfig, solve_als
from cpoptnet.cpopt import NcgConfig, gradient, objective, relative_residual, solve
from cpoptnet.linesearch import strong_wolfe_search
from cpoptnet.tensor import (
    KruskalTensor,
    SparseTensor3,
    flatten,
    inner_product_sparse_kruskal,
    khatri_rao,
    kruskal_norm_sq,
    kruskal_to_dense,
    unflatten,
    unfold,
)
