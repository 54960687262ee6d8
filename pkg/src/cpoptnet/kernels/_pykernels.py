"""Pure numpy versions of the sparse CP kernels.

Used when the compiled extension is unavailable, or when
``CPOPTNET_PURE_PYTHON=1`` is set. Accumulation goes through ``np.add.at``,
which applies updates in nonzero order, so results are deterministic.
"""

import numpy as np


def sparse_inner(indices, values, A, B, C):
    """Sum over nonzeros of ``x[i,j,k] * sum_r A[i,r] B[j,r] C[k,r]``."""
    if values.shape[0] == 0:
        return 0.0
    i, j, k = indices[:, 0], indices[:, 1], indices[:, 2]
    recon = np.einsum("nr,nr,nr->n", A[i], B[j], C[k])
    return float(np.dot(values, recon))


def sparse_mttkrp(indices, values, A, B, C, mode):
    """Matricized tensor times Khatri-Rao product for one mode.

    ``mode`` is 0-based. Mode 0 returns ``X_(1) (C kr B)``, mode 1
    ``X_(2) (C kr A)`` and mode 2 ``X_(3) (B kr A)``.
    """
    factors = (A, B, C)
    rank = A.shape[1]
    out = np.zeros((factors[mode].shape[0], rank))
    if values.shape[0] == 0:
        return out
    others = [m for m in range(3) if m != mode]
    rows = values[:, None] * factors[others[0]][indices[:, others[0]]]
    rows *= factors[others[1]][indices[:, others[1]]]
    np.add.at(out, indices[:, mode], rows)
    return out
