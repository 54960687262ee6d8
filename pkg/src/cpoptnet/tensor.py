"""Third-order sparse, dense and Kruskal tensors and the multilinear kernels.

Dense tensors are plain ``numpy`` arrays of shape ``(I, J, K)``. When a
dense tensor is linearized it is always in Fortran order (mode-1 index
fastest), which is also the column convention of :func:`unfold`::

    X_(1) = A (C kr B)^T,  X_(2) = B (C kr A)^T,  X_(3) = C (B kr A)^T

where ``kr`` is :func:`khatri_rao`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from cpoptnet import kernels
from cpoptnet.errors import DimensionError


def _check_shape(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or any(s < 1 for s in shape):
        raise DimensionError(f"shape must be three positive integers, got {shape}")
    return shape


@dataclass(frozen=True, eq=False)
class SparseTensor3:
    """Third-order tensor in coordinate (COO) format.

    Parameters
    ----------
    shape : tuple of int
        ``(I, J, K)``.
    indices : (nnz, 3) int64 array
        0-based coordinates of the stored entries.
    values : (nnz,) float64 array
        Stored values. Unstored cells are zero.

    Duplicate coordinates are rejected rather than summed.
    """

    shape: tuple
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        shape = _check_shape(self.shape)
        idx = np.array(self.indices, dtype=np.int64).reshape(-1, 3)
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        if idx.shape[0] != vals.shape[0]:
            raise DimensionError(
                f"{idx.shape[0]} coordinates but {vals.shape[0]} values"
            )
        if idx.size and ((idx < 0).any() or (idx >= np.array(shape)).any()):
            raise DimensionError(f"index out of bounds for shape {shape}")
        if not np.isfinite(vals).all():
            raise ValueError("tensor values must be finite")
        if idx.shape[0] > 1:
            lin = np.ravel_multi_index(idx.T, shape, order="F")
            if np.unique(lin).size != lin.size:
                raise ValueError("duplicate coordinates in sparse tensor")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @property
    def nnz(self):
        return self.values.shape[0]

    @classmethod
    def empty(cls, shape):
        return cls(shape, np.zeros((0, 3), dtype=np.int64), np.zeros(0))

    @classmethod
    def from_entries(cls, shape, entries):
        """Build from an iterable of ``(i, j, k, value)`` tuples."""
        entries = list(entries)
        if not entries:
            return cls.empty(shape)
        idx = [e[:3] for e in entries]
        vals = [e[3] for e in entries]
        return cls(shape, idx, vals)

    @classmethod
    def from_dense(cls, dense, keep_zeros=False):
        """Sparse copy of a dense array; ``keep_zeros`` stores every cell."""
        dense = np.asarray(dense, dtype=np.float64)
        if keep_zeros:
            idx = np.array(np.unravel_index(np.arange(dense.size), dense.shape, order="F")).T
        else:
            idx = np.argwhere(dense != 0)
        return cls(dense.shape, idx, dense[tuple(idx.T)])

    def to_dense(self):
        out = np.zeros(self.shape)
        out[tuple(self.indices.T)] = self.values
        return out

    def norm_sq(self):
        return float(np.dot(self.values, self.values))

    def __eq__(self, other):
        if not isinstance(other, SparseTensor3):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class KruskalTensor:
    """Rank-R CP model ``sum_r A[:, r] o B[:, r] o C[:, r]`` with no weights."""

    factors: tuple

    def __post_init__(self):
        factors = tuple(np.array(f, dtype=np.float64) for f in self.factors)
        if len(factors) != 3:
            raise DimensionError("exactly three factor matrices are required")
        if any(f.ndim != 2 for f in factors):
            raise DimensionError("factor matrices must be two-dimensional")
        ranks = {f.shape[1] for f in factors}
        if len(ranks) != 1 or 0 in ranks:
            raise DimensionError(f"factor column counts differ or are zero: {sorted(ranks)}")
        if any(f.shape[0] < 1 for f in factors):
            raise DimensionError("factor matrices need at least one row")
        if not all(np.isfinite(f).all() for f in factors):
            raise ValueError("factor entries must be finite")
        for f in factors:
            f.setflags(write=False)
        object.__setattr__(self, "factors", factors)

    @property
    def A(self):
        return self.factors[0]

    @property
    def B(self):
        return self.factors[1]

    @property
    def C(self):
        return self.factors[2]

    @property
    def rank(self):
        return self.factors[0].shape[1]

    @property
    def shape(self):
        return tuple(f.shape[0] for f in self.factors)

    def to_dense(self):
        return kruskal_to_dense(self)

    def norm_sq(self):
        return kruskal_norm_sq(self)

    def flatten(self):
        return flatten(self)

    def __eq__(self, other):
        if not isinstance(other, KruskalTensor):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors))

    __hash__ = None


def khatri_rao(M1, M2):
    """Column-wise Kronecker product.

    Row ``i * q + j`` of the ``(p*q, R)`` result is ``M1[i] * M2[j]``.
    """
    M1 = np.asarray(M1, dtype=np.float64)
    M2 = np.asarray(M2, dtype=np.float64)
    if M1.ndim != 2 or M2.ndim != 2:
        raise DimensionError("khatri_rao expects two matrices")
    if M1.shape[1] != M2.shape[1]:
        raise DimensionError(
            f"column counts differ: {M1.shape[1]} vs {M2.shape[1]}"
        )
    p, R = M1.shape
    q = M2.shape[0]
    return (M1[:, None, :] * M2[None, :, :]).reshape(p * q, R)


def unfold(t, mode):
    """Mode-``mode`` matricization (``mode`` in 1, 2, 3).

    A :class:`SparseTensor3` gives a ``scipy.sparse.csr_matrix``; a dense
    array gives a dense matrix. Column ordering matches :func:`khatri_rao`
    as described in the module docstring.
    """
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")
    m = mode - 1
    others = [o for o in range(3) if o != m]
    if isinstance(t, SparseTensor3):
        I = t.shape
        idx = t.indices
        cols = idx[:, others[0]] + idx[:, others[1]] * I[others[0]]
        return sp.csr_matrix(
            (t.values, (idx[:, m], cols)),
            shape=(I[m], I[others[0]] * I[others[1]]),
        )
    dense = np.asarray(t, dtype=np.float64)
    if dense.ndim != 3:
        raise DimensionError("dense tensor must be three-dimensional")
    return np.moveaxis(dense, m, 0).reshape(dense.shape[m], -1, order="F")


def kruskal_to_dense(k):
    return np.einsum("ir,jr,kr->ijk", k.A, k.B, k.C)


def inner_product_sparse_kruskal(x, k, backend=None):
    """``<x, k>`` over the stored entries of ``x`` in O(nnz R)."""
    if tuple(x.shape) != k.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {k.shape}")
    return kernels.sparse_inner(x.indices, x.values, k.A, k.B, k.C, backend=backend)


def gram_matrices(k):
    return tuple(f.T @ f for f in k.factors)


def kruskal_norm_sq(k):
    """Squared Frobenius norm of the reconstruction from the Gram matrices."""
    GA, GB, GC = gram_matrices(k)
    return float(np.sum(GA * GB * GC))


def param_length(shape, rank):
    return int(rank) * int(sum(shape))


def flatten(k):
    """Stack all columns of A, then of B, then of C into one vector."""
    return np.concatenate([f.ravel(order="F") for f in k.factors])


def unflatten(x, shape, rank):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    shape = _check_shape(shape)
    expected = param_length(shape, rank)
    if x.shape[0] != expected:
        raise DimensionError(
            f"parameter vector has length {x.shape[0]}, expected {expected} "
            f"for shape {shape} and rank {rank}"
        )
    factors = []
    start = 0
    for n in shape:
        stop = start + n * rank
        factors.append(x[start:stop].reshape((n, rank), order="F"))
        start = stop
    return KruskalTensor(tuple(factors))


def random_kruskal(shape, rank, rng, low=-1.0, high=1.0):
    shape = _check_shape(shape)
    return KruskalTensor(tuple(rng.uniform(low, high, size=(n, rank)) for n in shape))
