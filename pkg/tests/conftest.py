import numpy as np
import pytest

from cpoptnet.tensor import KruskalTensor, SparseTensor3


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


def random_sparse(rng, shape, density=0.4):
    dense = rng.standard_normal(shape)
    dense[rng.random(shape) >= density] = 0.0
    return SparseTensor3.from_dense(dense)


def brute_dense(k):
    A, B, C = k.factors
    out = np.zeros(k.shape)
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            for kk in range(C.shape[0]):
                out[i, j, kk] = sum(A[i, r] * B[j, r] * C[kk, r] for r in range(k.rank))
    return out


def rank_one(a, b, c):
    return KruskalTensor((np.c_[a], np.c_[b], np.c_[c]))
