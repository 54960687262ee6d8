from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SeriesDataset:
    """Supervised windows over the latent series of every (client, transaction) pair.

    Each feature row is ``[A[i, :], B[j, :], v_ij(k-w), ..., v_ij(k-1)]`` and
    the target is ``v_ij(k)``, where ``v_ij(k) = sum_r A[i,r] B[j,r] C[k,r]``.
    ``index`` holds the ``(i, j, k)`` of each sample.
    """

    features: np.ndarray
    targets: np.ndarray
    index: np.ndarray
    rank: int
    window: int

    def __len__(self):
        return self.targets.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]


def latent_series(k, i=None, j=None):
    """Reconstructed series ``v_ij(.)``; with no pair given, the ``(I, J, K)`` array."""
    if i is None and j is None:
        return np.einsum("ir,jr,kr->ijk", k.A, k.B, k.C)
    return (k.A[i] * k.B[j]) @ k.C.T


def build_dataset(k, window, train_slices):
    """Windowed samples for all pairs, ordered by client, then transaction, then slice.

    Parameters
    ----------
    k : KruskalTensor
    window : int
        Number of lagged latent values per sample.
    train_slices : int or range
        Slices whose values may serve as targets; an int ``n`` means
        ``range(n)``. Only slices ``k >= window`` produce samples.
    """
    if isinstance(train_slices, int):
        train_slices = range(train_slices)
    slices = [s for s in train_slices if s >= window]
    n_train = len(train_slices)
    if window < 1:
        raise ValueError("window must be at least 1")
    if window >= n_train:
        raise ValueError(f"window {window} needs more than {n_train} training slices")
    if max(train_slices) >= k.shape[2] or min(train_slices) < 0:
        raise ValueError("training slices fall outside the time factor")
    if not all(np.isfinite(f).all() for f in k.factors):
        raise ValueError("factors must be finite")

    I, J, _ = k.shape
    R = k.rank
    v = latent_series(k)
    n = I * J * len(slices)
    feats = np.empty((n, 2 * R + window))
    targets = np.empty(n)
    index = np.empty((n, 3), dtype=np.int64)
    row = 0
    for i in range(I):
        for j in range(J):
            for s in slices:
                feats[row, :R] = k.A[i]
                feats[row, R:2 * R] = k.B[j]
                feats[row, 2 * R:] = v[i, j, s - window:s]
                targets[row] = v[i, j, s]
                index[row] = (i, j, s)
                row += 1
    for arr in (feats, targets, index):
        arr.setflags(write=False)
    return SeriesDataset(feats, targets, index, R, window)
