"""CART regression tree baseline.

Fitting is delegated to scikit-learn; the fitted structure is copied into
plain arrays and prediction walks those arrays, so a model restored from
disk predicts exactly like the one that was trained.
"""

import numpy as np
from sklearn.tree import DecisionTreeRegressor

LEAF = -1


def fit_tree(X, y, max_depth=8, min_leaf=5, seed=0):
    reg = DecisionTreeRegressor(
        criterion="squared_error",
        max_depth=max_depth,
        min_samples_leaf=min_leaf,
        random_state=seed,
    )
    reg.fit(X, y)
    t = reg.tree_
    return {
        "left": t.children_left.astype(np.int64),
        "right": t.children_right.astype(np.int64),
        "feature": t.feature.astype(np.int64),
        "threshold": t.threshold.astype(np.float64),
        "value": t.value[:, 0, 0].astype(np.float64),
    }


def predict_tree(p, X):
    # scikit-learn splits on float32 copies of the features; match it.
    X = np.asarray(X, dtype=np.float32)
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = p["left"][node] != LEAF
    while active.any():
        n = node[active]
        go_left = X[rows[active], p["feature"][n]] <= p["threshold"][n]
        node[active] = np.where(go_left, p["left"][n], p["right"][n])
        active = p["left"][node] != LEAF
    return p["value"][node]
