"""Training, rolling forecasts and on-disk storage for the four predictor kinds."""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from cpoptnet.errors import NumericalError
from cpoptnet.predict.adam import Adam
from cpoptnet.predict.dataset import latent_series
from cpoptnet.predict.nets import NETS
from cpoptnet.predict.tree import fit_tree, predict_tree

log = logging.getLogger(__name__)

KINDS = ("tree", "mlp", "cnn", "lstm")
MAGIC = b"CPOPTNET-MODEL 1\n"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    standardize: bool = True
    max_depth: int = 8
    min_leaf: int = 5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0 or not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("invalid optimizer settings")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("invalid tree settings")


@dataclass(eq=False)
class Predictor:
    """A trained forecaster with a uniform ``predict`` over feature rows.

    ``scaling`` holds ``x_mean``, ``x_std``, ``y_mean``, ``y_std`` used to
    standardize inputs and outputs of the gradient-trained kinds.
    """

    kind: str
    rank: int
    window: int
    params: dict
    scaling: dict
    config: TrainConfig
    losses: list = field(default_factory=list)

    @property
    def n_features(self):
        return 2 * self.rank + self.window

    def net(self):
        return NETS[self.kind](self.rank, self.window)

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {X.shape[1]}")
        if self.kind == "tree":
            return predict_tree(self.params, X)
        s = self.scaling
        y, _ = self.net().forward(self.params, (X - s["x_mean"]) / s["x_std"])
        return y * s["y_std"][0] + s["y_mean"][0]


def _scaling(X, y, standardize):
    if not standardize:
        return {
            "x_mean": np.zeros(X.shape[1]), "x_std": np.ones(X.shape[1]),
            "y_mean": np.zeros(1), "y_std": np.ones(1),
        }
    x_std = X.std(axis=0)
    x_std[x_std < 1e-12] = 1.0
    y_std = float(y.std())
    return {
        "x_mean": X.mean(axis=0), "x_std": x_std,
        "y_mean": np.array([y.mean()]), "y_std": np.array([y_std if y_std >= 1e-12 else 1.0]),
    }


def train(kind, ds, cfg=None):
    """Fit a predictor of the given kind to ``ds``.

    Gradient-trained kinds minimize mean squared error with Adam on
    standardized data; ``losses`` records the mean training loss of each
    epoch in the original target units.

    Raises
    ------
    ValueError
        Unknown kind or empty dataset.
    NumericalError
        The loss becomes NaN or infinite.
    """
    cfg = cfg or TrainConfig()
    if kind not in KINDS:
        raise ValueError(f"unknown predictor kind {kind!r}; choose from {KINDS}")
    if len(ds) == 0:
        raise ValueError("cannot train on an empty dataset")
    X, y = np.asarray(ds.features), np.asarray(ds.targets)

    if kind == "tree":
        params = fit_tree(X, y, cfg.max_depth, cfg.min_leaf, cfg.seed)
        model = Predictor(kind, ds.rank, ds.window, params, {}, cfg)
        model.losses.append(float(np.mean((model.predict(X) - y) ** 2)))
        return model

    scaling = _scaling(X, y, cfg.standardize)
    Xs = (X - scaling["x_mean"]) / scaling["x_std"]
    ys = (y - scaling["y_mean"][0]) / scaling["y_std"][0]
    y_var = scaling["y_std"][0] ** 2

    rng = np.random.default_rng(cfg.seed)
    net = NETS[kind](ds.rank, ds.window)
    params = net.init_params(rng)
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    losses = []
    n = len(ds)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            out, cache = net.forward(params, Xs[batch])
            err = out - ys[batch]
            loss = float(np.mean(err * err))
            if not math.isfinite(loss):
                raise NumericalError(
                    f"{kind}: loss became {loss} in epoch {epoch + 1}, batch starting at {start}"
                )
            total += loss * batch.size
            opt.step(net.backward(params, cache, 2.0 * err / batch.size))
        losses.append(total / n * y_var)
        log.debug("%s epoch %d loss %.6g", kind, epoch + 1, losses[-1])
    return Predictor(kind, ds.rank, ds.window, params, scaling, cfg, losses)


def _features(k, i, j, lags):
    return np.concatenate([k.A[i], k.B[j], lags])[None, :]


def predict_rolling(model, k, pair, horizon, window=None, start=None, closed_loop=True):
    """Forecast ``horizon`` consecutive slices of one pair's latent series.

    Parameters
    ----------
    model : Predictor
    k : KruskalTensor
        Factors providing the latent rows and the observed latent series.
    pair : (int, int)
        ``(client, transaction)`` indices.
    horizon : int
    window : int, optional
        Must equal the model's window if given.
    start : int, optional
        First slice to forecast; defaults to the slice after the last one
        in ``k``. The lag buffer is seeded with the ``window`` observed
        values before ``start``.
    closed_loop : bool
        Feed each prediction back into the lag buffer (default). When
        False, the observed latent values are used as lags at every step,
        which requires them to exist.

    Returns
    -------
    ndarray of shape (horizon,)
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    window = model.window if window is None else window
    if window != model.window:
        raise ValueError(f"model was trained with window {model.window}, got {window}")
    if k.rank != model.rank:
        raise ValueError(f"model expects rank {model.rank} factors, got {k.rank}")
    i, j = pair
    K = k.shape[2]
    start = K if start is None else start
    if start < window or start > K:
        raise ValueError(f"start slice {start} needs {window} observed slices before it")
    if not closed_loop and start + horizon - 1 > K:
        raise ValueError("open-loop forecasting needs observed lags for every step")
    series = latent_series(k, i, j)
    lags = list(series[start - window:start])
    out = np.empty(horizon)
    for h in range(horizon):
        out[h] = model.predict(_features(k, i, j, np.array(lags[-window:])))[0]
        if closed_loop:
            lags.append(out[h])
        else:
            lags.append(series[start + h])
    return out


def save_model(path, model):
    """Write a self-describing envelope: magic line, JSON header line, raw payload.

    The header lists every array with its dtype, shape and byte offset into
    the little-endian payload that follows.
    """
    arrays = {f"param.{k}": v for k, v in model.params.items()}
    arrays.update({f"scaling.{k}": v for k, v in model.scaling.items()})
    table = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dt = arr.dtype.newbyteorder("<")
        raw = arr.astype(dt).tobytes()
        table.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "kind": model.kind,
        "rank": model.rank,
        "window": model.window,
        "train_config": asdict(model.config),
        "losses": [repr(float(v)) for v in model.losses],
        "arrays": table,
        "payload_bytes": offset,
    }
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for c in chunks:
            fh.write(c)


def load_model(path):
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path}: not a model file")
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    if len(payload) != header["payload_bytes"]:
        raise ValueError(f"{path}: truncated payload")
    params, scaling = {}, {}
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=entry["offset"])
        arr = arr.astype(dt.newbyteorder("="), copy=True).reshape(entry["shape"])
        group, name = entry["name"].split(".", 1)
        (params if group == "param" else scaling)[name] = arr
    return Predictor(
        header["kind"],
        header["rank"],
        header["window"],
        params,
        scaling,
        TrainConfig(**header["train_config"]),
        [float(v) for v in header["losses"]],
    )
