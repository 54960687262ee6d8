"""Small regression networks with hand-written backpropagation.

Every network maps a feature matrix laid out as ``[A row (R), B row (R),
lags (w)]`` to one output per row. ``forward`` returns the outputs and a
cache; ``backward`` takes ``dL/dy`` and returns gradients keyed like the
parameters.
"""

import numpy as np


def _glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class MLPNet:
    """Two rectified hidden layers and a linear output."""

    kind = "mlp"

    def __init__(self, rank, window, hidden=64):
        self.rank = rank
        self.window = window
        self.hidden = hidden

    @property
    def n_features(self):
        return 2 * self.rank + self.window

    def init_params(self, rng):
        d, h = self.n_features, self.hidden
        return {
            "W1": _glorot(rng, d, h), "b1": np.zeros(h),
            "W2": _glorot(rng, h, h), "b2": np.zeros(h),
            "W3": _glorot(rng, h, 1), "b3": np.zeros(1),
        }

    def forward(self, p, X):
        z1 = X @ p["W1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        y = (h2 @ p["W3"] + p["b3"])[:, 0]
        return y, (X, z1, h1, z2, h2)

    def backward(self, p, cache, dy):
        X, z1, h1, z2, h2 = cache
        dy = dy[:, None]
        g = {"W3": h2.T @ dy, "b3": dy.sum(axis=0)}
        dz2 = (dy @ p["W3"].T) * (z2 > 0)
        g["W2"] = h1.T @ dz2
        g["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["W2"].T) * (z1 > 0)
        g["W1"] = X.T @ dz1
        g["b1"] = dz1.sum(axis=0)
        return g


class CNN1DNet:
    """One valid convolution over the lag window, then a dense layer.

    The rectified convolution maps are flattened, concatenated with the
    latent rows and passed through a rectified dense layer and a linear
    output. Needs ``window >= width``.
    """

    kind = "cnn"

    def __init__(self, rank, window, filters=8, width=3, dense=32):
        if window < width:
            raise ValueError(f"convolution width {width} exceeds lag window {window}")
        self.rank = rank
        self.window = window
        self.filters = filters
        self.width = width
        self.dense = dense

    @property
    def n_features(self):
        return 2 * self.rank + self.window

    @property
    def n_positions(self):
        return self.window - self.width + 1

    def init_params(self, rng):
        F, q = self.filters, self.width
        d_in = self.n_positions * F + 2 * self.rank
        return {
            "Wc": _glorot(rng, q, F, shape=(F, q)), "bc": np.zeros(F),
            "Wd": _glorot(rng, d_in, self.dense), "bd": np.zeros(self.dense),
            "Wo": _glorot(rng, self.dense, 1), "bo": np.zeros(1),
        }

    def _patches(self, lags):
        P, q = self.n_positions, self.width
        return np.stack([lags[:, s:s + q] for s in range(P)], axis=1)  # (n, P, q)

    def forward(self, p, X):
        n = X.shape[0]
        R2 = 2 * self.rank
        latent, lags = X[:, :R2], X[:, R2:]
        patches = self._patches(lags)
        zc = patches @ p["Wc"].T + p["bc"]  # (n, P, F)
        hc = np.maximum(zc, 0.0)
        u = np.concatenate([hc.reshape(n, -1), latent], axis=1)
        zd = u @ p["Wd"] + p["bd"]
        hd = np.maximum(zd, 0.0)
        y = (hd @ p["Wo"] + p["bo"])[:, 0]
        return y, (patches, zc, u, zd, hd)

    def backward(self, p, cache, dy):
        patches, zc, u, zd, hd = cache
        n = dy.shape[0]
        dy = dy[:, None]
        g = {"Wo": hd.T @ dy, "bo": dy.sum(axis=0)}
        dzd = (dy @ p["Wo"].T) * (zd > 0)
        g["Wd"] = u.T @ dzd
        g["bd"] = dzd.sum(axis=0)
        du = dzd @ p["Wd"].T
        n_conv = self.n_positions * self.filters
        dzc = du[:, :n_conv].reshape(n, self.n_positions, self.filters) * (zc > 0)
        g["Wc"] = np.einsum("npf,npq->fq", dzc, patches)
        g["bc"] = dzc.sum(axis=(0, 1))
        return g


class LSTMNet:
    """Single LSTM cell over the lags; latent rows are appended to every step input.

    Gate blocks in the stacked weight ``W`` are ordered input, forget,
    cell, output. The output is a linear readout of the final hidden state.
    """

    kind = "lstm"

    def __init__(self, rank, window, hidden=32):
        self.rank = rank
        self.window = window
        self.hidden = hidden

    @property
    def n_features(self):
        return 2 * self.rank + self.window

    def init_params(self, rng):
        H = self.hidden
        D = 1 + 2 * self.rank
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget-gate bias
        return {
            "W": _glorot(rng, D + H, 4 * H), "b": b,
            "Wy": _glorot(rng, H, 1), "by": np.zeros(1),
        }

    def forward(self, p, X):
        n = X.shape[0]
        H = self.hidden
        R2 = 2 * self.rank
        latent, lags = X[:, :R2], X[:, R2:]
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        steps = []
        for t in range(self.window):
            xh = np.concatenate([lags[:, t:t + 1], latent, h], axis=1)
            z = xh @ p["W"] + p["b"]
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = _sigmoid(z[:, 3 * H:])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            steps.append((xh, i, f, g, o, c_prev, tc))
        y = (h @ p["Wy"] + p["by"])[:, 0]
        return y, (steps, h)

    def backward(self, p, cache, dy):
        steps, h_last = cache
        H = self.hidden
        D = 1 + 2 * self.rank
        dy = dy[:, None]
        grads = {"Wy": h_last.T @ dy, "by": dy.sum(axis=0)}
        dW = np.zeros_like(p["W"])
        db = np.zeros_like(p["b"])
        dh = dy @ p["Wy"].T
        dc = np.zeros_like(dh)
        for xh, i, f, g, o, c_prev, tc in reversed(steps):
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)],
                axis=1,
            )
            dW += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ p["W"].T
            dh = dxh[:, D:]
            dc = dc * f
        grads["W"] = dW
        grads["b"] = db
        return grads


NETS = {"mlp": MLPNet, "cnn": CNN1DNet, "lstm": LSTMNet}
