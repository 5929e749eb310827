"""Network layers with hand-derived gradients.

Every layer implements ``forward(x) -> y`` (caching what backward needs) and
``backward(dy) -> dx`` (filling ``param.grad`` for its parameters).  Arrays
are float64 throughout; batches lead: (B, ...) in, (B, ...) out.
"""

from __future__ import annotations

import numpy as np


class Param:
    """One trainable tensor plus its gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray) -> None:
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


class Layer:
    """Minimal layer interface; parameter-free layers leave ``params`` empty."""

    params: list[Param]

    def __init__(self) -> None:
        self.params = []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Dense(Layer):
    """y = x @ w + b with x of shape (B, n_in)."""

    def __init__(self, name: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.w = Param(f"{name}.w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
        self.b = Param(f"{name}.b", np.zeros(n_out))
        self.params = [self.w, self.b]
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        assert self._x is not None
        self.w.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value.T


def _im2col(x_padded: np.ndarray) -> np.ndarray:
    """(B, H+2, W+2, C) -> (B*H*W, 9C) patch matrix for 3x3 windows."""
    b, hp, wp, c = x_padded.shape
    h, w = hp - 2, wp - 2
    view = np.lib.stride_tricks.sliding_window_view(x_padded, (3, 3), axis=(1, 2))
    # view: (B, H, W, C, 3, 3) -> (B, H, W, 3, 3, C) so columns match the
    # kernel layout (3, 3, C, F) flattened row-major.
    cols = view.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(cols).reshape(b * h * w, 9 * c)


def _conv3x3(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size stride-1 3x3 correlation, zero padding; kernel (3,3,C,F)."""
    b, h, w, c = x.shape
    f = kernel.shape[3]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = _im2col(xp)
    out = cols @ kernel.reshape(9 * c, f)
    return out.reshape(b, h, w, f)


class Conv3x3(Layer):
    """Stride-1, zero-padded 3x3 convolution keeping spatial size."""

    def __init__(self, name: str, c_in: int, c_out: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        self.w = Param(
            f"{name}.w",
            glorot_uniform(rng, (3, 3, c_in, c_out), 9 * c_in, 9 * c_out),
        )
        self.b = Param(f"{name}.b", np.zeros(c_out))
        self.params = [self.w, self.b]
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[3] != self.c_in:
            raise ValueError(f"expected (B, H, W, {self.c_in}), got {x.shape}")
        self._x = x
        return _conv3x3(x, self.w.value) + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        assert self._x is not None
        x = self._x
        b, h, w, _ = x.shape
        xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        cols = _im2col(xp)
        dyr = dy.reshape(b * h * w, self.c_out)
        self.w.grad += (cols.T @ dyr).reshape(3, 3, self.c_in, self.c_out)
        self.b.grad += dy.sum(axis=(0, 1, 2))
        # dx is dy correlated with the kernel rotated 180 degrees and with
        # input/output channels swapped: dx_c = sum_f dy_f * rot180(K)_{f->c}.
        k_back = self.w.value[::-1, ::-1].transpose(0, 1, 3, 2)
        return _conv3x3(dy, k_back)


class Relu(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        assert self._mask is not None
        return np.where(self._mask, dy, 0.0)


class Sigmoid(Layer):
    def __init__(self) -> None:
        super().__init__()
        self._y: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        # Split by sign for numerical stability at large |x|.
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._y = y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        assert self._y is not None
        return dy * self._y * (1.0 - self._y)


class NearestUpsample2x(Layer):
    """Each pixel becomes a 2x2 block; gradient sums the block back."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.repeat(2, axis=1).repeat(2, axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, h2, w2, c = dy.shape
        return dy.reshape(b, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))


class ResidualBlock(Layer):
    """conv3x3 -> ReLU -> conv3x3, added to the input, then ReLU."""

    def __init__(self, name: str, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.conv1 = Conv3x3(f"{name}.conv1", channels, channels, rng)
        self.relu1 = Relu()
        self.conv2 = Conv3x3(f"{name}.conv2", channels, channels, rng)
        self.relu_out = Relu()
        self.params = self.conv1.params + self.conv2.params

    def forward(self, x: np.ndarray) -> np.ndarray:
        z = self.conv2.forward(self.relu1.forward(self.conv1.forward(x)))
        return self.relu_out.forward(x + z)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = self.relu_out.backward(dy)
        dx_branch = self.conv1.backward(self.relu1.backward(self.conv2.backward(dz)))
        return dz + dx_branch
