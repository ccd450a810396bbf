"""Parameter containers and the small layers the AED models are built from."""

from __future__ import annotations

from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from raed.tensor import Tensor, ops
from raed.utils.errors import ConfigError, FormatError


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    """Named parameter table with nested sub-modules.

    Parameter names are dotted paths (`decoder.block0.cross_attn.w_q`) in
    registration order, which is also the checkpoint order.
    """

    def __init__(self) -> None:
        self._params: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params or name in self._modules:
            raise ConfigError(f"duplicate parameter name: {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        if name in self._params or name in self._modules:
            raise ConfigError(f"duplicate module name: {name}")
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise FormatError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise FormatError(f"{name}: stored shape {value.shape} != model shape {p.shape}")
            p.data = value.copy()


class Linear(Module):
    """y = x W + b with W: [in, out] (row-vector convention)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True) -> None:
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = self.add_param("weight", xavier_uniform(rng, in_dim, out_dim, (in_dim, out_dim)))
        self.bias = self.add_param("bias", np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.gain = self.add_param("gain", np.ones(dim))
        self.bias = self.add_param("bias", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Embedding(Module):
    def __init__(self, num: int, dim: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.num, self.dim = num, dim
        self.table = self.add_param("table", rng.normal(0.0, dim**-0.5, size=(num, dim)))

    def __call__(self, ids) -> Tensor:
        return ops.embedding_lookup(self.table, ids)


class LSTMCell(Module):
    """Standard LSTM cell, gate order (input, forget, cell, output), forget bias 1."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.in_dim, self.hidden = in_dim, hidden
        self.w_x = self.add_param("w_x", xavier_uniform(rng, in_dim, 4 * hidden, (in_dim, 4 * hidden)))
        self.w_h = self.add_param("w_h", xavier_uniform(rng, hidden, 4 * hidden, (hidden, 4 * hidden)))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.bias = self.add_param("bias", b)

    def zero_state(self, batch: int) -> Tuple[Tensor, Tensor]:
        return Tensor(np.zeros((batch, self.hidden))), Tensor(np.zeros((batch, self.hidden)))

    def __call__(self, x: Tensor, state: Tuple[Tensor, Tensor]) -> Tuple[Tensor, Tensor]:
        h, c = state
        z = ops.matmul(x, self.w_x) + ops.matmul(h, self.w_h) + self.bias
        n = self.hidden
        i = ops.sigmoid(z[..., 0:n])
        f = ops.sigmoid(z[..., n : 2 * n])
        g = ops.tanh(z[..., 2 * n : 3 * n])
        o = ops.sigmoid(z[..., 3 * n : 4 * n])
        c_new = f * c + i * g
        h_new = o * ops.tanh(c_new)
        return h_new, c_new


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2
        fan_in = in_ch * kernel * kernel
        self.weight = self.add_param(
            "weight", rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, kernel, kernel))
        )
        self.bias = self.add_param("bias", np.zeros(out_ch))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


def masked_state(
    new: Tuple[Tensor, Tensor], old: Tuple[Tensor, Tensor], mask: Optional[np.ndarray]
) -> Tuple[Tensor, Tensor]:
    """Keep `old` recurrent state where `mask` ([B, 1]) is False."""
    if mask is None:
        return new
    m = mask.astype(np.float64)
    keep = 1.0 - m
    return new[0] * m + old[0] * keep, new[1] * m + old[1] * keep
