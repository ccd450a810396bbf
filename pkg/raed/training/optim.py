from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from raed.tensor import Tensor
from raed.utils.errors import TrainingError


@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def tensors(self) -> Dict[str, np.ndarray]:
        out = {"adam/step": np.array(float(self.step))}
        for name in self.m:
            out[f"adam/m/{name}"] = self.m[name]
            out[f"adam/v/{name}"] = self.v[name]
        return out

    @classmethod
    def from_tensors(cls, tensors: Mapping[str, np.ndarray]) -> "AdamState":
        state = cls(step=int(np.asarray(tensors["adam/step"]).item()))
        for key, value in tensors.items():
            if key.startswith("adam/m/"):
                name = key[len("adam/m/") :]
                state.m[name] = np.array(value)
                state.v[name] = np.array(tensors[f"adam/v/{name}"])
        return state


def global_norm(params: Mapping[str, Tensor]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values() if p.grad is not None)))


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    grad_clip: Optional[float] = None,
) -> float:
    """One bias-corrected Adam update in place; returns the pre-clip gradient norm."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise TrainingError(f"no gradient for {missing[0]}" + (f" and {len(missing) - 1} more" if len(missing) > 1 else ""))
    norm = global_norm(params)
    clip = grad_clip / norm if grad_clip is not None and norm > grad_clip else 1.0
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = p.grad * clip
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return norm
