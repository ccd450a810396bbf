from __future__ import annotations

from typing import Callable, Dict, Mapping, Optional

import numpy as np

from raed.tensor.core import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """||a - n|| / max(||a|| + ||n||, floor)."""
    diff = np.linalg.norm(analytic - numeric)
    return float(diff / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), floor))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    *,
    eps: float = 1e-5,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """Compare backprop against central finite differences.

    `loss_fn` must rebuild the graph from `params` on every call and be
    deterministic. With `max_entries`, only that many randomly chosen entries
    of each parameter are perturbed. Returns the relative error per parameter.
    """
    for p in params.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    rng = rng or np.random.default_rng(0)
    errors: Dict[str, float] = {}
    for name, p in params.items():
        flat_idx = np.arange(p.data.size)
        if max_entries is not None and p.data.size > max_entries:
            flat_idx = np.sort(rng.choice(p.data.size, size=max_entries, replace=False))
        numeric = np.empty(len(flat_idx))
        original = p.data
        for n, fi in enumerate(flat_idx):
            idx = np.unravel_index(fi, p.data.shape)
            plus = original.copy()
            plus[idx] += eps
            p.data = plus
            f_plus = loss_fn().item()
            minus = original.copy()
            minus[idx] -= eps
            p.data = minus
            f_minus = loss_fn().item()
            p.data = original
            numeric[n] = (f_plus - f_minus) / (2.0 * eps)
        errors[name] = relative_error(analytic[name].reshape(-1)[flat_idx], numeric)
    for p in params.values():
        p.zero_grad()
    return errors
