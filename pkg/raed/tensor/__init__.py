from raed.tensor.core import (
    ComputeGraph,
    Tensor,
    as_tensor,
    debug_checks_enabled,
    is_grad_enabled,
    no_grad,
    set_debug_checks,
)
from raed.tensor import ops

__all__ = [
    "ComputeGraph",
    "Tensor",
    "as_tensor",
    "debug_checks_enabled",
    "is_grad_enabled",
    "no_grad",
    "ops",
    "set_debug_checks",
]
