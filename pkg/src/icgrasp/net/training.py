"""Gradients, AdamW with a warmup-cosine schedule, and the optimizer step."""

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Mapping, Optional

import torch
from torch import Tensor, nn
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR

from ..core.errors import InvalidArgumentError, InvalidStateError


def warmup_cosine(step: int, total_steps: int, warmup_steps: int) -> float:
    """Learning-rate multiplier: linear from 0 over the warmup, then cosine down to 0."""
    if warmup_steps > 0 and step < warmup_steps:
        return step / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def _constant(step: int) -> float:
    return 1.0


@dataclass
class OptimizerState:
    """AdamW plus its schedule; one ``optimize_step`` advances both."""

    optimizer: AdamW
    scheduler: LambdaLR

    @property
    def step_count(self) -> int:
        return int(self.scheduler.last_epoch)

    @property
    def lr(self) -> float:
        return float(self.optimizer.param_groups[0]["lr"])


def make_optimizer(
    params: Mapping[str, nn.Parameter],
    lr: float,
    weight_decay: float,
    total_steps: Optional[int] = None,
    warmup_steps: int = 0,
) -> OptimizerState:
    """AdamW over named parameters.

    Args:
        params: Named parameters, e.g. ``dict(model.named_parameters())``
        lr: Peak learning rate
        weight_decay: Decoupled weight decay
        total_steps: Schedule length; constant learning rate when None
        warmup_steps: Linear warmup steps
    """
    optimizer = AdamW(list(params.values()), lr=lr, weight_decay=weight_decay)
    if total_steps is None:
        schedule: Callable[[int], float] = _constant
    else:
        schedule = partial(warmup_cosine, total_steps=total_steps, warmup_steps=warmup_steps)
    return OptimizerState(optimizer, LambdaLR(optimizer, schedule))


def backward(loss: Tensor, params: Mapping[str, nn.Parameter]) -> Dict[str, Tensor]:
    """Reverse-mode gradients of a scalar loss for every named parameter.

    Parameters the loss does not depend on get an exact zero gradient.

    Raises:
        InvalidStateError: If ``loss`` was not produced by a recorded forward pass
    """
    if not isinstance(loss, Tensor) or loss.grad_fn is None or loss.numel() != 1:
        raise InvalidStateError("backward needs a scalar loss from a recorded forward pass")
    names = list(params)
    tensors = [params[n] for n in names]
    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    return {
        name: torch.zeros_like(p) if g is None else g.detach()
        for name, p, g in zip(names, tensors, grads)
    }


def accumulate(
    total: Optional[Dict[str, Tensor]], grads: Dict[str, Tensor], scale: float
) -> Dict[str, Tensor]:
    """Add scaled gradients into a running sum (in the caller's fixed batch order)."""
    if total is None:
        return {name: g * scale for name, g in grads.items()}
    for name, g in grads.items():
        total[name] = total[name] + g * scale
    return total


def optimize_step(
    params: Mapping[str, nn.Parameter], grads: Mapping[str, Tensor], state: OptimizerState
) -> Mapping[str, nn.Parameter]:
    """One AdamW step with the current scheduled learning rate, then advance the schedule.

    Raises:
        InvalidArgumentError: If a gradient is missing or its shape does not match its parameter
    """
    for name, p in params.items():
        if name not in grads:
            raise InvalidArgumentError(f"missing gradient for {name}")
        if tuple(grads[name].shape) != tuple(p.shape):
            raise InvalidArgumentError(
                f"gradient shape {tuple(grads[name].shape)} does not match {name} {tuple(p.shape)}"
            )
    with torch.no_grad():
        for name, p in params.items():
            p.grad = grads[name].to(p.dtype).clone()
    state.optimizer.step()
    state.scheduler.step()
    return params
