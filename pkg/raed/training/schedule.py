from __future__ import annotations

from dataclasses import dataclass

from raed.config.schema import TrainConfig
from raed.utils.errors import TrainingError


@dataclass(frozen=True)
class TriStage:
    peak: float
    floor: float
    final: float
    warmup: int
    hold: int
    decay: int

    @classmethod
    def from_config(cls, config: TrainConfig, total_steps: int) -> "TriStage":
        warmup = int(round(config.warmup_frac * total_steps))
        hold = int(round(config.hold_frac * total_steps))
        return cls(
            peak=config.peak_lr,
            floor=config.peak_lr * config.init_lr_scale,
            final=config.peak_lr * config.final_lr_scale,
            warmup=warmup,
            hold=hold,
            decay=max(total_steps - warmup - hold, 0),
        )

    def __call__(self, step: int) -> float:
        if step < 0:
            raise TrainingError(f"step must be non-negative, got {step}")
        if step < self.warmup:
            return self.floor + (self.peak - self.floor) * step / self.warmup
        step -= self.warmup
        if step < self.hold:
            return self.peak
        step -= self.hold
        if step < self.decay:
            return self.peak * (self.final / self.peak) ** (step / self.decay)
        return self.final


def tri_stage_lr(step: int, config: TrainConfig, total_steps: int) -> float:
    """Linear warmup from the floor, hold at peak, exponential decay to the final rate."""
    return TriStage.from_config(config, total_steps)(step)
