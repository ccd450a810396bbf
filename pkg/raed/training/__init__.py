from raed.training.augment import spec_augment
from raed.training.loss import smoothed_cross_entropy
from raed.training.optim import AdamState, adam_step
from raed.training.schedule import tri_stage_lr

__all__ = ["AdamState", "adam_step", "smoothed_cross_entropy", "spec_augment", "tri_stage_lr"]
