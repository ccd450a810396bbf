from raed.decoding.beam import Hypothesis, beam_search, greedy_decode, strip_eos
from raed.decoding.fusion import fuse
from raed.decoding.lm import ToyLm, load_lm, perplexity, save_lm, train_toy_lm

__all__ = [
    "Hypothesis",
    "ToyLm",
    "beam_search",
    "fuse",
    "greedy_decode",
    "load_lm",
    "perplexity",
    "save_lm",
    "strip_eos",
    "train_toy_lm",
]
