"""raed: toy-scale attention-based encoder-decoder toolkit with relaxed attention."""

__version__ = "0.1.0"
