from __future__ import annotations

from prometheus_client import Counter, Gauge, start_http_server

from raed.utils.logging import get_logger

log = get_logger(__name__)

TRAIN_STEPS = Counter("raed_train_steps_total", "Optimizer steps taken")
TRAIN_LOSS = Gauge("raed_train_loss", "Loss of the most recent training batch")
LEARNING_RATE = Gauge("raed_learning_rate", "Current learning rate")
RELAX_GAMMA = Gauge("raed_relax_gamma", "Relaxation coefficient per decoder block", ["block"])
DECODED_UTTERANCES = Counter("raed_decoded_utterances_total", "Utterances decoded")


def start_metrics_server(port: int) -> None:
    if port and port > 0:
        start_http_server(port)
        log.info("metrics server started on :%d", port)
