from __future__ import annotations

import argparse
from typing import Callable, Dict, List, Optional, Sequence

from raed.utils.errors import ConfigError
from raed.utils.logging import get_logger

log = get_logger(__name__)

Handler = Callable[[argparse.Namespace], int]


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors surface as ConfigError so the entry point prints them in
    the same one-line format as every other failure."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(message)


class Router:
    """Maps sub-command names to handlers, like a bot dispatcher maps
    commands; routers can be nested with `include_router`."""

    def __init__(self) -> None:
        self._handlers: Dict[str, Handler] = {}

    def command(self, name: str) -> Callable[[Handler], Handler]:
        def register(fn: Handler) -> Handler:
            if name in self._handlers:
                raise RuntimeError(f"command registered twice: {name}")
            self._handlers[name] = fn
            return fn

        return register

    def include_router(self, other: "Router") -> None:
        for name, fn in other._handlers.items():
            self.command(name)(fn)

    @property
    def commands(self) -> List[str]:
        return sorted(self._handlers)

    def dispatch(self, args: argparse.Namespace) -> int:
        handler = self._handlers.get(args.command)
        if handler is None:
            raise ConfigError(f"unknown command: {args.command}")
        log.debug("dispatch command=%s", args.command)
        return handler(args)


def _add_train(sub) -> None:
    p = sub.add_parser("train", help="train an encoder-decoder model")
    p.add_argument("--config", help="experiment TOML")
    p.add_argument("--train", required=True, dest="train_manifest", help="training split manifest")
    p.add_argument("--dev", required=True, dest="dev_manifest", help="validation split manifest")
    p.add_argument("--run-dir", required=True, help="output directory for checkpoints and metrics")
    p.add_argument("--arch", choices=["transformer", "las"])
    p.add_argument("--relax-gamma", type=float, help="relaxation coefficient (0 disables)")
    p.add_argument("--relax-learned", action="store_true", help="learn one coefficient per decoder block")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--select-by", choices=["ter", "wer-lm"])
    p.add_argument("--lm", help="LM checkpoint, needed for --select-by wer-lm")


def _add_decode(sub) -> None:
    p = sub.add_parser("decode", help="beam-search decode a split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="experiment TOML supplying [fusion] defaults")
    p.add_argument("--beam", type=int)
    p.add_argument("--lm", help="LM checkpoint for shallow fusion")
    p.add_argument("--lm-weight", type=float)
    p.add_argument("--no-lm", action="store_true")
    p.add_argument("--nbest", type=int)
    p.add_argument("--eos-factor", type=float)
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--dump-attention", action="store_true")
    p.add_argument("--workers", type=int, default=1)


def _add_score(sub) -> None:
    p = sub.add_parser("score", help="WER/CER of hypotheses against references")
    p.add_argument("ref")
    p.add_argument("hyp")
    p.add_argument("--json", dest="json_out", help="write the structured report here")
    p.add_argument("--summary-only", action="store_true")


def _add_analyze(sub) -> None:
    p = sub.add_parser("analyze-attention", help="compare attention entropy of two dumps")
    p.add_argument("baseline")
    p.add_argument("relaxed")
    p.add_argument("--json", dest="json_out")


def _add_gen_data(sub) -> None:
    p = sub.add_parser("gen-data", help="generate the synthetic transduction dataset")
    p.add_argument("spec", nargs="?", help="TOML with a [data] section")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _add_lm_train(sub) -> None:
    p = sub.add_parser("lm-train", help="train the token LM on a split's transcripts")
    p.add_argument("manifest")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="LM checkpoint path")
    p.add_argument("--seed", type=int)


def _add_grid(sub) -> None:
    p = sub.add_parser("grid", help="seeds x relaxation sweep with and without LM")
    p.add_argument("--config")
    p.add_argument("--data", required=True, help="directory written by gen-data")
    p.add_argument("--lm", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)


def create_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="raed", description="relaxed-attention encoder-decoder toolkit")
    parser.add_argument("--log-level", help="overrides RAED_LOG_LEVEL")
    parser.add_argument("--metrics-port", type=int, default=0, help="serve prometheus metrics on this port")
    parser.add_argument("--debug-checks", action="store_true", help="fail on any non-finite tensor")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)
    for add in (_add_gen_data, _add_lm_train, _add_train, _add_decode, _add_score, _add_analyze, _add_grid):
        add(sub)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return create_parser().parse_args(argv)
