from __future__ import annotations

import sys
from typing import Optional, Sequence

from raed.cli.app import Router, parse_args
from raed.cli.handlers import router as main_router
from raed.config.settings import settings
from raed.tensor import set_debug_checks
from raed.utils.errors import ConfigError, RaedError, error_id
from raed.utils.logging import get_logger, init_logging
from raed.utils.messages import describe, init_messages
from raed.utils.metrics import start_metrics_server

log = get_logger(__name__)


def _fail(category: str, detail: str) -> None:
    print(f"error: {category}: {detail}", file=sys.stderr)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        init_logging(args.log_level or settings.LOG_LEVEL)
    except ConfigError as e:
        _fail(e.category, e.detail)
        return e.exit_code

    init_messages()
    set_debug_checks(args.debug_checks)
    start_metrics_server(args.metrics_port)

    router = Router()
    router.include_router(main_router)
    try:
        return router.dispatch(args)
    except RaedError as e:
        log.error("command=%s failed category=%s detail=%s hint=%s", args.command, e.category, e.detail, describe(e.category))
        _fail(e.category, e.detail)
        return e.exit_code
    except Exception as e:
        eid = error_id(e)
        log.exception("command=%s unexpected failure error_id=%s", args.command, eid)
        _fail("internal", f"{type(e).__name__}: {e} (error id {eid})")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
