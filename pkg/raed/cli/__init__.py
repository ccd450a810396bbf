from raed.cli.app import Router, create_parser, parse_args
from raed.cli.handlers import router

__all__ = ["Router", "create_parser", "parse_args", "router"]
