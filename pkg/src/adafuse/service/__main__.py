"""Host an n-gram model file behind the wire protocol.

Usage: python -m adafuse.service --model model.json [--host H] [--port P]
"""

from __future__ import annotations

import argparse
import sys

import uvicorn

from ..lm_core import ConfigError
from ..ngram_lm import NgramLM
from .app import create_app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="adafuse.service")
    parser.add_argument("--model", required=True, help="n-gram model file")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8500)
    args = parser.parse_args(argv)
    try:
        provider = NgramLM.load(args.model)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    app = create_app(provider)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
