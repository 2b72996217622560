#!/usr/bin/env python3
"""XYLab launcher: runs every command for one experiment file."""

import sys

from xylab.main import main

DEFAULT_CONFIG = "experiments/cosine.yaml"


def start(argv):
    """python start.py [config.yaml] [--threads N] [--out DIR]"""
    config = DEFAULT_CONFIG
    if argv and not argv[0].startswith("-"):
        config, argv = argv[0], argv[1:]
    print(f"🚀 xylab all --config {config}")
    return main(["all", "--config", config, *argv])


if __name__ == '__main__':
    sys.exit(start(sys.argv[1:]))
