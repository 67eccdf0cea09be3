"""Main entry point for the icgrasp command line."""

import sys

from icgrasp.cli.commands import run


def main() -> None:
    """Run the icgrasp command line and exit with its status."""
    sys.exit(run())


if __name__ == "__main__":
    main()
