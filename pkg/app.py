"""
SGDCT fluctuation laboratory.

Command-line entry point: `python app.py <subcommand> ...`. File logging is
set up once the output directory is known; everything else lives in src/.
"""

import sys

from src.ui.cli import dispatch


def main() -> int:
    """Main entry point for the laboratory."""
    return dispatch(sys.argv[1:], setup_logging=True)


if __name__ == "__main__":
    sys.exit(main())
