"""
Command-line entry point.

    python -m app.main <subcommand> [flags]

Subcommands: riccati, enkf, ga-enkf, rollout, diagnose, smd, pendulum.
"""

import sys

from app.cli.routes import main

if __name__ == "__main__":
    sys.exit(main())
