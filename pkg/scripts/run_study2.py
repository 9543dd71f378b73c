#!/usr/bin/env python3
"""Single-value study at publication scale: 10000 replicates, 50 imputations.

Expect tens of minutes on a single core.  Extra arguments are forwarded to
the CLI and override the defaults, e.g. --nsim 1000 for the desk-scale run
used by the acceptance suite.
"""

import sys

from blendmatch.cli import main

if __name__ == "__main__":
    sys.exit(main(["study2", "--nsim", "10000", "--m", "50", "--out", "results/study2", *sys.argv[1:]]))
