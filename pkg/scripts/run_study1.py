#!/usr/bin/env python3
"""Full factorial study at publication scale: 168 cells x 1000 replicates.

Expect roughly an hour on a single core; pass --threads N to spread cells
over worker processes (results are identical for any worker count).
Extra arguments are forwarded to the CLI and override the defaults below,
e.g. --nsim 200 for the reduced-scale run or --mechanism mar_right for a
half grid.
"""

import sys

from blendmatch.cli import main

if __name__ == "__main__":
    sys.exit(main(["study1", "--nsim", "1000", "--out", "results/study1", *sys.argv[1:]]))
