#!/usr/bin/env python3
"""Emit the 199-donor predictive-vs-Mahalanobis scatter for synthetic data.

Writes figure1.csv (columns index,pd,md), one row per donor, for a fresh
200-row synthetic sample with correlated predictors; plot md against pd to
see why the two metrics pick different donors.
"""

import sys

from blendmatch.cli import main

if __name__ == "__main__":
    sys.exit(main(["demo-figure1", "--out", "figure1.csv", *sys.argv[1:]]))
