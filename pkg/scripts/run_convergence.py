"""Run the convergence rate on the hard instance.

Extra arguments are passed through, e.g. ``--paper --workers 8 --out results``.
"""

import sys

from grmdp.cli import main

if __name__ == "__main__":
    sys.exit(main(["converge", *sys.argv[1:]]))
