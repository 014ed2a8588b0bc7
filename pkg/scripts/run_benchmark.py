"""Run the method comparison on the benchmark environment.

Extra arguments are passed through, e.g. ``--paper --workers 8 --out results``.
"""

import sys

from grmdp.cli import main

if __name__ == "__main__":
    sys.exit(main(["bench", *sys.argv[1:]]))
