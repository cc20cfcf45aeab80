"""
DUALID - dual-identity ISAC UAV network simulator.
"""

import sys

from dualid.cli import main

if __name__ == "__main__":
    sys.exit(main())
