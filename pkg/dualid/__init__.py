"""
DUALID - dual-identity mapping, tracking and Sybil detection for ISAC UAV networks.
"""

__version__ = "0.1.0"
