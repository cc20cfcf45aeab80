"""
DUALID Models Package

SQLAlchemy models of the results ledger.
"""

from .ledger_model import Base, MetricRecord, Run

__all__ = [
    "Base",
    "MetricRecord",
    "Run",
]
