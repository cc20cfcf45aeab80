"""
DUALID Unit Tests

This package contains unit tests for the core pipeline and the results ledger.
"""
