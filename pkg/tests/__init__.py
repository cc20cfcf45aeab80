"""
DUALID Test Suite

This package contains all tests for the DUALID dual-identity simulator.
"""
