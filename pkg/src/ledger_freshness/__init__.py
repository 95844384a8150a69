"""Ledger Freshness package.

Age-of-information analysis for sensor updates that are committed through a
permissioned blockchain: closed forms, a Monte Carlo oracle and the harness
that compares them.
"""

__version__ = "0.1.0"
