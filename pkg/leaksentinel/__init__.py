"""leaksentinel - deterministic desk model of a standoff acoustic leak detector"""

__version__ = "1.0.0"
