"""Placement of multi-version service components across a three-tier edge/cloud infrastructure."""

__version__ = "0.1.0"
