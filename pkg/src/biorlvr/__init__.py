"""Verifiable-reward biological QA factory and a desk-scale RLVR laboratory."""

__version__ = "0.1.0"
