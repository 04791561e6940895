"""Slotted MAC with autonomous virtual-queue rotation for clustered acoustic sensor networks."""

__version__ = "0.1.0"
