"""Tools for patch-based PDE emulators: spectral audits, patching with jitter,
tensor-law augmentation, normalization, a toy emulator, a throughput
simulator and rollout metrics."""

__version__ = "0.1.0"
