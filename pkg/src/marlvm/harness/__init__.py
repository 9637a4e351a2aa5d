"""Data formats, synthetic data, metrics, verification and the command line."""
