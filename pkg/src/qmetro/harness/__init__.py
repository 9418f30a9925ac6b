"""Experiment harness: configuration, sweeps and CSV output."""
