"""Experiment runner: configuration, stage pipeline and command line."""
