"""Experiment harness."""
