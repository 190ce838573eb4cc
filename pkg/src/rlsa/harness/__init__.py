"""Experiment configuration, batch runs and the command-line interface."""
