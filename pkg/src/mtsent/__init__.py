"""Multitask biLSTM sentiment classification with ordinal metrics and linear baselines."""

__version__ = "0.1.0"
