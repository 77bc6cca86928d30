"""Cyclical batch size training for SGD."""
