"""Utility modules for bcm-infer."""
