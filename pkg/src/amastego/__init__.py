"""Adversarial embedding with minimum alteration for grayscale steganography."""

__version__ = "0.1.0"
