"""Toy latent diffusion stack with a zero-convolution style modulation network."""

__version__ = "0.1.0"
