"""Latent rectified-flow change detection.

Bi-temporal image pairs are turned into a conditioning signal, a velocity
network transports Gaussian noise to change-mask latents, and an ensemble of
generations yields a binary mask plus a per-pixel confidence map.
"""

__version__ = "0.1.0"
