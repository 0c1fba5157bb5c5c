"""Latent-space geometry for decoder-ensemble VAEs.

Subpackages: ``tensor`` (reverse-mode autodiff over numpy), ``datasets``,
``models``, ``training``, ``geometry`` (metrics, curve energies, geodesics,
grid oracle), ``evaluation`` (retraining-stability experiment) and ``cli``.
"""

__version__ = "0.1.0"
