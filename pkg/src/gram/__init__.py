"""Binaural scene synthesis, masked-autoencoder pretraining and evaluation."""

__version__ = "0.1.0"

from ._kernels import backend_name  # noqa: F401
