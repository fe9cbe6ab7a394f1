"""CAE-M: convolutional autoencoding memory network for multi-sensor anomaly detection."""

from .tensor import Tensor, backward, no_grad, parameter

__version__ = "0.1.0"

__all__ = ["Tensor", "backward", "no_grad", "parameter", "__version__"]
