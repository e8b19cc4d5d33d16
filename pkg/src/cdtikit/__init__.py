"""cdtikit: complex-valued and real U-Nets for SMS cardiac diffusion MRI.

Subsystems: an autodiff tensor core (`tensor`), real/complex network
operators (`nn`), the U-Net variant builder (`nn.unet`), diffusion tensor
fitting and maps (`dti`), evaluation metrics and statistics (`metrics`),
synthetic phantom/leakage data generation (`phantom`, `dataset`), and the
training/comparison harness (`training`, `cli`).
"""

from .backends import BACKEND_NAME
from .tensor import Tensor, no_grad

__all__ = ["Tensor", "no_grad", "BACKEND_NAME"]
__version__ = "0.1.0"
