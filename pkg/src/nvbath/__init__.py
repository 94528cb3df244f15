"""NV-center spin decoherence in a dipolar nitrogen electron spin bath.

Classical Bloch-vector simulation of free induction decay and Hahn echo,
Monte-Carlo ensembles over random bath geometries, bath noise
spectroscopy, decay-law fitting, and an exact small-system quantum
oracle for validation.
"""

from .engine import KERNEL
from .errors import ConfigError, NumericalError

__version__ = "0.1.0"

__all__ = ["KERNEL", "ConfigError", "NumericalError", "__version__"]
