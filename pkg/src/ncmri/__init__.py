"""3D multi-coil non-Cartesian MRI reconstruction toolkit.

Trajectory generation, Kaiser-Bessel gridding NUFFT, Pipe-Menon density
compensation, parallel-imaging coil models, wavelet-FISTA and a trainable
unrolled density-compensated network, with a benchmark harness.
"""
from .base import (ArgumentError, ConfigError, FormatError, GuardError,
                   MatrixSize, NcmriError, NumericError)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "ConfigError", "FormatError", "GuardError",
    "MatrixSize", "NcmriError", "NumericError", "__version__",
]
