"""msrd: multi-slice reconstruction from incomplete measurements.

Diffusion-sampled priors combined with physics-based data consistency for
undersampled MRI and 4D-STEM, executed by a deterministic slice-partitioned
runtime.
"""

__version__ = "0.1.0"

from .errors import DataError, MsrdError, NumericalError
from .types import ComplexVolume, DiffractionSet, KSpaceStack, ProbeParams, SamplingMask

__all__ = [
    "__version__",
    "MsrdError",
    "DataError",
    "NumericalError",
    "ComplexVolume",
    "KSpaceStack",
    "SamplingMask",
    "DiffractionSet",
    "ProbeParams",
]
