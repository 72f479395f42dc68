"""Diffraction tomography from measurements on an arbitrary closed curve."""

from .errors import (BoundaryAmbiguityError, ConvergenceError, CurvedtError, DomainError,
                     FormatError, GeometryError, ValidityError)
from .forward import GradientMatrix, MeasurementMatrix, simulate_gradients, simulate_measurements
from .geometry import BoundaryCurve, CurveSpec, reference_curve, sample_curve
from .kernels import ExtinctionSolver, KernelCache, ProjectionKernel, extinction_kernel, image_kernel
from .kspace import (Image, KSpacePlan, QGrid, Reconstruction, ReconstructionParams, plan,
                     reconstruct)
from .phantom import Phantom, ScatteringPotential, make_resolution_phantom, \
    make_shepp_logan_modified, phantom_to_q
from .virtual import KernelProvider, VirtualArrayData, VirtualLine, virtual_array

__version__ = "0.1.0"
