"""Forward and inverse frequency-domain reflectometry on star networks.

The package models lossless transmission-line stars as Schrodinger
operators on a metric star graph, simulates the reflection coefficient
seen from the test branch, and runs the inverse stages: travel-time /
multiplicity recovery by pole peeling, potential-integral estimation from
resonance shifts, and full potential fitting from twin experiments.
"""

__version__ = "0.1.0"

from .errors import (AmbiguousMultiplicityError, DegenerateFrequencyError,
                     GeometryMismatchError, InsufficientDataError,
                     InvalidProfileError, NonConvergenceError,
                     ParameterError, ReflectKitError,
                     SingularTrajectoryError, TraceTooCoarseError,
                     WindowTooSmallError)
from .line_model import (BoundarySetting, BranchSpec, LineProfile,
                         StarNetwork, branch_log_derivative,
                         liouville_transform, make_network, node_coupling,
                         riccati_check, uniform_branch, uniform_profile)
from .forward import (HSamples, ReflectionTrace, SpectrumResult,
                      compact_spectrum, h_function, reflection_coefficient,
                      scattering_solution, sweep)
from .geometry import (GeometryEstimate, TanSumSamples, identify_geometry,
                       peel_geometry, tan_sum_from_trace)
from .potential import (BasisSpec, IntegralEstimate, PotentialEstimate,
                        ResonanceTable, assign_resonances,
                        characteristic_residual, detect_resonances,
                        estimate_potential_integrals, fit_potentials)
from .io import read_trace, write_json, write_trace
from .config import ExperimentConfig, load_config

__all__ = [
    "__version__",
    # errors
    "ReflectKitError", "InvalidProfileError", "ParameterError",
    "SingularTrajectoryError", "DegenerateFrequencyError",
    "TraceTooCoarseError", "AmbiguousMultiplicityError",
    "WindowTooSmallError", "GeometryMismatchError",
    "InsufficientDataError", "NonConvergenceError",
    # line model
    "BoundarySetting", "LineProfile", "BranchSpec", "StarNetwork",
    "liouville_transform", "node_coupling", "make_network",
    "branch_log_derivative", "riccati_check", "uniform_profile",
    "uniform_branch",
    # forward
    "ReflectionTrace", "HSamples", "SpectrumResult",
    "reflection_coefficient", "scattering_solution", "sweep",
    "h_function", "compact_spectrum",
    # geometry
    "TanSumSamples", "GeometryEstimate", "tan_sum_from_trace",
    "peel_geometry", "identify_geometry",
    # potential
    "ResonanceTable", "IntegralEstimate", "BasisSpec", "PotentialEstimate",
    "detect_resonances", "assign_resonances",
    "estimate_potential_integrals", "characteristic_residual",
    "fit_potentials",
    # io / config
    "read_trace", "write_trace", "write_json",
    "ExperimentConfig", "load_config",
]
