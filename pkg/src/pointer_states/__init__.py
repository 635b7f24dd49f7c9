"""Closed-form and oracle evolution of a spin measured by a damped oscillator pointer."""

__version__ = "0.1.0"

from .analytic import (characteristic_image, final_mixture, high_T_pointer, long_time_sector,
                       propagate, zero_T_pointer)
from .grids import GridSpec, Rep, SectorField, forward_partial_ft, inverse_partial_ft
from .observables import (TimeSeries, coherence_norm, coherent_fidelity, fit_decoherence_time,
                          purity, trace)
from .oracle import PDERunConfig, integrate_characteristic, integrate_pde, solve_pde
from .params import (NATURAL, Bath, DerivedConstants, PhysicalParams, Sector, SpinAmplitudes,
                     derive_constants, validate)
from .states import DensityMatrix, assemble_initial, build_state

__all__ = [
    "Bath", "DensityMatrix", "DerivedConstants", "GridSpec", "NATURAL", "PDERunConfig",
    "PhysicalParams", "Rep", "Sector", "SectorField", "SpinAmplitudes", "TimeSeries",
    "assemble_initial", "build_state", "characteristic_image", "coherence_norm",
    "coherent_fidelity", "derive_constants", "final_mixture", "fit_decoherence_time",
    "forward_partial_ft", "high_T_pointer", "integrate_characteristic", "integrate_pde",
    "inverse_partial_ft", "long_time_sector", "propagate", "purity", "solve_pde", "trace",
    "validate", "zero_T_pointer",
]
