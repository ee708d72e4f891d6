"""Neutron scattering off a harmonically bound proton with a zero-range interaction."""
from .charge_kernel import (ChargeVector, KernelMatrix, SingularSystemError, assemble_K,
                            assemble_gamma_ref, gamma_boundary, kernel_K_value, scan_singular_set,
                            solve_gamma_system)
from .greens import (BoundarySide, ChannelSplit, ThresholdError, free_resolvent_gaussian,
                     helmholtz_kernel, potential_apply, product_integral, trace_plane_source)
from .oscillator import (Channel, HermiteBasis, ModelParams, MultiIndex, eigenfunction_value,
                         enumerate_shell, form_factor, hermite_gauss_ft, hermite_poly)
from .scattering import (Amplitude, CrossSectionTable, amplitude_general, eigenfunction_eval,
                         scattering_length_conversion, sigma_total_elastic, solve_charge, t_born,
                         xsec_born)

__all__ = [
    "Amplitude", "BoundarySide", "Channel", "ChannelSplit", "ChargeVector", "CrossSectionTable",
    "HermiteBasis", "KernelMatrix", "ModelParams", "MultiIndex", "SingularSystemError",
    "ThresholdError", "amplitude_general", "assemble_K", "assemble_gamma_ref",
    "eigenfunction_eval", "eigenfunction_value", "enumerate_shell", "form_factor",
    "free_resolvent_gaussian", "gamma_boundary", "helmholtz_kernel", "hermite_gauss_ft",
    "hermite_poly", "kernel_K_value", "potential_apply", "product_integral",
    "scan_singular_set", "scattering_length_conversion", "sigma_total_elastic", "solve_charge",
    "solve_gamma_system", "t_born", "trace_plane_source", "xsec_born",
]
