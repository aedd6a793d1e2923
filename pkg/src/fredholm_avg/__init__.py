"""Spectral cut-off regularization of first-kind Fredholm equations with data averaging."""

__version__ = "0.1.0"

from .kernels import (  # noqa: E402
    Kernel,
    TrueSolution,
    deriv2_kernel,
    get_kernel,
    gravity_kernel,
    gravity_solution,
    heat_kernel,
    heat_solution,
    synthetic_solution,
    table_solution,
)
from .sampling import (  # noqa: E402
    GridSpec,
    NoisySample,
    admissible_averaging,
    apriori_factor,
    average,
    delta_from_snr,
    make_grid,
    sample_noisy,
)

__all__ = [
    "GridSpec",
    "Kernel",
    "NoisySample",
    "TrueSolution",
    "admissible_averaging",
    "apriori_factor",
    "average",
    "delta_from_snr",
    "deriv2_kernel",
    "get_kernel",
    "gravity_kernel",
    "gravity_solution",
    "heat_kernel",
    "heat_solution",
    "make_grid",
    "sample_noisy",
    "synthetic_solution",
    "table_solution",
]
