"""Wave equations on the discrete torus with the nonlocal (Fourier multiplier)
partial derivative."""

from .calculus import conv_partial, kernel_closed_form, kernel_periodized, kernel_raw, stencil_laplacian
from .energy import energy_a, linear_energy, nlw_energy, strong_energy_check
from .experiments import counterexample_growth, faddeev_demo, isomorphism_check, lifespan_scan
from .lattice import Field, LatticeBox, WaveState, delta_field, make_box
from .norms import NormSpec, lp_alpha_norm, sobolev_seminorm, weak_l11_functional
from .solvers import (
    BlowupConfig,
    DiagonalMetric,
    EquationSpec,
    Nonlinearity,
    PicardConfig,
    SolverConfig,
    blowup_reference,
    evolve,
    picard_solve,
)
from .spectral import partial, propagator_pair

__version__ = "0.1.0"
