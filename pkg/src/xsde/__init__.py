"""Series-expansion solver for linear stochastic differential equations with delays."""

from .errors import (
    CausalityError,
    ConfigError,
    ConvergenceError,
    DivergenceError,
    InfeasibleShiftError,
    InsufficientHistoryError,
    NumericalIntegrityError,
    PoleError,
    UnsupportedOperatorError,
    XsdeError,
)
from .grid import TimeGrid
from .kernels import DelayKernel, HistoryFunction, convolve_history, curve, fourier
from .learning import (
    ConnectivityMatrix,
    LearningProblem,
    equilibrium_fixed_point,
    leading_order,
    simulate_coupled,
)
from .presets import HeatPreset, ou_problem
from .solver import (
    BrownianPath,
    ExpansionConfig,
    Problem,
    SolutionField,
    assemble_forcing,
    euler_maruyama,
    expand,
    residual,
    sample_brownian,
)
from .spectral import SpaceOperator, SpectralReport, contraction_ratio, per_mode_ratios, search_l
from .timeops import ToeplitzKernel, apply, apply_atomic, build_kernels, sample_kernel_ifft

__version__ = "0.1.0"
