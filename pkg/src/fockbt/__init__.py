"""Balanced truncation of bilinear and stochastic systems via Fock-space Hankel operators."""

__version__ = '0.1.0'

from .errors import *  # noqa: F401,F403
from .sysmodel import (BilinearSystem, ControlSignal, StabilityCertificate,  # noqa: F401
                       control_norms, stability_certificate, validate_system)
from .gramians import (GramianPair, gramian_direct, gramian_fixed_point,  # noqa: F401
                       gramian_series, h2_norm, solve_lyapunov)
from .balancing import balance, factor_psd, hankel_singular_values, truncate  # noqa: F401
from .errorbound import (bound_report, composite_system,  # noqa: F401
                         delta_hankel_trace_norm)
from .hankelfock import (FockGrid, assemble_hankel, hankel_svd,  # noqa: F401
                         laguerre_semigroup_moments, subspace_hankel, truncated_hankel)
from .volterra_sim import integrate_rk4, output_error, volterra_series  # noqa: F401
from .transfer import (FrequencyGrid, eval_Gk, eval_volterra_kernel,  # noqa: F401
                       mixed_hardy_norm, transfer_bound_check)
from .stochastic import (NoiseSpec, StochasticModel, energies, ms_stability,  # noqa: F401
                         simulate_sde, stochastic_bound_check, stochastic_gramians)
from .sysfile import parse_system, serialize_system  # noqa: F401
