"""Uhlmann connections, holonomies and mixed-state geometric phases for
quasi-Hermitian (metric-equipped non-Hermitian) quantum systems."""

from . import errors
from .equivalence import (
    PurifiedState,
    correction_term,
    hermitian_connection,
    interferometer_readout,
    overlap_operator_side,
    purified_overlap,
    purify,
    similarity_map,
    to_hermitian,
)
from .models import (
    ClosedFormPhase,
    PTParams,
    TwoLevelTParams,
    pt_eigenstates,
    pt_equator_connection,
    pt_equator_holonomy,
    pt_equator_phase,
    pt_hamiltonian,
    pt_loop,
    pt_metric,
    pt_zero_t_amplitude,
    t_model_connection,
    t_model_critical_temperatures,
    t_model_hamiltonian,
    t_model_holonomy,
    t_model_loop,
    t_model_metric,
    t_model_phase,
)
from .qh_core import (
    BiorthogonalSystem,
    MetricOperator,
    biorthogonal_decompose,
    eta_adjoint,
    eta_trace,
    matrix_function,
    metric_sqrt,
    random_eta_unitary,
    random_metric,
    random_quasi_hermitian,
    verify_quasi_hermitian,
)
from .thermal import GibbsState, gibbs_state, purity_weight
from .uhlmann import (
    ConnectionSample,
    HolonomyResult,
    ParameterLoop,
    connection_at,
    d_sqrt_rho,
    find_transitions,
    generating_function,
    geometric_factor,
    holonomy,
    parallel_transport_residual,
    uhlmann_phase,
)

__version__ = "0.1.0"
