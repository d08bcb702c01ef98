"""Design, certification and simulation of k-dimensional agreement protocols."""

from .design import (
    AgreementCertificate,
    DesignProblem,
    KernelParameterization,
    certify,
    design,
    design_complete,
    kernel_parameterization,
    optimize_deflated_numerical,
    optimize_essential_spectral,
    sample_reachable_weights,
)
from .estimator import AgreementProjector
from .exceptions import *  # noqa: F401,F403
from .graph import (
    Digraph,
    EdgeParameters,
    HamiltonianDecomposition,
    charpoly_coefficients,
    check_necessary,
    enumerate_decompositions,
    find_sufficient_partition,
    generate_graph,
    is_strongly_connected,
    partition_violations,
)
from .linalg import (
    AbscissaReport,
    ProjectionWeights,
    abscissas,
    build_projection,
    decompose_projection,
    matrix_exponential,
)
from .simulation import InputSignal, SimTrace, iss_report, simulate_static, simulate_tracking

__version__ = "0.1.0"
