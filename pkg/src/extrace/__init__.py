"""Numerical engine for feedback traces on contractions, LSI frequency
semantics, the qWhile toy language, and weakly-measured Grover loops."""

from .kappa import (
    GroverParams,
    KappaMeasurement,
    RuntimeBound,
    build_E,
    grover_montecarlo,
    grover_recurrence,
    grover_runtime_bound,
    grover_statevector,
    guarantee_f,
    kappa_measure,
    robustness_g,
    runtime_bound,
    theta,
    verify_guarantee,
)
from .linalg import (
    LinalgError,
    Partition,
    PartitionedMap,
    classify,
    matrix_from_literal,
    matrix_to_literal,
    operator_norm,
    two_block,
)
from .lsi import (
    FirKernel,
    FrequencyResponse,
    Signal,
    convolve,
    dtft,
    lsi_classify,
    lsi_ex,
    parseval_norm,
)
from .qwhile import check, parse, parse_source, semantics
from .trace import (
    KiTraceError,
    SeriesDivergence,
    TraceConfig,
    TraceResult,
    check_trace_axioms,
    cnu_decompose,
    ex,
    ex_kernel_image,
    ex_series,
    halmos_dilation,
)

__version__ = "0.1.0"
