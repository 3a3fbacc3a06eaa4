"""Gridless recovery of point sources from point-spread-function samples.

The package solves a weighted nonnegative sparse recovery problem over
measures by conditional gradient, constructs and verifies the dual
certificates that prove exact recovery without a separation condition, and
checks the Gaussian T-system identities behind that guarantee in exact
arithmetic.
"""

from .core import (
    Domain,
    GaussianPSF,
    PSFModel,
    SamplingMeasure,
    SourceConfiguration,
    make_weight_fn,
    psf_deriv_t,
    psf_eval,
    unit_weight_fn,
    weight,
    weight_deriv,
)
from .simulate import ObservationSet, PopulationSpec, add_noise, gen_population, synthesize
from .solver import (
    AtomicMeasure,
    SolveResult,
    SolverOptions,
    duality_gap,
    fully_corrective,
    lmo,
    local_refine,
    objective,
    residual_gradient,
    solve,
)
from .certificate import (
    Certificate,
    CertificateConditionError,
    ConditionReport,
    KernelEval,
    MarginReport,
    build_eps_matrix,
    build_limit_matrix,
    certificate_value,
    check_conditions,
    kernel,
    solve_certificate,
)
from .tsystems import (
    FSequenceReport,
    LemmaVerificationError,
    Polynomial,
    f_sequence_check,
    gauss_tsys_det,
    p_sequence,
    tsys_det_montecarlo,
)
from .scoring import MatchResult, UndefinedScoreError, f_score, greedy_match

__version__ = "0.1.0"
