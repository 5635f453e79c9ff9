"""Noise sensitivity of top eigenvectors under random entry resampling.

Sample random symmetric matrix ensembles, resample k entries through an
exact coupling, measure eigenvector overlap and alignment across the
k ~ N^(5/3) threshold, and verify the variance-decomposition and
resolvent identities that drive the phenomenon.
"""

from .chaos import (
    BlackBoxFunction,
    BoundsReport,
    DecompositionTerms,
    ProductSpace,
    check_bounds,
    decomposition_exact,
    decomposition_mc,
    eigenvalue_adapter,
    variance_exact,
)
from .ensemble import (
    EntrySpec,
    IndexPairSet,
    SymmetricMatrix,
    apply_resample,
    resample_single,
    sample_pair_set,
    sample_wigner,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateGapError,
    DomainError,
    EigsensError,
    InvariantViolation,
    SizeBudgetError,
)
from .experiments import (
    ResultRow,
    SweepConfig,
    alignment_sweep,
    collapse_report,
    delocalization_study,
    key_inequality_probe,
    lambda_drift_study,
    lambda_variance_scaling,
    overlap_sweep,
    single_flip_study,
)
from .resolvent import (
    EigenBasis,
    ResolventBlock,
    SpectralPoint,
    edge_localization_check,
    eigvec_from_resolvent,
    resample_resolvent_diff,
    resolvent_entries,
    scale_L,
    zero_diag_resolvent_report,
)
from .rng import SeedContext
from .spectral import (
    EdgeSpectrum,
    EigenPair,
    align_sign,
    distance_stats,
    edge_eigensystem,
    overlap,
    top_eigenpair,
    top_two_eigenvalues,
)

__version__ = "0.1.0"
