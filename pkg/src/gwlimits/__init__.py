"""Gaussian 2-Wasserstein distance: closed form, Frechet derivatives, limit laws and inference."""

from .errors import (
    DegenerateSample,
    DomainError,
    GWError,
    InvalidInput,
    NearNullDegenerate,
    NotSpd,
    ParseError,
)
from .frechet import (
    CUBE,
    EXP,
    IDENTITY,
    LOG,
    SQRT,
    SQUARE,
    GWDerivatives,
    PerturbationPair,
    ScalarFunction,
    SpectralCalculus,
    apply_spectral,
    d2_gw,
    d2_spectral_taylor,
    d_gw,
    d_gw_one_sample,
    d_spectral,
    divided_difference_1,
    divided_difference_2,
)
from .gw import (
    GaussianMeasure,
    empirical_gaussian,
    gw2,
    gw_hat,
    gw_hat2,
    sample_gaussian,
    w2_empirical_1d,
)
from .inference import (
    BootstrapDistribution,
    Interval,
    Site,
    TestReport,
    bootstrap_m_of_n,
    bootstrap_n_of_n,
    ci_one_sample,
    ci_two_sample,
    protein_batch_test,
    test_equality,
    test_neighborhood,
)
from .limitlaw import (
    LimitLawSample,
    VarianceReport,
    one_sample_variance,
    quantile,
    sample_limit_null,
    two_sample_variance,
    variance_oracle,
)
from .rng import DEFAULT_SEED, make_rng
from .symmat import (
    EigenDecomposition,
    as_spd,
    as_symmetric,
    min_eigenvalue,
    sample_wigner,
    spd_inv_sqrt,
    spd_sqrt,
    symmetric_eig,
    trace_product,
)

__version__ = "0.1.0"

__all__ = [
    name
    for name, obj in list(globals().items())
    if not name.startswith("_") and getattr(obj, "__module__", "").startswith("gwlimits")
] + ["DEFAULT_SEED"]
